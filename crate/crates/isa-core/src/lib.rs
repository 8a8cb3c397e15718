//! Fixed-length representations for variable-length multivariate sequences.
//!
//! An encoder LSTM summarizes a sequence into its final hidden state; two
//! reconstruction branches — whole-sequence decoding from that summary and
//! next-step prediction from each hidden state — are trained jointly on an
//! alpha-weighted loss, optionally with a temporal-stamp channel appended
//! to the observations. Dynamic time warping distances to a vocabulary
//! provide the baseline representation for comparison.
//!
//! The crate is self-contained: dense linear algebra, analytic gradients,
//! the RMSprop training loop, checkpointing, synthetic data generation and
//! k-NN evaluation are all implemented here.

pub mod data;
pub mod dtw;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod net;
pub mod params;
pub mod sequence;
pub mod stop;
pub mod train;

pub use data::{CircleSpec, Dataset, NormalizationStats};
pub use dtw::{dtw_distance, dtw_representation, DtwConfig, LocalMetric};
pub use error::{Error, Result};
pub use eval::{accuracy, evaluate_pipeline, knn_classify, semi_sup_run, RepresentationSet, SemiSupReport};
pub use linalg::{Matrix, Rng, Vector};
pub use params::{IsaGradients, IsaParameters};
pub use sequence::{Representation, Sequence};
pub use stop::{augment, augment_batch, stop_value, strip, StopFeatureConfig, StopMechanism};
pub use train::{
    clip_gradients, load_checkpoint, rmsprop_step, save_checkpoint, select_hyperparams, train,
    Precision, RmspropState, TrainConfig, TrainHistory,
};
