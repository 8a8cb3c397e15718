//! Temporal-stamp channel appended to each observation.
//!
//! The stop value v_t ∈ (0, 1] rises monotonically with t and reaches 1 at
//! the final step, giving the reconstruction process a sense of how far
//! through the sequence it is. Three schedules are supported:
//!
//! * linear: v_t = t / T
//! * tanh:   v_t = tanh(γ · t/T) + 1 − tanh(γ)   (fast start, flat end)
//! * exp:    v_t = exp(γ · (t − T) / T)          (slow start, fast end)

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::sequence::Sequence;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopMechanism {
    None,
    Linear,
    Tanh,
    Exp,
}

impl StopMechanism {
    pub fn name(&self) -> &'static str {
        match self {
            StopMechanism::None => "none",
            StopMechanism::Linear => "linear",
            StopMechanism::Tanh => "tanh",
            StopMechanism::Exp => "exp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(StopMechanism::None),
            "linear" => Ok(StopMechanism::Linear),
            "tanh" => Ok(StopMechanism::Tanh),
            "exp" => Ok(StopMechanism::Exp),
            other => Err(Error::Config(format!(
                "unknown stop mechanism '{other}' (expected none|linear|tanh|exp)"
            ))),
        }
    }
}

/// Stop-channel configuration. `gamma` steers the curvature of the tanh
/// and exp schedules and is ignored by none/linear.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopFeatureConfig {
    pub mechanism: StopMechanism,
    pub gamma: f64,
}

impl StopFeatureConfig {
    pub fn none() -> Self {
        StopFeatureConfig {
            mechanism: StopMechanism::None,
            gamma: 1.0,
        }
    }

    pub fn new(mechanism: StopMechanism, gamma: f64) -> Result<Self> {
        if matches!(mechanism, StopMechanism::Tanh | StopMechanism::Exp)
            && !(gamma > 0.0 && gamma.is_finite())
        {
            return Err(Error::Config(format!(
                "stop mechanism {} requires gamma > 0, got {gamma}",
                mechanism.name()
            )));
        }
        Ok(StopFeatureConfig { mechanism, gamma })
    }

    pub fn is_active(&self) -> bool {
        self.mechanism != StopMechanism::None
    }

    /// Width a raw sequence of width `d` has after augmentation.
    pub fn augmented_width(&self, d: usize) -> usize {
        if self.is_active() {
            d + 1
        } else {
            d
        }
    }
}

/// Stop value at step `t` of `1..=len`. The `none` mechanism has no stop
/// value and is rejected, as is an out-of-range step.
pub fn stop_value(t: usize, len: usize, cfg: &StopFeatureConfig) -> Result<f64> {
    if len < 1 || t < 1 || t > len {
        return Err(Error::Config(format!(
            "stop step {t} outside 1..={len}"
        )));
    }
    let frac = t as f64 / len as f64;
    match cfg.mechanism {
        StopMechanism::None => Err(Error::Config("mechanism 'none' has no stop value".into())),
        StopMechanism::Linear => Ok(frac),
        StopMechanism::Tanh => Ok((cfg.gamma * frac).tanh() + 1.0 - cfg.gamma.tanh()),
        StopMechanism::Exp => Ok((cfg.gamma * (t as f64 - len as f64) / len as f64).exp()),
    }
}

/// Appends the stop channel as a final column. The `none` mechanism
/// returns the sequence unchanged.
pub fn augment(s: &Sequence, cfg: &StopFeatureConfig) -> Sequence {
    if !cfg.is_active() {
        return s.clone();
    }
    let steps = s.len();
    let d = s.width();
    let mut m = Matrix::zeros(steps, d + 1);
    for t in 0..steps {
        let row = m.row_mut(t);
        row[..d].copy_from_slice(s.observation_slice(t));
        row[d] = stop_value(t + 1, steps, cfg).expect("in-range step");
    }
    Sequence::new(s.id.clone(), s.label, m).expect("augmenting a valid sequence")
}

/// Augments every sequence of a batch.
pub fn augment_batch(batch: &[Sequence], cfg: &StopFeatureConfig) -> Vec<Sequence> {
    if !cfg.is_active() {
        return batch.to_vec();
    }
    batch.iter().map(|s| augment(s, cfg)).collect()
}

/// Drops the final column (the stop channel). Rejects width-1 sequences,
/// which have nothing left to report.
pub fn strip(s: &Sequence) -> Result<Sequence> {
    let d = s.width();
    if d < 2 {
        return Err(Error::Shape(format!(
            "cannot strip the stop channel from width-{d} sequence '{}'",
            s.id
        )));
    }
    let steps = s.len();
    let mut m = Matrix::zeros(steps, d - 1);
    for t in 0..steps {
        m.row_mut(t).copy_from_slice(&s.observation_slice(t)[..d - 1]);
    }
    Sequence::new(s.id.clone(), s.label, m)
}
