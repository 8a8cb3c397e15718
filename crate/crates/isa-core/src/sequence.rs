use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// A variable-length multivariate observation sequence.
///
/// `obs` is a T×D matrix whose rows are the observations x_1..x_T. The
/// optional label is a class index used only by evaluation code; the
/// models themselves never see it.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub id: String,
    pub label: Option<usize>,
    obs: Matrix,
}

impl Sequence {
    /// Validates T >= 1, D >= 1 and finiteness of every entry.
    ///
    /// Single-observation sequences are allowed (DTW accepts them); the
    /// next-step prediction loss separately rejects anything shorter than
    /// two steps.
    pub fn new(id: impl Into<String>, label: Option<usize>, obs: Matrix) -> Result<Self> {
        let id = id.into();
        if obs.rows() < 1 {
            return Err(Error::data(format!("sequence '{id}' has no observations")));
        }
        if obs.cols() < 1 {
            return Err(Error::data(format!("sequence '{id}' has zero feature width")));
        }
        if !obs.is_finite() {
            return Err(Error::data(format!(
                "sequence '{id}' contains non-finite values"
            )));
        }
        Ok(Sequence { id, label, obs })
    }

    /// Number of time steps T.
    pub fn len(&self) -> usize {
        self.obs.rows()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees at least one observation
    }

    /// Feature width D.
    pub fn width(&self) -> usize {
        self.obs.cols()
    }

    pub fn obs(&self) -> &Matrix {
        &self.obs
    }

    /// Observation at step `t` (0-based row index).
    pub fn observation(&self, t: usize) -> Vector {
        self.obs.row_vector(t)
    }

    pub fn observation_slice(&self, t: usize) -> &[f64] {
        self.obs.row(t)
    }
}

/// Fixed-length summary of one sequence: the final encoder hidden state.
#[derive(Clone, Debug, PartialEq)]
pub struct Representation {
    pub z: Vector,
    pub source_id: String,
}

impl Representation {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}
