//! Dynamic time warping distance and vocabulary-based representations.
//!
//! Classic dynamic program over the T_a×T_b alignment grid with the
//! symmetric step set {advance a, advance b, advance both}. The local cost
//! defaults to the plain Euclidean distance between observations so a
//! one-cell grid reduces to the point distance; squared Euclidean is kept
//! as an option. A distance vector against a fixed vocabulary of sequences
//! is the fixed-length baseline representation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::sequence::Sequence;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalMetric {
    Euclidean,
    SquaredEuclidean,
}

impl LocalMetric {
    pub fn name(&self) -> &'static str {
        match self {
            LocalMetric::Euclidean => "euclidean",
            LocalMetric::SquaredEuclidean => "squared_euclidean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(LocalMetric::Euclidean),
            "squared_euclidean" | "squared" => Ok(LocalMetric::SquaredEuclidean),
            other => Err(Error::Config(format!(
                "unknown metric '{other}' (expected euclidean|squared_euclidean)"
            ))),
        }
    }

    fn cost(&self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        match self {
            LocalMetric::Euclidean => sq.sqrt(),
            LocalMetric::SquaredEuclidean => sq,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtwConfig {
    /// Sakoe–Chiba band: cells with |i - j| beyond this radius are
    /// unreachable. `None` leaves the grid unconstrained. When the band
    /// admits no path at all (radius smaller than the length difference)
    /// the distance is +infinity.
    pub band_radius: Option<usize>,
    pub metric: LocalMetric,
    /// Divide the accumulated cost by T_a + T_b. Off by default.
    pub normalize: bool,
}

impl Default for DtwConfig {
    fn default() -> Self {
        DtwConfig {
            band_radius: None,
            metric: LocalMetric::Euclidean,
            normalize: false,
        }
    }
}

/// Accumulated cost of the optimal monotone alignment of `a` and `b`.
///
/// Two-row rolling dynamic program; memory is O(min grid side) of one row.
pub fn dtw_distance(a: &Sequence, b: &Sequence, cfg: &DtwConfig) -> Result<f64> {
    if a.width() != b.width() {
        return Err(Error::Shape(format!(
            "dtw: sequences '{}' (width {}) and '{}' (width {}) differ in width",
            a.id,
            a.width(),
            b.id,
            b.width()
        )));
    }
    let ta = a.len();
    let tb = b.len();
    let inf = f64::INFINITY;

    // prev[j] = D(i-1, j), curr[j] = D(i, j); D(0,0) = 0 and the remaining
    // border is unreachable.
    let mut prev = vec![inf; tb + 1];
    let mut curr = vec![inf; tb + 1];
    prev[0] = 0.0;
    for i in 1..=ta {
        curr[0] = inf;
        for j in 1..=tb {
            if let Some(r) = cfg.band_radius {
                if i.abs_diff(j) > r {
                    curr[j] = inf;
                    continue;
                }
            }
            let best = prev[j].min(curr[j - 1]).min(prev[j - 1]);
            curr[j] = if best.is_finite() {
                cfg.metric.cost(a.observation_slice(i - 1), b.observation_slice(j - 1)) + best
            } else {
                inf
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    let total = prev[tb];
    if cfg.normalize && total.is_finite() {
        Ok(total / (ta + tb) as f64)
    } else {
        Ok(total)
    }
}

/// Distance vector from `x` to every vocabulary entry, in vocabulary order.
pub fn dtw_representation(x: &Sequence, vocabulary: &[Sequence], cfg: &DtwConfig) -> Result<Vector> {
    if vocabulary.is_empty() {
        return Err(Error::Config("dtw representation needs a nonempty vocabulary".into()));
    }
    let mut out = Vec::with_capacity(vocabulary.len());
    for v in vocabulary {
        out.push(dtw_distance(x, v, cfg)?);
    }
    Ok(Vector::from_vec(out))
}
