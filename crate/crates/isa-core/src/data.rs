//! Synthetic circle data, sequence-file IO, normalization and splits.
//!
//! The sequence file format is UTF-8 JSON lines, one record per line:
//! `{"id": "...", "label": 3, "features": [[...], ...]}` with `label`
//! omitted for unlabeled sequences. Floats are written in shortest
//! round-trip decimal form, so save → load reproduces values exactly.

use std::f64::consts::TAU;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};
use crate::sequence::Sequence;

/// Per-feature mean and population standard deviation fitted on a
/// designated subset; kept so transformed data can be mapped back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-12;

impl NormalizationStats {
    /// Pools every observation of every sequence in `fit`.
    pub fn fit(fit: &[Sequence]) -> Result<Self> {
        let first = fit
            .first()
            .ok_or_else(|| Error::Config("normalization fit subset is empty".into()))?;
        let d = first.width();
        let mut count = 0usize;
        let mut sum = vec![0.0; d];
        let mut sumsq = vec![0.0; d];
        for s in fit {
            if s.width() != d {
                return Err(Error::data(format!(
                    "fit subset mixes widths {d} and {} (sequence '{}')",
                    s.width(),
                    s.id
                )));
            }
            for t in 0..s.len() {
                for (j, &x) in s.observation_slice(t).iter().enumerate() {
                    sum[j] += x;
                    sumsq[j] += x * x;
                }
            }
            count += s.len();
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sumsq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| (sq / n - m * m).max(0.0).sqrt())
            .collect();
        Ok(NormalizationStats { mean, std })
    }

    /// z-scores one sequence; features with vanishing spread are only
    /// mean-centered.
    pub fn apply(&self, s: &Sequence) -> Result<Sequence> {
        self.transform(s, false)
    }

    /// Inverse of `apply`.
    pub fn invert(&self, s: &Sequence) -> Result<Sequence> {
        self.transform(s, true)
    }

    fn transform(&self, s: &Sequence, inverse: bool) -> Result<Sequence> {
        if s.width() != self.mean.len() {
            return Err(Error::Shape(format!(
                "normalization stats cover {} features, sequence '{}' has {}",
                self.mean.len(),
                s.id,
                s.width()
            )));
        }
        let mut m = Matrix::zeros(s.len(), s.width());
        for t in 0..s.len() {
            let row = m.row_mut(t);
            for (j, &x) in s.observation_slice(t).iter().enumerate() {
                let scaled = self.std[j] >= STD_FLOOR;
                row[j] = match (inverse, scaled) {
                    (false, true) => (x - self.mean[j]) / self.std[j],
                    (false, false) => x - self.mean[j],
                    (true, true) => x * self.std[j] + self.mean[j],
                    (true, false) => x + self.mean[j],
                };
            }
        }
        Sequence::new(s.id.clone(), s.label, m)
    }
}

/// A collection of sequences sharing one feature width.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    pub sequences: Vec<Sequence>,
    pub class_names: Option<Vec<String>>,
    pub stats: Option<NormalizationStats>,
}

impl Dataset {
    pub fn new(sequences: Vec<Sequence>) -> Result<Self> {
        let ds = Dataset {
            sequences,
            class_names: None,
            stats: None,
        };
        ds.check_widths()?;
        Ok(ds)
    }

    fn check_widths(&self) -> Result<()> {
        if let Some(first) = self.sequences.first() {
            let d = first.width();
            for s in &self.sequences {
                if s.width() != d {
                    return Err(Error::data(format!(
                        "dataset mixes widths {d} (sequence '{}') and {} (sequence '{}')",
                        first.id,
                        s.width(),
                        s.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Shared feature width, when the dataset is nonempty.
    pub fn width(&self) -> Option<usize> {
        self.sequences.first().map(|s| s.width())
    }

    /// True when every sequence carries a label.
    pub fn fully_labeled(&self) -> bool {
        !self.is_empty() && self.sequences.iter().all(|s| s.label.is_some())
    }

    pub fn labels(&self) -> Result<Vec<usize>> {
        self.sequences
            .iter()
            .map(|s| {
                s.label.ok_or_else(|| {
                    Error::data(format!("sequence '{}' has no label", s.id))
                })
            })
            .collect()
    }
}

/// Synthetic circle-drawing task: classes share the radius and differ only
/// in how many loops the trajectory completes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleSpec {
    pub samples_per_class: usize,
    pub loops_per_class: Vec<usize>,
    /// Inclusive range the sequence length is drawn from.
    pub length_range: (usize, usize),
    pub radius: f64,
    pub noise_std: f64,
    pub seed: u64,
    /// Draw the starting angle uniformly instead of starting at zero.
    pub random_phase: bool,
}

impl Default for CircleSpec {
    fn default() -> Self {
        CircleSpec {
            samples_per_class: 100,
            loops_per_class: vec![2, 3],
            length_range: (50, 200),
            radius: 1.0,
            noise_std: 0.01,
            seed: 7,
            random_phase: false,
        }
    }
}

impl CircleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_class < 1 {
            return Err(Error::Config("samples_per_class must be at least 1".into()));
        }
        if self.loops_per_class.is_empty() || self.loops_per_class.iter().any(|&k| k < 1) {
            return Err(Error::Config("loops_per_class must list counts >= 1".into()));
        }
        let (lo, hi) = self.length_range;
        if lo < 2 || lo > hi {
            return Err(Error::Config(format!(
                "length range [{lo}, {hi}] must satisfy 2 <= lo <= hi"
            )));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Config(format!("radius must be positive, got {}", self.radius)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!(
                "noise_std must be nonnegative, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

/// Generates the circle dataset: one class per loop count, lengths drawn
/// uniformly from the configured range, observation i of a length-L sample
/// at angle phase + 2πk(i-1)/(L-1) plus isotropic Gaussian noise. The
/// (L-1) denominator closes each loop exactly: the noiseless first and
/// last observations coincide.
pub fn gen_circles(spec: &CircleSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let (lo, hi) = spec.length_range;
    let mut sequences = Vec::with_capacity(spec.samples_per_class * spec.loops_per_class.len());
    for (class, &loops) in spec.loops_per_class.iter().enumerate() {
        for sample in 0..spec.samples_per_class {
            let len = rng.int_range(lo, hi);
            let phase = if spec.random_phase { rng.range(0.0, TAU) } else { 0.0 };
            let mut m = Matrix::zeros(len, 2);
            for i in 0..len {
                let theta = phase + TAU * loops as f64 * i as f64 / (len - 1) as f64;
                let row = m.row_mut(i);
                row[0] = spec.radius * theta.cos() + spec.noise_std * rng.normal();
                row[1] = spec.radius * theta.sin() + spec.noise_std * rng.normal();
            }
            sequences.push(Sequence::new(
                format!("circle-{class}-{sample}"),
                Some(class),
                m,
            )?);
        }
    }
    let mut ds = Dataset::new(sequences)?;
    ds.class_names = Some(
        spec.loops_per_class
            .iter()
            .map(|k| format!("loops-{k}"))
            .collect(),
    );
    Ok(ds)
}

#[derive(Serialize, Deserialize)]
struct SeqRecord {
    id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
    features: Vec<Vec<f64>>,
}

/// Reads a sequence file. Blank lines are ignored; an empty file is an
/// empty dataset. Malformed lines and width inconsistencies are reported
/// with their line numbers.
pub fn load_sequences(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut sequences = Vec::new();
    let mut first_width: Option<(usize, usize)> = None; // (width, line)
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let data_err = |msg: String| Error::Data {
            path: Some(path.to_path_buf()),
            line: Some(line_no),
            msg,
        };
        let rec: SeqRecord =
            serde_json::from_str(&line).map_err(|e| data_err(format!("malformed record: {e}")))?;
        let rows = rec.features.len();
        if rows == 0 {
            return Err(data_err(format!("sequence '{}' has no observations", rec.id)));
        }
        let width = rec.features[0].len();
        for (t, row) in rec.features.iter().enumerate() {
            if row.len() != width {
                return Err(data_err(format!(
                    "sequence '{}' row {} has width {} but row 0 has {width}",
                    rec.id,
                    t,
                    row.len()
                )));
            }
        }
        match first_width {
            None => first_width = Some((width, line_no)),
            Some((w, at)) if w != width => {
                return Err(data_err(format!(
                    "width {width} conflicts with width {w} established at line {at}"
                )))
            }
            _ => {}
        }
        let seq = Sequence::new(rec.id, rec.label, Matrix::from_rows(&rec.features))
            .map_err(|e| data_err(e.to_string()))?;
        sequences.push(seq);
    }
    Dataset::new(sequences)
}

/// Writes one JSON record per line; the exact inverse of `load_sequences`.
pub fn save_sequences(ds: &Dataset, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    for s in &ds.sequences {
        let rec = SeqRecord {
            id: s.id.clone(),
            label: s.label,
            features: (0..s.len()).map(|t| s.observation_slice(t).to_vec()).collect(),
        };
        let json = serde_json::to_string(&rec)
            .map_err(|e| Error::data(format!("cannot serialize sequence '{}': {e}", s.id)))?;
        writeln!(out, "{json}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// z-scores `ds` with statistics fitted on `fit`; the stats ride along on
/// the result for the inverse transform.
pub fn normalize(ds: &Dataset, fit: &Dataset) -> Result<Dataset> {
    let stats = NormalizationStats::fit(&fit.sequences)?;
    let sequences = ds
        .sequences
        .iter()
        .map(|s| stats.apply(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        sequences,
        class_names: ds.class_names.clone(),
        stats: Some(stats),
    })
}

/// Inverse of `normalize`, using the stats stored on the dataset.
pub fn denormalize(ds: &Dataset) -> Result<Dataset> {
    let stats = ds
        .stats
        .as_ref()
        .ok_or_else(|| Error::Config("dataset carries no normalization stats".into()))?;
    let sequences = ds
        .sequences
        .iter()
        .map(|s| stats.invert(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        sequences,
        class_names: ds.class_names.clone(),
        stats: None,
    })
}

/// Splits into disjoint parts covering `ds`, sized by `fractions` (which
/// must sum to 1). Stratified splits shuffle and cut each class
/// separately, preserving class ratios within one sample per class.
pub fn split(ds: &Dataset, fractions: &[f64], stratified: bool, seed: u64) -> Result<Vec<Dataset>> {
    if fractions.is_empty() {
        return Err(Error::Config("split needs at least one fraction".into()));
    }
    if fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
        return Err(Error::Config(format!("fractions must lie in [0, 1]: {fractions:?}")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "fractions must sum to 1, got {total}"
        )));
    }

    let groups: Vec<Vec<usize>> = if stratified {
        if !ds.fully_labeled() {
            return Err(Error::Config(
                "stratified split requested on unlabeled data".into(),
            ));
        }
        let labels = ds.labels()?;
        let classes = labels.iter().max().copied().unwrap_or(0) + 1;
        let mut groups = vec![Vec::new(); classes];
        for (i, &l) in labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    } else {
        vec![(0..ds.len()).collect()]
    };

    let mut rng = Rng::new(seed);
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); fractions.len()];
    for mut group in groups {
        rng.shuffle(&mut group);
        let n = group.len();
        let mut cum = 0.0;
        let mut start = 0usize;
        for (k, &f) in fractions.iter().enumerate() {
            cum += f;
            let end = if k + 1 == fractions.len() {
                n
            } else {
                (cum * n as f64).round().min(n as f64) as usize
            };
            parts[k].extend(&group[start..end.max(start)]);
            start = end.max(start);
        }
    }

    Ok(parts
        .into_iter()
        .map(|idx| Dataset {
            sequences: idx.iter().map(|&i| ds.sequences[i].clone()).collect(),
            class_names: ds.class_names.clone(),
            stats: ds.stats.clone(),
        })
        .collect())
}
