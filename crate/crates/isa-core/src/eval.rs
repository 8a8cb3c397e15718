//! Classification on learned representations and the semi-supervised
//! simulation harness.
//!
//! A k-nearest-neighbor classifier stands in for the reference SVM: it is
//! the simplest classifier that demonstrates whether representations
//! separate the classes, and it needs no tuning. Defaults to k = 1.

use crate::data::{split, Dataset};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::params::IsaParameters;
use crate::sequence::Sequence;
use crate::stop::{augment, StopFeatureConfig};
use crate::train::{train, TrainConfig};

/// Encoded dataset: one representation row per sequence, with aligned
/// labels and source ids.
#[derive(Clone, Debug, PartialEq)]
pub struct RepresentationSet {
    reps: Matrix,
    labels: Vec<usize>,
    ids: Vec<String>,
}

impl RepresentationSet {
    pub fn new(reps: Matrix, labels: Vec<usize>, ids: Vec<String>) -> Result<Self> {
        if reps.rows() != labels.len() || reps.rows() != ids.len() {
            return Err(Error::Shape(format!(
                "representation rows ({}), labels ({}) and ids ({}) disagree",
                reps.rows(),
                labels.len(),
                ids.len()
            )));
        }
        if !reps.is_finite() {
            return Err(Error::data("representations contain non-finite values"));
        }
        Ok(RepresentationSet { reps, labels, ids })
    }

    pub fn len(&self) -> usize {
        self.reps.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.reps.cols()
    }

    pub fn reps(&self) -> &Matrix {
        &self.reps
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// Euclidean k-nearest-neighbor majority vote.
///
/// Neighbors are ranked by (distance, training index); vote ties fall to
/// the class with the smaller total neighbor distance, then the smaller
/// class index. Distances are compared as true Euclidean norms.
pub fn knn_classify(train: &RepresentationSet, queries: &Matrix, k: usize) -> Result<Vec<usize>> {
    if train.is_empty() {
        return Err(Error::Config("knn training set is empty".into()));
    }
    if k < 1 || k > train.len() {
        return Err(Error::Config(format!(
            "k = {k} must lie in 1..={}",
            train.len()
        )));
    }
    if queries.cols() != train.dim() {
        return Err(Error::Shape(format!(
            "query width {} does not match representation width {}",
            queries.cols(),
            train.dim()
        )));
    }
    let mut out = Vec::with_capacity(queries.rows());
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(train.len());
    for q in 0..queries.rows() {
        let qrow = queries.row(q);
        scored.clear();
        for i in 0..train.len() {
            let trow = train.reps.row(i);
            let sq: f64 = qrow.iter().zip(trow).map(|(a, b)| (a - b) * (a - b)).sum();
            scored.push((sq.sqrt(), i));
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let neighbors = &scored[..k];

        let classes = train.labels.iter().max().unwrap() + 1;
        let mut votes = vec![0usize; classes];
        let mut dist_sum = vec![0.0f64; classes];
        for &(d, i) in neighbors {
            let c = train.labels[i];
            votes[c] += 1;
            dist_sum[c] += d;
        }
        let best_votes = *votes.iter().max().unwrap();
        let winner = (0..classes)
            .filter(|&c| votes[c] == best_votes)
            .min_by(|&a, &b| dist_sum[a].total_cmp(&dist_sum[b]).then(a.cmp(&b)))
            .unwrap();
        out.push(winner);
    }
    Ok(out)
}

/// Fraction of exact matches.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "accuracy needs equal nonempty vectors, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Encodes every sequence of a labeled dataset with the given model and
/// stop configuration.
pub fn encode_dataset(
    model: &IsaParameters,
    ds: &Dataset,
    stop_cfg: &StopFeatureConfig,
) -> Result<RepresentationSet> {
    if ds.is_empty() {
        return Err(Error::Config("cannot encode an empty dataset".into()));
    }
    let labels = ds.labels()?;
    let mut reps = Matrix::zeros(ds.len(), model.hidden_size());
    let mut ids = Vec::with_capacity(ds.len());
    for (i, s) in ds.sequences.iter().enumerate() {
        let rep = model.encode(&augment(s, stop_cfg))?;
        reps.row_mut(i).copy_from_slice(rep.z.as_slice());
        ids.push(rep.source_id);
    }
    RepresentationSet::new(reps, labels, ids)
}

/// Encodes unlabeled queries into a plain representation matrix.
pub fn encode_queries(
    model: &IsaParameters,
    seqs: &[Sequence],
    stop_cfg: &StopFeatureConfig,
) -> Result<Matrix> {
    let mut reps = Matrix::zeros(seqs.len(), model.hidden_size());
    for (i, s) in seqs.iter().enumerate() {
        let rep = model.encode(&augment(s, stop_cfg))?;
        reps.row_mut(i).copy_from_slice(rep.z.as_slice());
    }
    Ok(reps)
}

/// Encodes train and test with the same trained model and stop channel,
/// then reports k-NN accuracy on the test labels. Representations are
/// used raw.
pub fn evaluate_pipeline(
    train_ds: &Dataset,
    test_ds: &Dataset,
    model: &IsaParameters,
    stop_cfg: &StopFeatureConfig,
    k: usize,
) -> Result<f64> {
    let train_reps = encode_dataset(model, train_ds, stop_cfg)?;
    let queries = encode_queries(model, &test_ds.sequences, stop_cfg)?;
    let pred = knn_classify(&train_reps, &queries, k)?;
    accuracy(&pred, &test_ds.labels()?)
}

/// Accuracy per unlabeled-data fraction at a fixed labeled subset.
#[derive(Clone, Debug, PartialEq)]
pub struct SemiSupReport {
    pub labeled_fraction: f64,
    pub seed: u64,
    /// (unlabeled fraction, test accuracy), in the requested order.
    pub points: Vec<(f64, f64)>,
}

/// Semi-supervised simulation: a fixed stratified labeled subset feeds the
/// classifier while the autoencoder trains on growing label-free portions
/// of the training data. For each fraction f the model is trained from
/// scratch on the first f of a seed-shuffled pool (nested subsets), the
/// labeled subset and the test set are re-encoded, and k-NN accuracy is
/// recorded. The classifier's labeled subset never changes across f.
pub fn semi_sup_run(
    full_train: &Dataset,
    test: &Dataset,
    labeled_fraction: f64,
    unlabeled_fractions: &[f64],
    cfg: &TrainConfig,
    k: usize,
) -> Result<SemiSupReport> {
    if !(labeled_fraction > 0.0 && labeled_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "labeled fraction must lie in (0, 1], got {labeled_fraction}"
        )));
    }
    if unlabeled_fractions.is_empty() {
        return Err(Error::Config("no unlabeled fractions requested".into()));
    }
    for w in unlabeled_fractions.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Config(format!(
                "unlabeled fractions must increase strictly: {unlabeled_fractions:?}"
            )));
        }
    }
    if unlabeled_fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Error::Config(format!(
            "unlabeled fractions must lie in (0, 1]: {unlabeled_fractions:?}"
        )));
    }
    if !full_train.fully_labeled() || !test.fully_labeled() {
        return Err(Error::data(
            "semi-supervised run needs labeled training and test data",
        ));
    }

    let labeled = if labeled_fraction >= 1.0 {
        full_train.clone()
    } else {
        let parts = split(
            full_train,
            &[labeled_fraction, 1.0 - labeled_fraction],
            true,
            cfg.seed,
        )?;
        parts.into_iter().next().unwrap()
    };

    // Pool order for the nested unlabeled subsets; a separate stream from
    // the split so the labeled subset stays fixed.
    let mut order: Vec<usize> = (0..full_train.len()).collect();
    crate::linalg::Rng::new(cfg.seed.wrapping_add(1)).shuffle(&mut order);

    let mut points = Vec::with_capacity(unlabeled_fractions.len());
    for &f in unlabeled_fractions {
        let n = ((f * full_train.len() as f64).round() as usize)
            .clamp(1, full_train.len());
        let pool: Vec<Sequence> = order[..n]
            .iter()
            .map(|&i| full_train.sequences[i].clone())
            .collect();
        let (model, _) = train(&pool, &[], cfg)?;
        let train_reps = encode_dataset(&model, &labeled, &cfg.stop)?;
        let queries = encode_queries(&model, &test.sequences, &cfg.stop)?;
        let pred = knn_classify(&train_reps, &queries, k)?;
        points.push((f, accuracy(&pred, &test.labels()?)?));
    }
    Ok(SemiSupReport {
        labeled_fraction,
        seed: cfg.seed,
        points,
    })
}
