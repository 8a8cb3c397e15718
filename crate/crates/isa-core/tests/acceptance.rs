//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them all).
//!
//! The heavy criteria (2, 3, 8) train real models on the synthetic circle
//! task and take a few minutes of CPU time altogether.

use isa_core::data::{gen_circles, split, CircleSpec};
use isa_core::dtw::{dtw_distance, DtwConfig, LocalMetric};
use isa_core::eval::{evaluate_pipeline, semi_sup_run};
use isa_core::stop::{augment, augment_batch, stop_value, StopFeatureConfig, StopMechanism};
use isa_core::train::{load_checkpoint, save_checkpoint, train, Precision, TrainConfig};
use isa_core::{IsaParameters, Matrix, Rng, Sequence};

fn verdict(num: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "acceptance criterion {num} ({name}): {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {num} ({name}) failed: {detail}");
}

fn random_sequence(id: &str, steps: usize, width: usize, rng: &mut Rng) -> Sequence {
    let rows: Vec<Vec<f64>> = (0..steps)
        .map(|_| (0..width).map(|_| rng.range(-1.0, 1.0)).collect())
        .collect();
    Sequence::new(id, None, Matrix::from_rows(&rows)).unwrap()
}

// -------------------------------------------------------------------------
// 1. Gradient oracle: analytic gradients match central finite differences
//    on small random instances covering T, alpha and every stop mechanism.
// -------------------------------------------------------------------------
#[test]
fn criterion_1_gradient_oracle() {
    const EPS: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    let mechanisms = [
        StopFeatureConfig::none(),
        StopFeatureConfig::new(StopMechanism::Linear, 1.0).unwrap(),
        StopFeatureConfig::new(StopMechanism::Tanh, 3.0).unwrap(),
        StopFeatureConfig::new(StopMechanism::Exp, 2.0).unwrap(),
    ];
    let mut instances = 0u32;
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    for (mi, stop) in mechanisms.iter().enumerate() {
        for (ti, steps) in [2usize, 5, 9].into_iter().enumerate() {
            for (ai, alpha) in [0.0, 0.5, 1.0].into_iter().enumerate() {
                let seed = 1000 + (mi * 9 + ti * 3 + ai) as u64;
                let mut rng = Rng::new(seed);
                let width = stop.augmented_width(3);
                let params = IsaParameters::init(8, width, &mut rng);
                let raw = random_sequence(&format!("g{seed}"), steps, 3, &mut rng);
                let batch = vec![augment(&raw, stop)];

                let (_, grads) = params.backward(&batch, alpha).unwrap();
                for (tensor_idx, (name, view)) in grads.tensors().iter().enumerate() {
                    let analytic = view.as_slice();
                    for idx in 0..analytic.len() {
                        let mut probe = |delta: f64| {
                            let mut q = params.clone();
                            q.tensors_mut()[tensor_idx].1.as_mut_slice()[idx] += delta;
                            q.loss_integrated(&batch, alpha).unwrap()
                        };
                        let numeric = (probe(EPS) - probe(-EPS)) / (2.0 * EPS);
                        // Relative error with an absolute floor: differences
                        // below the finite-difference noise (~1e-10) must not
                        // count as large relative errors on near-zero entries.
                        let rel = (analytic[idx] - numeric).abs()
                            / (analytic[idx].abs() + numeric.abs()).max(1e-5);
                        if rel > worst {
                            worst = rel;
                            worst_at = format!(
                                "{name}[{idx}] (T={steps}, alpha={alpha}, stop={})",
                                stop.mechanism.name()
                            );
                        }
                    }
                }
                instances += 1;
            }
        }
    }
    verdict(
        1,
        "gradient oracle",
        instances >= 20 && worst <= TOL,
        &format!("{instances} instances, max relative error {worst:.3e} at {worst_at}, tolerance {TOL:.0e}"),
    );
}

// -------------------------------------------------------------------------
// 2. Circle stop-feature separation: every stop variant reaches >= 95%
//    1-NN accuracy on held-out data and beats the no-stop variant by at
//    least 10 percentage points.
// -------------------------------------------------------------------------
#[test]
fn criterion_2_circle_stop_separation() {
    let ds = gen_circles(&CircleSpec::default()).unwrap();
    let parts = split(&ds, &[0.75, 0.25], true, 99).unwrap();
    let (train_ds, test_ds) = (&parts[0], &parts[1]);

    let recipe = TrainConfig {
        alpha: 0.5,
        hidden_size: 32,
        learning_rate: 2e-3,
        batch_size: 8,
        epochs: 200,
        seed: 7,
        ..TrainConfig::default()
    };
    let variants = [
        ("none", StopFeatureConfig::none()),
        ("linear", StopFeatureConfig::new(StopMechanism::Linear, 1.0).unwrap()),
        ("tanh", StopFeatureConfig::new(StopMechanism::Tanh, 3.0).unwrap()),
        ("exp", StopFeatureConfig::new(StopMechanism::Exp, 3.0).unwrap()),
    ];
    let mut accs = Vec::new();
    for (name, stop) in &variants {
        let cfg = TrainConfig { stop: *stop, ..recipe.clone() };
        let (model, _) = train(&train_ds.sequences, &[], &cfg).unwrap();
        let acc = evaluate_pipeline(train_ds, test_ds, &model, stop, 1).unwrap();
        accs.push((*name, acc));
    }
    let no_stop = accs[0].1;
    let stop_min = accs[1..].iter().map(|(_, a)| *a).fold(f64::INFINITY, f64::min);
    let pass = accs[1..].iter().all(|(_, a)| *a >= 0.95) && no_stop <= stop_min - 0.10;
    let detail = accs
        .iter()
        .map(|(n, a)| format!("{n} {a:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(
        2,
        "circle stop-feature separation",
        pass,
        &format!("{detail}; required: stop variants >= 0.95 and none <= min(stop) - 0.10"),
    );
}

// -------------------------------------------------------------------------
// 3. Training progress: 200 epochs cut the integrated training loss to at
//    most 20% of its first-epoch value for alpha in {0, 0.5, 1}.
// -------------------------------------------------------------------------
#[test]
fn criterion_3_training_progress() {
    let ds = gen_circles(&CircleSpec::default()).unwrap();
    let mut details = Vec::new();
    let mut pass = true;
    for alpha in [0.0, 0.5, 1.0] {
        let cfg = TrainConfig {
            alpha,
            hidden_size: 32,
            learning_rate: 1e-3,
            epochs: 200,
            ..TrainConfig::default()
        };
        let (_, history) = train(&ds.sequences, &[], &cfg).unwrap();
        let first = history.epochs.first().unwrap().train_loss;
        let last = history.final_train_loss().unwrap();
        let ratio = last / first;
        pass &= ratio <= 0.2;
        details.push(format!("alpha={alpha}: {first:.2} -> {last:.2} (ratio {ratio:.3})"));
    }
    verdict(3, "training progress", pass, &details.join("; "));
}

// -------------------------------------------------------------------------
// 4. Loss endpoints: the integrated loss at alpha = 1 / alpha = 0 equals
//    the holistic / atomistic loss bit-for-bit on random batches.
// -------------------------------------------------------------------------
#[test]
fn criterion_4_loss_endpoints() {
    let mut rng = Rng::new(400);
    let mut checked = 0;
    for trial in 0..10 {
        let width = 1 + (trial % 3);
        let params = IsaParameters::init(4 + trial % 5, width, &mut rng);
        let batch: Vec<Sequence> = (0..3)
            .map(|i| random_sequence(&format!("e{trial}-{i}"), 2 + (i * 3 + trial) % 7, width, &mut rng))
            .collect();
        let lh = params.loss_holistic(&batch).unwrap();
        let la = params.loss_atomistic(&batch).unwrap();
        assert_eq!(params.loss_integrated(&batch, 1.0).unwrap(), lh, "alpha=1 endpoint");
        assert_eq!(params.loss_integrated(&batch, 0.0).unwrap(), la, "alpha=0 endpoint");
        checked += 1;
    }
    verdict(
        4,
        "integrated-loss endpoints",
        checked == 10,
        &format!("{checked} random batches, both endpoints bit-exact"),
    );
}

// -------------------------------------------------------------------------
// 5. DTW oracle equivalence: the dynamic program equals exhaustive
//    enumeration of monotone warping paths exactly; self-distance and
//    symmetry hold.
// -------------------------------------------------------------------------

/// Exhaustive minimum over all monotone warping paths; forward
/// accumulation so path sums share the dynamic program's addition tree up
/// to commutativity.
fn brute_force_dtw(a: &Sequence, b: &Sequence, metric: LocalMetric) -> f64 {
    fn local(metric: LocalMetric, x: &[f64], y: &[f64]) -> f64 {
        let sq: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
        match metric {
            LocalMetric::Euclidean => sq.sqrt(),
            LocalMetric::SquaredEuclidean => sq,
        }
    }
    fn rec(
        a: &Sequence,
        b: &Sequence,
        metric: LocalMetric,
        i: usize,
        j: usize,
        acc: f64,
        best: &mut f64,
    ) {
        let acc = acc + local(metric, a.observation_slice(i), b.observation_slice(j));
        if i == a.len() - 1 && j == b.len() - 1 {
            if acc < *best {
                *best = acc;
            }
            return;
        }
        if i + 1 < a.len() {
            rec(a, b, metric, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            rec(a, b, metric, i, j + 1, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            rec(a, b, metric, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    rec(a, b, metric, 0, 0, 0.0, &mut best);
    best
}

#[test]
fn criterion_5_dtw_oracle_equivalence() {
    let mut rng = Rng::new(500);
    let cfg = DtwConfig::default();
    let mut exact_matches = 0;
    for i in 0..200 {
        let width = 1 + (i % 3);
        let a = random_sequence(&format!("a{i}"), rng.int_range(1, 6), width, &mut rng);
        let b = random_sequence(&format!("b{i}"), rng.int_range(1, 6), width, &mut rng);
        let dp = dtw_distance(&a, &b, &cfg).unwrap();
        let oracle = brute_force_dtw(&a, &b, cfg.metric);
        assert_eq!(dp, oracle, "pair {i}: dp {dp} vs enumeration {oracle}");
        exact_matches += 1;
    }
    let mut sym_ok = 0;
    for i in 0..100 {
        let a = random_sequence(&format!("s{i}"), rng.int_range(1, 12), 2, &mut rng);
        let b = random_sequence(&format!("t{i}"), rng.int_range(1, 12), 2, &mut rng);
        assert_eq!(dtw_distance(&a, &a, &cfg).unwrap(), 0.0, "self-distance");
        assert_eq!(
            dtw_distance(&a, &b, &cfg).unwrap(),
            dtw_distance(&b, &a, &cfg).unwrap(),
            "symmetry"
        );
        sym_ok += 1;
    }
    verdict(
        5,
        "dtw oracle equivalence",
        exact_matches == 200 && sym_ok == 100,
        &format!("{exact_matches} enumeration matches (exact), {sym_ok} self/symmetry checks"),
    );
}

// -------------------------------------------------------------------------
// 6. Stop-feature formulas: terminal value, strict monotonicity, and the
//    tanh schedule against an independently computed high-precision value.
// -------------------------------------------------------------------------
#[test]
fn criterion_6_stop_feature_formulas() {
    let mut pass = true;
    let mut notes = Vec::new();
    for mechanism in [StopMechanism::Linear, StopMechanism::Tanh, StopMechanism::Exp] {
        for gamma in [1.0, 2.0, 3.0, 5.0] {
            let cfg = StopFeatureConfig::new(mechanism, gamma).unwrap();
            for len in [2usize, 50, 200] {
                let v_last = stop_value(len, len, &cfg).unwrap();
                if (v_last - 1.0).abs() > 1e-12 {
                    pass = false;
                    notes.push(format!("{}(gamma={gamma}) T={len}: v_T={v_last}", mechanism.name()));
                }
                let mut prev = f64::NEG_INFINITY;
                for t in 1..=len {
                    let v = stop_value(t, len, &cfg).unwrap();
                    if v <= prev {
                        pass = false;
                        notes.push(format!("{} not strictly increasing at t={t}", mechanism.name()));
                        break;
                    }
                    prev = v;
                }
            }
        }
    }
    // tanh(3 * 0.5) + 1 - tanh(3), evaluated independently at 30-digit
    // precision: 0.910093499958135986910423511201.
    let tanh_cfg = StopFeatureConfig::new(StopMechanism::Tanh, 3.0).unwrap();
    let v = stop_value(1, 2, &tanh_cfg).unwrap();
    let expected = 0.9100934999581360;
    if (v - expected).abs() > 1e-5 {
        pass = false;
        notes.push(format!("tanh(gamma=3, t/T=0.5) = {v}, expected {expected}"));
    }
    verdict(
        6,
        "stop-feature formulas",
        pass,
        &if notes.is_empty() {
            format!("v_T = 1 within 1e-12, strictly monotone, tanh midpoint {v:.9} within 1e-5 of {expected:.9}")
        } else {
            notes.join("; ")
        },
    );
}

// -------------------------------------------------------------------------
// 7. Checkpoint round trip: save -> load -> encode is bit-identical to
//    encoding before the save, at both storage precisions.
// -------------------------------------------------------------------------
#[test]
fn criterion_7_checkpoint_round_trip() {
    let dir = std::env::temp_dir().join(format!("isa-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut rng = Rng::new(700);
    let mut checked = 0;
    for precision in [Precision::Double, Precision::Single] {
        let cfg = TrainConfig {
            hidden_size: 6,
            precision,
            stop: StopFeatureConfig::new(StopMechanism::Exp, 2.0).unwrap(),
            ..TrainConfig::default()
        };
        let mut params = IsaParameters::init(6, 3, &mut rng);
        if precision == Precision::Single {
            params.quantize_f32();
        }
        let path = dir.join(format!("rt-{}.ckpt", precision.name()));
        save_checkpoint(&params, &cfg, &path).unwrap();
        let (loaded, loaded_cfg) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded_cfg, cfg);
        for i in 0..10 {
            let s = random_sequence(&format!("rt{i}"), 5 + i * 7 % 60, 3, &mut rng);
            let before = params.encode(&s).unwrap();
            let after = loaded.encode(&s).unwrap();
            assert_eq!(before.z, after.z, "sequence {i} ({})", precision.name());
            checked += 1;
        }
    }
    std::fs::remove_dir_all(&dir).ok();
    verdict(
        7,
        "checkpoint round trip",
        checked == 20,
        &format!("{checked} encodings bit-identical across save/load (double and single)"),
    );
}

// -------------------------------------------------------------------------
// 8. Semi-supervised trend: with a fixed 20% labeled subset, training the
//    autoencoder on all the data does not degrade accuracy by more than 5
//    points versus training on 20%.
// -------------------------------------------------------------------------
#[test]
fn criterion_8_semi_supervised_trend() {
    let spec = CircleSpec {
        samples_per_class: 50,
        ..CircleSpec::default()
    };
    let ds = gen_circles(&spec).unwrap();
    let parts = split(&ds, &[0.75, 0.25], true, 99).unwrap();
    let (full_train, test) = (&parts[0], &parts[1]);
    let cfg = TrainConfig {
        alpha: 0.5,
        hidden_size: 32,
        learning_rate: 2e-3,
        batch_size: 8,
        epochs: 120,
        seed: 7,
        stop: StopFeatureConfig::new(StopMechanism::Exp, 3.0).unwrap(),
        ..TrainConfig::default()
    };
    let report = semi_sup_run(full_train, test, 0.2, &[0.2, 1.0], &cfg, 1).unwrap();
    let acc_small = report.points[0].1;
    let acc_full = report.points[1].1;
    verdict(
        8,
        "semi-supervised trend",
        acc_full >= acc_small - 0.05,
        &format!("accuracy at f=0.2: {acc_small:.3}, at f=1.0: {acc_full:.3} (non-degradation within 0.05)"),
    );
}

// -------------------------------------------------------------------------
// 9. Fixed-length contract: representations have length H regardless of
//    sequence length, across random models.
// -------------------------------------------------------------------------
#[test]
fn criterion_9_fixed_length_contract() {
    let mut rng = Rng::new(900);
    let mut checked = 0;
    for trial in 0..8 {
        let hidden = rng.int_range(3, 48);
        let width = rng.int_range(1, 4);
        let params = IsaParameters::init(hidden, width, &mut rng);
        let short = random_sequence(&format!("s{trial}"), 50, width, &mut rng);
        let long = random_sequence(&format!("l{trial}"), 200, width, &mut rng);
        let zs = params.encode(&short).unwrap();
        let zl = params.encode(&long).unwrap();
        assert_eq!(zs.len(), hidden);
        assert_eq!(zl.len(), hidden);
        checked += 1;
    }
    // Augmented circle data through the full pipeline keeps the contract.
    let spec = CircleSpec {
        samples_per_class: 2,
        length_range: (50, 200),
        ..CircleSpec::default()
    };
    let ds = gen_circles(&spec).unwrap();
    let stop = StopFeatureConfig::new(StopMechanism::Linear, 1.0).unwrap();
    let mut rng2 = Rng::new(901);
    let params = IsaParameters::init(16, 3, &mut rng2);
    let lens: Vec<usize> = augment_batch(&ds.sequences, &stop)
        .iter()
        .map(|s| params.encode(s).unwrap().len())
        .collect();
    verdict(
        9,
        "fixed-length contract",
        checked == 8 && lens.iter().all(|&l| l == 16),
        &format!("{checked} random models plus augmented circle batch all yield length-H representations"),
    );
}
