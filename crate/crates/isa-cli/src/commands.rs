use std::io::Write;
use std::path::Path;

use serde_json::json;

use isa_core::data::{gen_circles as make_circles, load_sequences, save_sequences, split, CircleSpec, Dataset};
use isa_core::dtw::{dtw_representation, DtwConfig, LocalMetric};
use isa_core::eval::{accuracy, knn_classify, semi_sup_run, RepresentationSet};
use isa_core::stop::{augment, stop_value, StopFeatureConfig, StopMechanism};
use isa_core::train::{load_checkpoint, save_checkpoint, train as train_model, Precision, TrainConfig};
use isa_core::{Error, Matrix, Result, Sequence};

use crate::manifest::{sibling_manifest_path, sibling_path, ManifestBuilder};
use crate::svg::{line_plot, Series};
use crate::{resolve, DtwArgs, EncodeArgs, EvalArgs, GenCirclesArgs, HyperArgs, ReconstructArgs, SemisupArgs, TrainArgs};

fn usage(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_usize_list(s: &str, what: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| usage(format!("bad {what} entry '{p}'"))))
        .collect()
}

fn parse_f64_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(|c| c == ',' || c == ':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| usage(format!("bad {what} entry '{p}'"))))
        .collect()
}

fn parse_len_range(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 2 {
        return Err(usage(format!("length range '{s}' must be LO:HI")));
    }
    let lo = parts[0].trim().parse().map_err(|_| usage(format!("bad length '{}'", parts[0])))?;
    let hi = parts[1].trim().parse().map_err(|_| usage(format!("bad length '{}'", parts[1])))?;
    Ok((lo, hi))
}

fn parse_clip(s: &str) -> Result<(f64, f64)> {
    let vals = parse_f64_list(s, "clip bound")?;
    if vals.len() != 2 {
        return Err(usage(format!("clip interval '{s}' must be LO:HI")));
    }
    Ok((vals[0], vals[1]))
}

impl HyperArgs {
    fn to_config(&self) -> Result<TrainConfig> {
        let (clip_lo, clip_hi) = parse_clip(&self.clip)?;
        let cfg = TrainConfig {
            alpha: self.alpha,
            hidden_size: self.hidden,
            learning_rate: self.lr,
            clip_lo,
            clip_hi,
            epochs: self.epochs,
            batch_size: self.batch,
            seed: self.seed,
            stop: StopFeatureConfig::new(StopMechanism::parse(&self.stop)?, self.gamma)?,
            precision: Precision::parse(&self.precision)?,
            workers: self.workers,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Checks that a raw sequence file fits a checkpoint's input width after
/// augmentation.
fn check_model_width(ds: &Dataset, cfg: &TrainConfig, model_width: usize, path: &Path) -> Result<()> {
    if let Some(w) = ds.width() {
        let aug = cfg.stop.augmented_width(w);
        if aug != model_width {
            return Err(Error::Data {
                path: Some(path.to_path_buf()),
                line: None,
                msg: format!(
                    "sequences have width {w} ({aug} after the '{}' stop channel) but the checkpoint expects {model_width}",
                    cfg.stop.mechanism.name()
                ),
            });
        }
    }
    Ok(())
}

/// Representation records are single-row sequences.
fn rep_dataset(rows: Vec<(String, Option<usize>, Vec<f64>)>) -> Result<Dataset> {
    let sequences = rows
        .into_iter()
        .map(|(id, label, row)| {
            let width = row.len();
            Sequence::new(id, label, Matrix::from_vec(1, width, row))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(sequences)
}

/// Reads a representation file back into rows, demanding T = 1 records.
fn load_reps(path: &Path) -> Result<Dataset> {
    let ds = load_sequences(path)?;
    for s in &ds.sequences {
        if s.len() != 1 {
            return Err(Error::Data {
                path: Some(path.to_path_buf()),
                line: None,
                msg: format!(
                    "record '{}' has {} rows; representation files hold one row per record",
                    s.id,
                    s.len()
                ),
            });
        }
    }
    Ok(ds)
}

pub fn gen_circles(args: GenCirclesArgs) -> Result<()> {
    let spec = CircleSpec {
        samples_per_class: args.per_class,
        loops_per_class: parse_usize_list(&args.loops, "loop count")?,
        length_range: parse_len_range(&args.len)?,
        radius: args.radius,
        noise_std: args.noise_std,
        seed: args.seed,
        random_phase: args.random_phase,
    };
    let fractions = parse_f64_list(&args.split, "split fraction")?;
    if fractions.len() != 3 {
        return Err(usage(format!("split '{}' must be TRAIN:VAL:TEST", args.split)));
    }
    let out_dir = resolve(&args.out_dir);
    std::fs::create_dir_all(&out_dir).map_err(|source| Error::Io {
        path: out_dir.clone(),
        source,
    })?;

    let mut m = ManifestBuilder::new(
        "gen-circles",
        json!({ "spec": spec, "split": fractions }),
        args.seed,
    );
    let ds = make_circles(&spec)?;
    let parts = split(&ds, &fractions, true, spec.seed)?;
    for (part, name) in parts.iter().zip(["train.jsonl", "val.jsonl", "test.jsonl"]) {
        let path = out_dir.join(name);
        save_sequences(part, &path)?;
        m.output(&path);
    }
    m.write(&out_dir.join("manifest.json"))?;
    println!(
        "wrote {} train / {} val / {} test sequences to {}",
        parts[0].len(),
        parts[1].len(),
        parts[2].len(),
        out_dir.display()
    );
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let cfg = args.hyper.to_config()?;
    let train_path = resolve(&args.train);
    let out = resolve(&args.out);
    let history_path = args
        .history
        .as_deref()
        .map(resolve)
        .unwrap_or_else(|| sibling_path(&out, "history.tsv"));

    let mut m = ManifestBuilder::new("train", serde_json::to_value(&cfg).unwrap(), cfg.seed);
    m.input(&train_path);
    let train_ds = load_sequences(&train_path)?;
    let val_ds = match &args.val {
        Some(v) => {
            let vp = resolve(v);
            m.input(&vp);
            load_sequences(&vp)?
        }
        None => Dataset::default(),
    };

    let (params, history) = train_model(&train_ds.sequences, &val_ds.sequences, &cfg)?;
    save_checkpoint(&params, &cfg, &out)?;
    m.output(&out);

    let mut log = String::from("epoch\ttrain_loss\tval_loss\twall_secs\n");
    for e in &history.epochs {
        let val = e.val_loss.map(|v| v.to_string()).unwrap_or_default();
        log.push_str(&format!("{}\t{}\t{}\t{:.6}\n", e.epoch, e.train_loss, val, e.wall_secs));
    }
    write_text(&history_path, &log)?;
    m.output(&history_path);

    if let Some(plot) = &args.plot {
        let plot = resolve(plot);
        let train_pts: Vec<(f64, f64)> = history
            .epochs
            .iter()
            .map(|e| (e.epoch as f64, e.train_loss))
            .collect();
        let val_pts: Vec<(f64, f64)> = history
            .epochs
            .iter()
            .filter_map(|e| e.val_loss.map(|v| (e.epoch as f64, v)))
            .collect();
        let mut series = vec![Series { name: "train", points: &train_pts }];
        if !val_pts.is_empty() {
            series.push(Series { name: "val", points: &val_pts });
        }
        write_text(&plot, &line_plot("training loss", "epoch", "loss", &series))?;
        m.output(&plot);
    }
    m.write(&sibling_manifest_path(&out))?;
    println!(
        "trained {} epochs; final training loss {:.6}; checkpoint at {}",
        history.epochs.len(),
        history.final_train_loss().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

pub fn encode(args: EncodeArgs) -> Result<()> {
    let ckpt = resolve(&args.checkpoint);
    let input = resolve(&args.input);
    let out = resolve(&args.out);
    let (params, cfg) = load_checkpoint(&ckpt)?;
    let ds = load_sequences(&input)?;
    check_model_width(&ds, &cfg, params.width(), &input)?;

    let mut m = ManifestBuilder::new("encode", serde_json::to_value(&cfg).unwrap(), cfg.seed);
    m.input(&ckpt).input(&input);
    let mut rows = Vec::with_capacity(ds.len());
    for s in &ds.sequences {
        let rep = params.encode(&augment(s, &cfg.stop))?;
        rows.push((rep.source_id, s.label, rep.z.as_slice().to_vec()));
    }
    let reps = rep_dataset(rows)?;
    save_sequences(&reps, &out)?;
    m.output(&out);
    m.write(&sibling_manifest_path(&out))?;
    println!("encoded {} sequences into {}-dim representations", reps.len(), params.hidden_size());
    Ok(())
}

pub fn reconstruct(args: ReconstructArgs) -> Result<()> {
    let ckpt = resolve(&args.checkpoint);
    let input = resolve(&args.input);
    let out = resolve(&args.out);
    let trace_path = args
        .trace
        .as_deref()
        .map(resolve)
        .unwrap_or_else(|| sibling_path(&out, "stop-trace.tsv"));
    let (params, cfg) = load_checkpoint(&ckpt)?;
    let ds = load_sequences(&input)?;
    check_model_width(&ds, &cfg, params.width(), &input)?;

    let mut m = ManifestBuilder::new("reconstruct", serde_json::to_value(&cfg).unwrap(), cfg.seed);
    m.input(&ckpt).input(&input);

    let stop_active = cfg.stop.is_active();
    let mut recon_seqs = Vec::with_capacity(ds.len());
    let mut trace = String::from("id\tt\tstop_true\tstop_reconstructed\n");
    let mut first_series: Option<(Vec<(f64, f64)>, Vec<(f64, f64)>)> = None;
    for s in &ds.sequences {
        let aug = augment(s, &cfg.stop);
        let steps = aug.len();
        let rep = params.encode(&aug)?;
        let recon = params.holistic_reconstruct(&rep.z, steps);
        // Reported reconstruction drops the stop channel; the trace keeps
        // the raw, unclipped stop outputs.
        let keep = if stop_active { recon.cols() - 1 } else { recon.cols() };
        let mut obs = Matrix::zeros(steps, keep);
        for t in 0..steps {
            obs.row_mut(t).copy_from_slice(&recon.row(t)[..keep]);
        }
        recon_seqs.push(Sequence::new(s.id.clone(), s.label, obs)?);
        if stop_active {
            let mut truth = Vec::with_capacity(steps);
            let mut predicted = Vec::with_capacity(steps);
            for t in 0..steps {
                let v_true = stop_value(t + 1, steps, &cfg.stop)?;
                let v_hat = recon.get(t, recon.cols() - 1);
                trace.push_str(&format!("{}\t{}\t{}\t{}\n", s.id, t + 1, v_true, v_hat));
                truth.push(((t + 1) as f64, v_true));
                predicted.push(((t + 1) as f64, v_hat));
            }
            if first_series.is_none() {
                first_series = Some((truth, predicted));
            }
        }
    }
    save_sequences(&Dataset::new(recon_seqs)?, &out)?;
    m.output(&out);
    write_text(&trace_path, &trace)?;
    m.output(&trace_path);

    if let Some(plot) = &args.plot {
        let plot = resolve(plot);
        if let Some((truth, predicted)) = &first_series {
            let series = [
                Series { name: "input", points: truth },
                Series { name: "reconstructed", points: predicted },
            ];
            write_text(&plot, &line_plot("stop feature", "step", "value", &series))?;
            m.output(&plot);
        }
    }
    m.write(&sibling_manifest_path(&out))?;
    println!("reconstructed {} sequences", ds.len());
    Ok(())
}

pub fn dtw(args: DtwArgs) -> Result<()> {
    let input = resolve(&args.input);
    let vocab_path = resolve(&args.vocab);
    let out = resolve(&args.out);
    let cfg = DtwConfig {
        band_radius: args.band,
        metric: LocalMetric::parse(&args.metric)?,
        normalize: args.normalize,
    };
    let queries = load_sequences(&input)?;
    let vocab = load_sequences(&vocab_path)?;
    if vocab.is_empty() {
        return Err(Error::Data {
            path: Some(vocab_path.clone()),
            line: None,
            msg: "vocabulary file is empty".into(),
        });
    }

    let mut m = ManifestBuilder::new(
        "dtw",
        json!({ "dtw": cfg, "vocabulary_size": vocab.len() }),
        0,
    );
    m.input(&input).input(&vocab_path);
    let mut rows = Vec::with_capacity(queries.len());
    for q in &queries.sequences {
        let rep = dtw_representation(q, &vocab.sequences, &cfg)?;
        rows.push((q.id.clone(), q.label, rep.as_slice().to_vec()));
    }
    let reps = rep_dataset(rows)?;
    save_sequences(&reps, &out)?;
    m.output(&out);
    m.write(&sibling_manifest_path(&out))?;
    println!(
        "computed {}-dim DTW representations for {} sequences",
        vocab.len(),
        reps.len()
    );
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let train_path = resolve(&args.train_reps);
    let test_path = resolve(&args.test_reps);
    let out = resolve(&args.out);
    let train_ds = load_reps(&train_path)?;
    let test_ds = load_reps(&test_path)?;

    let mut m = ManifestBuilder::new("eval", json!({ "k": args.k }), 0);
    m.input(&train_path).input(&test_path);

    let train_labels = train_ds.labels()?;
    let n_train = train_ds.len();
    let dim = train_ds.width().unwrap_or(0);
    let mut train_m = Matrix::zeros(n_train, dim);
    let mut ids = Vec::with_capacity(n_train);
    for (i, s) in train_ds.sequences.iter().enumerate() {
        train_m.row_mut(i).copy_from_slice(s.observation_slice(0));
        ids.push(s.id.clone());
    }
    let train_set = RepresentationSet::new(train_m, train_labels, ids)?;

    let mut queries = Matrix::zeros(test_ds.len(), dim);
    for (i, s) in test_ds.sequences.iter().enumerate() {
        if s.width() != dim {
            return Err(Error::Shape(format!(
                "test representation '{}' has width {}, train has {dim}",
                s.id,
                s.width()
            )));
        }
        queries.row_mut(i).copy_from_slice(s.observation_slice(0));
    }
    let pred = knn_classify(&train_set, &queries, args.k)?;
    let acc = accuracy(&pred, &test_ds.labels()?)?;

    let report = format!(
        "metric\tvalue\naccuracy\t{acc}\nn_train\t{n_train}\nn_test\t{}\nk\t{}\n",
        test_ds.len(),
        args.k
    );
    write_text(&out, &report)?;
    m.output(&out);
    m.write(&sibling_manifest_path(&out))?;
    println!("accuracy {acc:.4} ({} test sequences, k={})", test_ds.len(), args.k);
    Ok(())
}

pub fn semisup(args: SemisupArgs) -> Result<()> {
    let cfg = args.hyper.to_config()?;
    let train_path = resolve(&args.train);
    let test_path = resolve(&args.test);
    let out = resolve(&args.out);
    let fractions = parse_f64_list(&args.fractions, "fraction")?;

    let mut m = ManifestBuilder::new(
        "semisup",
        json!({
            "train": serde_json::to_value(&cfg).unwrap(),
            "labeled_fraction": args.labeled_fraction,
            "fractions": fractions,
            "k": args.k,
        }),
        cfg.seed,
    );
    m.input(&train_path).input(&test_path);
    let full_train = load_sequences(&train_path)?;
    let test = load_sequences(&test_path)?;

    let report = semi_sup_run(&full_train, &test, args.labeled_fraction, &fractions, &cfg, args.k)?;

    let mut body = String::from("fraction\taccuracy\n");
    let mut stdout_line = String::new();
    for (f, a) in &report.points {
        body.push_str(&format!("{f}\t{a}\n"));
        stdout_line.push_str(&format!(" {f}:{a:.3}"));
    }
    write_text(&out, &body)?;
    m.output(&out);
    m.write(&sibling_manifest_path(&out))?;
    println!("semi-supervised accuracies:{stdout_line}");
    std::io::stdout().flush().ok();
    Ok(())
}
