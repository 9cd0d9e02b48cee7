use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc::sync_channel;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{augment, eval_rng, forward_classify, prepare, streams, ExperimentConfig, Model};
use crate::error::{Error, Result};
use crate::ingest::{Dataset, Split};
use crate::net::{backward, save_checkpoint, AdamState, Checkpoint, Mode, Network, Parameters};
use crate::rng::rng_for;
use crate::sketch::VectorSketch;

pub const METRICS_FORMAT: &str = "r2cnn-metrics";
pub const METRICS_VERSION: u32 = 1;

/// Dataset with every sketch simplified and placed on the canvas.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSet {
    pub categories: Vec<String>,
    pub split: Split,
    pub sketches: Vec<VectorSketch>,
    pub labels: Vec<usize>,
}

impl PreparedSet {
    pub fn new(dataset: &Dataset, config: &ExperimentConfig) -> Result<Self> {
        let prep = |item: &crate::ingest::LabeledSketch| prepare(&item.sketch, config);
        #[cfg(feature = "parallel")]
        let sketches: Result<Vec<_>> = {
            use rayon::prelude::*;
            dataset.items.par_iter().map(prep).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let sketches: Result<Vec<_>> = dataset.items.iter().map(prep).collect();
        Ok(Self {
            categories: dataset.categories.clone(),
            split: dataset.split,
            sketches: sketches?,
            labels: dataset.items.iter().map(|i| i.label).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.sketches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sketches.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean training loss over the epoch's augmented batches.
    pub train_loss: f64,
    /// Eval-mode accuracy on the un-augmented training set.
    pub train_accuracy: f64,
    pub valid_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// Kept out of `metrics.jsonl` so that file is reproducible; written to
    /// `timing.jsonl` instead.
    #[serde(skip)]
    pub wall_clock_s: f64,
}

#[derive(Serialize)]
struct MetricsLine<'a> {
    format: &'static str,
    version: u32,
    #[serde(flatten)]
    metrics: &'a EpochMetrics,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metrics {
    pub epochs: Vec<EpochMetrics>,
}

impl Metrics {
    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }

    pub fn line(m: &EpochMetrics) -> String {
        serde_json::to_string(&MetricsLine {
            format: METRICS_FORMAT,
            version: METRICS_VERSION,
            metrics: m,
        })
        .expect("metrics serialize")
    }

    pub fn to_jsonl(&self) -> String {
        self.epochs.iter().map(|m| Self::line(m) + "\n").collect()
    }

    /// Parse a `metrics.jsonl` file body.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Line {
            format: String,
            version: u32,
            #[serde(flatten)]
            metrics: EpochMetrics,
        }
        let mut epochs = Vec::new();
        for l in text.lines().filter(|l| !l.trim().is_empty()) {
            let line: Line = serde_json::from_str(l).map_err(|e| Error::MalformedLine(e.to_string()))?;
            if line.format != METRICS_FORMAT {
                return Err(Error::MalformedLine(format!("not a metrics line: {:?}", line.format)));
            }
            if line.version != METRICS_VERSION {
                return Err(Error::VersionMismatch {
                    kind: "metrics",
                    found: line.version,
                    expected: METRICS_VERSION,
                });
            }
            epochs.push(line.metrics);
        }
        Ok(Self { epochs })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    /// Where metrics, timing and checkpoints go; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    /// Batches buffered between the augmentation thread and the trainer.
    pub queue_depth: usize,
    /// Print one progress line per epoch to stderr.
    pub progress: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            out_dir: None,
            queue_depth: 4,
            progress: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters after the final epoch.
    pub model: Model,
    /// Parameters from the epoch with the best validation accuracy (train
    /// accuracy when no validation set is given); earliest epoch wins ties.
    pub best: Model,
    pub best_epoch: usize,
    pub adam: AdamState<Network>,
    pub metrics: Metrics,
}

/// Top-1 eval-mode accuracy on a raw dataset.
pub fn evaluate(model: &Model, dataset: &Dataset) -> Result<f64> {
    evaluate_prepared(model, &PreparedSet::new(dataset, &model.config)?)
}

/// Top-1 eval-mode accuracy on an already prepared set.
pub fn evaluate_prepared(model: &Model, set: &PreparedSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let correct = |(s, &label): (&VectorSketch, &usize)| -> Result<bool> {
        let mut rng = eval_rng(model.config.seed, s);
        Ok(forward_classify(model, s, Mode::Eval, &mut rng)?.predicted() == label)
    };
    #[cfg(feature = "parallel")]
    let hits: Result<Vec<bool>> = {
        use rayon::prelude::*;
        set.sketches.par_iter().zip(&set.labels).map(correct).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let hits: Result<Vec<bool>> = set.sketches.iter().zip(&set.labels).map(correct).collect();
    let hits = hits?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

struct ItemResult {
    index: usize,
    loss: f64,
    grads: Network,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

fn non_finite(out_dir: Option<&Path>, epoch: usize, step: usize, items: &[(usize, f64)], what: &str) -> Error {
    let detail = format!(
        "{what}; items {:?}",
        items.iter().map(|(i, l)| format!("{i}:{l}")).collect::<Vec<_>>()
    );
    if let Some(dir) = out_dir {
        let dump = serde_json::json!({
            "epoch": epoch,
            "step": step,
            "reason": what,
            "items": items.iter().map(|(i, l)| serde_json::json!({"index": i, "loss": l.to_string()})).collect::<Vec<_>>(),
        });
        // Best effort: the training error is what gets reported.
        let _ = fs::write(dir.join("nonfinite_dump.json"), dump.to_string());
    }
    Error::NonFiniteLoss { epoch, step, detail }
}

/// Train `config.variant` on `train`, evaluating on `valid` and `test` after
/// every epoch.
pub fn train(
    config: &ExperimentConfig,
    train: &Dataset,
    valid: Option<&Dataset>,
    test: Option<&Dataset>,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let prep = |d: &Dataset| -> Result<PreparedSet> {
        if d.categories != train.categories {
            return Err(Error::InvalidConfig(format!("{} split has different categories", d.split)));
        }
        PreparedSet::new(d, config)
    };
    let train_set = PreparedSet::new(train, config)?;
    let valid_set = valid.map(prep).transpose()?;
    let test_set = test.map(prep).transpose()?;
    train_prepared(config, &train_set, valid_set.as_ref(), test_set.as_ref(), options)
}

/// [`train`] on prepared sets.
pub fn train_prepared(
    config: &ExperimentConfig,
    train: &PreparedSet,
    valid: Option<&PreparedSet>,
    test: Option<&PreparedSet>,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    let mut model = Model::new(config.clone(), train.categories.clone())?;
    let mut adam = AdamState::new(&model.network);
    let out_dir = options.out_dir.as_deref();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("config.json"), config.to_json().as_bytes())?;
        for name in ["metrics.jsonl", "timing.jsonl"] {
            write_file(&dir.join(name), b"")?;
        }
    }
    let seed = config.seed;
    let width = config.raster.width;
    let mut metrics = Metrics::default();
    let mut best = (model.clone(), 0usize, f64::NEG_INFINITY);
    let mut step = 0usize;

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng_for(seed, &[streams::SHUFFLE, epoch as u64]));
        let batches: Vec<Vec<usize>> = order.chunks(config.batch_size).map(<[usize]>::to_vec).collect();
        let mut loss_sum = 0.0;

        std::thread::scope(|scope| -> Result<()> {
            let (tx, rx) = sync_channel::<Vec<(usize, VectorSketch)>>(options.queue_depth.max(1));
            scope.spawn(move || {
                for batch in batches {
                    let items = batch
                        .into_iter()
                        .map(|i| {
                            let mut rng = rng_for(seed, &[streams::AUGMENT, epoch as u64, i as u64]);
                            (i, augment(&train.sketches[i], &mut rng, &config.augment, width))
                        })
                        .collect();
                    if tx.send(items).is_err() {
                        break;
                    }
                }
            });

            for items in rx {
                step += 1;
                let scale = 1.0 / items.len() as f64;
                let run = |(i, sketch): &(usize, VectorSketch)| -> Result<ItemResult> {
                    let mut rng = rng_for(seed, &[streams::FORWARD, epoch as u64, *i as u64]);
                    let mut c = forward_classify(&model, sketch, Mode::Train, &mut rng)?;
                    let loss = c.record_loss(train.labels[*i])?;
                    let grads = backward(&mut c.tape, &model.network, scale)?.grads;
                    Ok(ItemResult {
                        index: *i,
                        loss,
                        grads,
                    })
                };
                #[cfg(feature = "parallel")]
                let results: Result<Vec<ItemResult>> = {
                    use rayon::prelude::*;
                    items.par_iter().map(run).collect()
                };
                #[cfg(not(feature = "parallel"))]
                let results: Result<Vec<ItemResult>> = items.iter().map(run).collect();
                let results = results?;

                let losses: Vec<(usize, f64)> = results.iter().map(|r| (r.index, r.loss)).collect();
                if losses.iter().any(|(_, l)| !l.is_finite()) {
                    return Err(non_finite(out_dir, epoch, step, &losses, "non-finite loss"));
                }
                let mut iter = results.into_iter();
                let first = iter.next().expect("batches are non-empty");
                let mut grads = first.grads;
                loss_sum += first.loss;
                for r in iter {
                    grads.add_assign(&r.grads);
                    loss_sum += r.loss;
                }
                if !grads.all_finite() {
                    return Err(non_finite(out_dir, epoch, step, &losses, "non-finite gradient"));
                }
                adam.step(&config.optimizer, &mut model.network, &grads)?;
            }
            Ok(())
        })?;

        let train_accuracy = evaluate_prepared(&model, train)?;
        let valid_accuracy = valid.map(|v| evaluate_prepared(&model, v)).transpose()?;
        let test_accuracy = test.map(|t| evaluate_prepared(&model, t)).transpose()?;
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy,
            valid_accuracy,
            test_accuracy,
            wall_clock_s: started.elapsed().as_secs_f64(),
        };
        let selection = valid_accuracy.unwrap_or(train_accuracy);
        let improved = selection > best.2;
        if improved {
            best = (model.clone(), epoch, selection);
        }
        if let Some(dir) = out_dir {
            append_line(&dir.join("metrics.jsonl"), &Metrics::line(&m))?;
            append_line(
                &dir.join("timing.jsonl"),
                &serde_json::json!({"epoch": epoch, "wall_clock_s": m.wall_clock_s}).to_string(),
            )?;
            let ck = Checkpoint {
                network: model.network.clone(),
                adam: adam.clone(),
                seed,
                epoch,
                experiment: model.meta_json(),
            };
            save_checkpoint(&ck, dir.join("checkpoint_last.ckpt"))?;
            if improved {
                save_checkpoint(&ck, dir.join("checkpoint_best.ckpt"))?;
            }
        }
        if options.progress {
            eprintln!(
                "epoch {epoch:>3}  loss {:.4}  train {:.3}  valid {}  test {}  {:.1}s",
                m.train_loss,
                m.train_accuracy,
                m.valid_accuracy.map_or("-".into(), |v| format!("{v:.3}")),
                m.test_accuracy.map_or("-".into(), |v| format!("{v:.3}")),
                m.wall_clock_s
            );
        }
        metrics.epochs.push(m);
    }

    Ok(TrainOutcome {
        model,
        best: best.0,
        best_epoch: best.1,
        adam,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{synth_dataset, SynthCategory};
    use crate::net::{CnnConfig, RnnConfig};
    use crate::nlr::RasterConfig;
    use crate::pipeline::Variant;

    fn small(variant: Variant, epochs: usize, lr: f64) -> ExperimentConfig {
        let mut c = ExperimentConfig::desk(variant, 2);
        c.rnn = RnnConfig::with_hidden(6);
        c.cnn = CnnConfig::with_channels(16, 16, [4, 4, 8], 2);
        c.raster = RasterConfig::new(16, 16, 1.0);
        c.pad = 2.0;
        c.epochs = epochs;
        c.batch_size = 4;
        c.optimizer.lr = lr;
        c
    }

    fn data(split: Split, n: usize) -> Dataset {
        synth_dataset(&[SynthCategory::Line, SynthCategory::Circle], 3, n, split)
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let cfg = small(Variant::SketchR2cnn, 2, 0.0);
        let out = train(&cfg, &data(Split::Train, 6), None, None, &TrainOptions::default()).unwrap();
        let init = Model::new(cfg, out.model.categories.clone()).unwrap();
        assert_eq!(out.model.network, init.network);
        assert_eq!(out.adam.step, 6);
        let acc: Vec<f64> = out.metrics.epochs.iter().map(|m| m.train_accuracy).collect();
        assert_eq!(acc[0], acc[1]);
    }

    #[test]
    fn runs_are_reproducible_and_write_artifacts() {
        let cfg = small(Variant::RandomStrokeOrderR2cnn, 2, 1e-2);
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        let mut outs = Vec::new();
        for d in &dirs {
            let opts = TrainOptions {
                out_dir: Some(d.path().to_path_buf()),
                queue_depth: 1,
                progress: false,
            };
            outs.push(train(&cfg, &data(Split::Train, 5), Some(&data(Split::Valid, 2)), None, &opts).unwrap());
        }
        assert_eq!(outs[0].model.network, outs[1].model.network);
        for f in ["metrics.jsonl", "checkpoint_last.ckpt", "checkpoint_best.ckpt", "config.json"] {
            let a = fs::read(dirs[0].path().join(f)).unwrap();
            assert_eq!(a, fs::read(dirs[1].path().join(f)).unwrap(), "{f}");
        }
        let text = fs::read_to_string(dirs[0].path().join("metrics.jsonl")).unwrap();
        let parsed = Metrics::from_jsonl(&text).unwrap();
        assert_eq!(parsed.epochs.len(), 2);
        assert_eq!(parsed.epochs[1].train_loss, outs[0].metrics.epochs[1].train_loss);
        let timing = fs::read_to_string(dirs[0].path().join("timing.jsonl")).unwrap();
        assert_eq!(timing.lines().count(), 2);
    }

    #[test]
    fn training_reduces_loss() {
        let cfg = small(Variant::CnnOnlyBinary, 8, 1e-2);
        let out = train(&cfg, &data(Split::Train, 12), None, None, &TrainOptions::default()).unwrap();
        let first = out.metrics.epochs.first().unwrap().train_loss;
        let last = out.metrics.last().unwrap().train_loss;
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn constant_logits_give_chance_accuracy() {
        let cfg = small(Variant::OrderEncodedCnn, 1, 0.0);
        let mut model = Model::new(cfg.clone(), vec!["line".into(), "circle".into()]).unwrap();
        model.network.cnn.fc_w.data.fill(0.0);
        assert_eq!(evaluate(&model, &data(Split::Test, 10)).unwrap(), 0.5);
    }

    #[test]
    fn accuracy_ignores_item_order() {
        let cfg = small(Variant::RandomStrokeOrderR2cnn, 1, 0.0);
        let model = Model::new(cfg, vec!["line".into(), "circle".into()]).unwrap();
        let d = data(Split::Test, 8);
        let mut rev = d.clone();
        rev.items.reverse();
        assert_eq!(evaluate(&model, &d).unwrap(), evaluate(&model, &rev).unwrap());
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let cfg = small(Variant::CnnOnlyBinary, 1, 0.0);
        let empty = Dataset::new(vec!["line".into(), "circle".into()], vec![], Split::Train).unwrap();
        assert!(matches!(train(&cfg, &empty, None, None, &TrainOptions::default()), Err(Error::EmptyDataset)));
        let other = synth_dataset(&[SynthCategory::Spiral, SynthCategory::Zigzag], 1, 2, Split::Valid);
        assert!(train(&cfg, &data(Split::Train, 2), Some(&other), None, &TrainOptions::default()).is_err());
    }

    #[test]
    fn diverging_run_reports_non_finite_loss() {
        let mut cfg = small(Variant::CnnOnlyBinary, 3, 1e300);
        cfg.optimizer.eps = 1e-300;
        let dir = tempfile::tempdir().unwrap();
        let opts = TrainOptions {
            out_dir: Some(dir.path().to_path_buf()),
            ..TrainOptions::default()
        };
        let err = train(&cfg, &data(Split::Train, 6), None, None, &opts).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { .. }), "{err}");
        assert!(dir.path().join("nonfinite_dump.json").exists());
    }
}
