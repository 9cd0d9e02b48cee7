//! Model assembly, training and evaluation.
//!
//! Four variants share one CNN classifier and differ in what image it sees:
//!
//! | variant                     | CNN input                                    |
//! |-----------------------------|----------------------------------------------|
//! | `sketch_r2cnn`              | attention map from the LSTM through the NLR  |
//! | `cnn_only_binary`           | binary raster                                |
//! | `order_encoded_cnn`         | raster shaded by a 1 → 0 drawing-order ramp  |
//! | `random_stroke_order_r2cnn` | `sketch_r2cnn` after shuffling stroke order  |
//!
//! Sketches are simplified and normalized to the canvas once
//! ([`prepare`]); augmentation then works in canvas coordinates.

mod augment;
mod train;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::net::{
    cross_entropy, rnn_inputs, softmax, AdamConfig, Checkpoint, Cnn, CnnConfig, Mode, Network, Rnn, RnnConfig, Tape,
    TapeEntry,
};
use crate::nlr::{rasterize_forward, AttentionMap, AttentionSequence, Coverage, RasterConfig};
use crate::rng::{derive_seed, rng_for, Rng};
use crate::simplify::{simplify_sketch, SimplifyConfig};
use crate::sketch::VectorSketch;

pub use augment::{
    augment, randomize_stroke_order, reflect_horizontal, AugmentConfig, JITTER_SIGMA, REFLECT_PROBABILITY,
    STROKE_REMOVAL_PROBABILITY,
};
pub use train::{
    evaluate, evaluate_prepared, train, train_prepared, EpochMetrics, Metrics, PreparedSet, TrainOptions, TrainOutcome,
    METRICS_FORMAT, METRICS_VERSION,
};

pub const EXPERIMENT_FORMAT: &str = "r2cnn-experiment";
pub const EXPERIMENT_VERSION: u32 = 1;

/// Stream keys under the experiment seed.
pub(crate) mod streams {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const AUGMENT: u64 = 3;
    pub const FORWARD: u64 = 4;
    pub const EVAL: u64 = 5;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    SketchR2cnn,
    CnnOnlyBinary,
    OrderEncodedCnn,
    RandomStrokeOrderR2cnn,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::SketchR2cnn,
        Variant::CnnOnlyBinary,
        Variant::OrderEncodedCnn,
        Variant::RandomStrokeOrderR2cnn,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::SketchR2cnn => "sketch_r2cnn",
            Variant::CnnOnlyBinary => "cnn_only_binary",
            Variant::OrderEncodedCnn => "order_encoded_cnn",
            Variant::RandomStrokeOrderR2cnn => "random_stroke_order_r2cnn",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name)
    }

    pub fn uses_rnn(&self) -> bool {
        matches!(self, Variant::SketchR2cnn | Variant::RandomStrokeOrderR2cnn)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub format: String,
    pub version: u32,
    pub variant: Variant,
    pub rnn: RnnConfig,
    pub cnn: CnnConfig,
    pub raster: RasterConfig,
    pub simplify: SimplifyConfig,
    /// Canvas margin used when normalizing sketches.
    pub pad: f64,
    /// Divisor, in canvas pixels, applied to point offsets before the LSTM.
    pub offset_scale: f64,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub augment: AugmentConfig,
}

impl ExperimentConfig {
    /// Full-size settings: 224 canvas, 512 hidden units, batch 48.
    pub fn paper(variant: Variant, num_classes: usize) -> Self {
        Self {
            format: EXPERIMENT_FORMAT.to_owned(),
            version: EXPERIMENT_VERSION,
            variant,
            rnn: RnnConfig::default(),
            cnn: CnnConfig::toy(224, 224, num_classes),
            raster: RasterConfig::default(),
            simplify: SimplifyConfig::default(),
            pad: 4.0,
            offset_scale: 224.0,
            optimizer: AdamConfig::default(),
            batch_size: 48,
            epochs: 30,
            seed: 0,
            augment: AugmentConfig::ALL,
        }
    }

    /// CPU-sized settings: 64 canvas, 32 hidden units, batch 16, a narrower
    /// CNN and a higher learning rate. Offsets are divided by 8 px rather
    /// than the canvas width so the LSTM sees inputs of order one within a
    /// short run. Reflection is off because it turns a clockwise drawing
    /// into a counter-clockwise one.
    pub fn desk(variant: Variant, num_classes: usize) -> Self {
        Self {
            rnn: RnnConfig::with_hidden(32),
            cnn: CnnConfig::with_channels(64, 64, [8, 16, 32], num_classes),
            raster: RasterConfig::new(64, 64, 1.0),
            offset_scale: 8.0,
            optimizer: AdamConfig::with_lr(3e-3),
            batch_size: 16,
            epochs: 20,
            augment: AugmentConfig {
                reflect: false,
                remove_stroke: true,
                jitter: true,
            },
            ..Self::paper(variant, num_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != EXPERIMENT_FORMAT {
            return Err(Error::InvalidConfig(format!("not an experiment config: format {:?}", self.format)));
        }
        if self.version != EXPERIMENT_VERSION {
            return Err(Error::VersionMismatch {
                kind: "experiment",
                found: self.version,
                expected: EXPERIMENT_VERSION,
            });
        }
        self.rnn.validate()?;
        self.cnn.validate()?;
        self.raster.validate()?;
        self.simplify.validate()?;
        self.optimizer.validate()?;
        if (self.cnn.width, self.cnn.height) != (self.raster.width as usize, self.raster.height as usize) {
            return Err(Error::InvalidConfig(format!(
                "cnn expects {}x{} but the canvas is {}x{}",
                self.cnn.width, self.cnn.height, self.raster.width, self.raster.height
            )));
        }
        if !(self.offset_scale > 0.0 && self.offset_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("offset scale {} must be > 0", self.offset_scale)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Tag {
            format: String,
            version: u32,
        }
        let tag: Tag = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if tag.format != EXPERIMENT_FORMAT {
            return Err(Error::InvalidConfig(format!("not an experiment config: format {:?}", tag.format)));
        }
        if tag.version != EXPERIMENT_VERSION {
            return Err(Error::VersionMismatch {
                kind: "experiment",
                found: tag.version,
                expected: EXPERIMENT_VERSION,
            });
        }
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Simplify in the source coordinate space, then fit onto the canvas.
pub fn prepare(sketch: &VectorSketch, config: &ExperimentConfig) -> Result<VectorSketch> {
    simplify_sketch(sketch, &config.simplify)?.normalize_to_canvas(config.raster.width, config.raster.height, config.pad)
}

/// A trainable classifier together with its experiment settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ExperimentConfig,
    pub categories: Vec<String>,
    pub network: Network,
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    config: ExperimentConfig,
    categories: Vec<String>,
}

impl Model {
    /// Fresh parameters drawn from the experiment seed.
    pub fn new(config: ExperimentConfig, categories: Vec<String>) -> Result<Self> {
        config.validate()?;
        if categories.len() != config.cnn.num_classes {
            return Err(Error::InvalidConfig(format!(
                "{} categories for a {}-class network",
                categories.len(),
                config.cnn.num_classes
            )));
        }
        let mut rng = rng_for(config.seed, &[streams::INIT]);
        let rnn = if config.variant.uses_rnn() {
            Some(Rnn::new(config.rnn, &mut rng)?)
        } else {
            None
        };
        let cnn = Cnn::new(config.cnn.clone(), &mut rng)?;
        Ok(Self {
            config,
            categories,
            network: Network { rnn, cnn },
        })
    }

    pub fn with_network(&self, network: Network) -> Self {
        Self {
            network,
            ..self.clone()
        }
    }

    pub(crate) fn meta_json(&self) -> serde_json::Value {
        serde_json::to_value(ModelMeta {
            config: self.config.clone(),
            categories: self.categories.clone(),
        })
        .expect("metadata serializes")
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let meta: ModelMeta =
            serde_json::from_value(ck.experiment).map_err(|e| Error::InvalidConfig(format!("checkpoint metadata: {e}")))?;
        meta.config.validate()?;
        if ck.network.rnn.is_some() != meta.config.variant.uses_rnn() || ck.network.cnn.config != meta.config.cnn {
            return Err(Error::InvalidConfig("checkpoint network does not match its experiment".into()));
        }
        Ok(Self {
            config: meta.config,
            categories: meta.categories,
            network: ck.network,
        })
    }
}

/// Everything one forward pass produced.
#[derive(Clone, Debug)]
pub struct Classified {
    pub logits: Vec<f64>,
    /// Per-point attention for the recurrent variants.
    pub attention: Option<AttentionSequence>,
    pub map: AttentionMap,
    /// The canvas-space sketch that was actually rasterized.
    pub sketch: VectorSketch,
    pub tape: Tape,
}

impl Classified {
    pub fn predicted(&self) -> usize {
        argmax(&self.logits)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    /// Append the cross-entropy stage and return the loss.
    pub fn record_loss(&mut self, label: usize) -> Result<f64> {
        let (loss, d_logits) = cross_entropy(&self.logits, label)?;
        self.tape.push(TapeEntry::Loss { loss, d_logits });
        Ok(loss)
    }
}

/// Index of the first maximal entry.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Forward pass of `network` under `config` on a prepared (canvas-space)
/// sketch. `rng` drives stroke shuffling and dropout.
pub fn forward_with(
    config: &ExperimentConfig,
    network: &Network,
    sketch: &VectorSketch,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Classified> {
    let mut tape = Tape::new();
    let sketch = match config.variant {
        Variant::RandomStrokeOrderR2cnn => randomize_stroke_order(sketch, rng),
        _ => sketch.clone(),
    };
    let (attention, map) = match config.variant {
        Variant::SketchR2cnn | Variant::RandomStrokeOrderR2cnn => {
            let rnn = network
                .rnn
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig(format!("{} needs an rnn", config.variant.name())))?;
            let inputs = rnn_inputs(&sketch.to_offsets(), config.offset_scale);
            let (attention, trace) = rnn.forward(&inputs, mode, Some(rng))?;
            tape.push(TapeEntry::Rnn(trace));
            let coverage = Coverage::compute(&sketch, &config.raster)?;
            let intensities = coverage.shade(&attention)?;
            tape.push(TapeEntry::Raster(coverage.clone()));
            (Some(attention), AttentionMap { intensities, coverage })
        }
        Variant::CnnOnlyBinary => (
            None,
            rasterize_forward(&sketch, &AttentionSequence::uniform(sketch.len(), 1.0), &config.raster)?,
        ),
        Variant::OrderEncodedCnn => (
            None,
            rasterize_forward(&sketch, &AttentionSequence::ramp(sketch.len()), &config.raster)?,
        ),
    };
    let (logits, trace) = network.cnn.forward(&map.intensities)?;
    tape.push(TapeEntry::Cnn(trace));
    Ok(Classified {
        logits,
        attention,
        map,
        sketch,
        tape,
    })
}

/// Forward pass of `model` on a prepared sketch.
pub fn forward_classify(model: &Model, sketch: &VectorSketch, mode: Mode, rng: &mut Rng) -> Result<Classified> {
    forward_with(&model.config, &model.network, sketch, mode, rng)
}

/// Evaluation stream keyed by the sketch content, so results do not depend
/// on where an item sits in its dataset.
pub fn eval_rng(seed: u64, sketch: &VectorSketch) -> Rng {
    let mut path = vec![streams::EVAL, sketch.len() as u64];
    for p in sketch.points() {
        path.push(p.x.to_bits());
        path.push(p.y.to_bits() ^ u64::from(p.ends_stroke));
    }
    rng_for(derive_seed(seed, &path), &[])
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub label: usize,
    pub category: String,
    pub probabilities: Vec<f64>,
    pub classified: Classified,
}

/// Prepare a raw sketch and classify it in eval mode.
pub fn predict(model: &Model, raw: &VectorSketch) -> Result<Prediction> {
    let sketch = prepare(raw, &model.config)?;
    let mut rng = eval_rng(model.config.seed, &sketch);
    let classified = forward_classify(model, &sketch, Mode::Eval, &mut rng)?;
    let label = classified.predicted();
    Ok(Prediction {
        label,
        category: model.categories[label].clone(),
        probabilities: classified.probabilities(),
        classified,
    })
}

/// Scalar loss of `network` on one labeled prepared sketch, eval mode.
pub fn eval_loss(config: &ExperimentConfig, network: &Network, sketch: &VectorSketch, label: usize) -> Result<f64> {
    let mut rng = eval_rng(config.seed, sketch);
    let c = forward_with(config, network, sketch, Mode::Eval, &mut rng)?;
    Ok(cross_entropy(&c.logits, label)?.0)
}

/// Dataset with every sketch passed through [`prepare`].
pub fn prepare_dataset(dataset: &Dataset, config: &ExperimentConfig) -> Result<PreparedSet> {
    PreparedSet::new(dataset, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{synth_generate, SynthCategory};
    use crate::net::{backward, grad_check, Parameters, REL_ERR_FLOOR};
    use crate::nlr::binary_rasterize;
    use rand::Rng as _;

    fn tiny(variant: Variant) -> ExperimentConfig {
        let mut c = ExperimentConfig::desk(variant, 2);
        c.rnn = RnnConfig::with_hidden(8);
        c.cnn = CnnConfig::with_channels(16, 16, [4, 8, 8], 2);
        c.raster = RasterConfig::new(16, 16, 1.0);
        c.pad = 2.0;
        c
    }

    fn sample(seed: u64, config: &ExperimentConfig) -> VectorSketch {
        prepare(&synth_generate(SynthCategory::Zigzag, seed).sketch, config).unwrap()
    }

    #[test]
    fn config_json_round_trip_and_version() {
        let c = ExperimentConfig::desk(Variant::OrderEncodedCnn, 6);
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
        let stale = c.to_json().replace("\"version\": 1", "\"version\": 0");
        assert!(matches!(ExperimentConfig::from_json(&stale), Err(Error::VersionMismatch { found: 0, .. })));
        let mut bad = c.clone();
        bad.raster.width = 32;
        assert!(bad.validate().is_err());
        let p = ExperimentConfig::paper(Variant::SketchR2cnn, 3);
        assert_eq!((p.batch_size, p.optimizer.lr, p.raster.width), (48, 1e-4, 224));
    }

    #[test]
    fn zero_head_map_is_half_the_binary_raster() {
        let config = tiny(Variant::SketchR2cnn);
        let mut model = Model::new(config.clone(), vec!["a".into(), "b".into()]).unwrap();
        model.network.rnn.as_mut().unwrap().zero_head();
        let s = sample(3, &config);
        let c = forward_classify(&model, &s, Mode::Eval, &mut rng_for(0, &[])).unwrap();
        let binary = binary_rasterize(&s, &config.raster).unwrap();
        assert_eq!(c.map.intensities, binary.scaled(0.5));
        assert!(c.attention.unwrap().values().iter().all(|&a| a == 0.5));
    }

    #[test]
    fn baselines_have_no_attention() {
        for v in [Variant::CnnOnlyBinary, Variant::OrderEncodedCnn] {
            let config = tiny(v);
            let model = Model::new(config.clone(), vec!["a".into(), "b".into()]).unwrap();
            assert!(model.network.rnn.is_none());
            let s = sample(1, &config);
            let c = forward_classify(&model, &s, Mode::Eval, &mut rng_for(0, &[])).unwrap();
            assert!(c.attention.is_none());
            assert_eq!(c.tape.entries().len(), 1);
        }
    }

    /// Loss gradient w.r.t. every parameter, through the CNN, the NLR and
    /// the LSTM, against central differences.
    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        let config = tiny(Variant::SketchR2cnn);
        let mut model = Model::new(config.clone(), vec!["a".into(), "b".into()]).unwrap();
        let mut rng = rng_for(11, &[]);
        for conv in &mut model.network.cnn.convs {
            conv.bias.data.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
        }
        let s = sample(5, &config);
        let mut c = forward_classify(&model, &s, Mode::Eval, &mut eval_rng(config.seed, &s)).unwrap();
        c.record_loss(1).unwrap();
        let out = backward(&mut c.tape, &model.network, 1.0).unwrap();
        assert!(out.attention_grad.is_some());
        let objective = |n: &Network| eval_loss(&config, n, &s, 1).unwrap();
        let rnn_only = |r: &Rnn| {
            let mut n = model.network.clone();
            n.rnn = Some(r.clone());
            objective(&n)
        };
        let report = grad_check(
            rnn_only,
            model.network.rnn.as_ref().unwrap(),
            out.grads.rnn.as_ref().unwrap(),
            1e-5,
            1e-4,
            REL_ERR_FLOOR,
        );
        assert!(report.passed, "{report}");
        assert!(out.grads.rnn.as_ref().unwrap().tensors().iter().any(|t| t.data.iter().any(|&g| g != 0.0)));
    }

    #[test]
    fn tape_is_single_use_and_loss_scales_gradients() {
        let config = tiny(Variant::SketchR2cnn);
        let model = Model::new(config.clone(), vec!["a".into(), "b".into()]).unwrap();
        let s = sample(2, &config);
        let mut c = forward_classify(&model, &s, Mode::Eval, &mut rng_for(0, &[])).unwrap();
        c.record_loss(0).unwrap();
        let mut tape2 = c.tape.clone();
        let one = backward(&mut c.tape, &model.network, 1.0).unwrap();
        assert!(matches!(backward(&mut c.tape, &model.network, 1.0), Err(Error::TapeConsumed)));
        let three = backward(&mut tape2, &model.network, 3.0).unwrap();
        for (a, b) in one.grads.tensors().iter().zip(three.grads.tensors()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((3.0 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn gradients_stay_finite_on_random_inputs() {
        let config = tiny(Variant::SketchR2cnn);
        let model = Model::new(config.clone(), vec!["a".into(), "b".into()]).unwrap();
        let mut rng = rng_for(4, &[]);
        for k in 0..1000 {
            let n = rng.random_range(1..12);
            let pts: Vec<crate::sketch::Point> = (0..n)
                .map(|_| {
                    crate::sketch::Point::new(
                        rng.random_range(-50.0..300.0),
                        rng.random_range(-50.0..300.0),
                        rng.random_bool(0.3),
                    )
                })
                .collect();
            let raw = VectorSketch::new(pts).unwrap();
            let s = prepare(&raw, &config).unwrap();
            let mut c = forward_classify(&model, &s, Mode::Eval, &mut rng_for(k, &[])).unwrap();
            c.record_loss(k as usize % 2).unwrap();
            let out = backward(&mut c.tape, &model.network, 1.0).unwrap();
            assert!(out.grads.all_finite());
        }
    }

    #[test]
    fn checkpoint_round_trip_restores_model() {
        let config = tiny(Variant::RandomStrokeOrderR2cnn);
        let model = Model::new(config, vec!["x".into(), "y".into()]).unwrap();
        let ck = Checkpoint {
            network: model.network.clone(),
            adam: crate::net::AdamState::new(&model.network),
            seed: model.config.seed,
            epoch: 0,
            experiment: model.meta_json(),
        };
        assert_eq!(Model::from_checkpoint(ck).unwrap(), model);
    }

    #[test]
    fn prediction_names_a_category() {
        let config = tiny(Variant::OrderEncodedCnn);
        let model = Model::new(config, vec!["x".into(), "y".into()]).unwrap();
        let p = predict(&model, &synth_generate(SynthCategory::Line, 1).sketch).unwrap();
        assert_eq!(model.categories[p.label], p.category);
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
