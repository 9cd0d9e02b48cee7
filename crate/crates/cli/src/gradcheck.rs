//! Self-contained gradient-check profiles for `r2cnn gradcheck`.

use clap::ValueEnum;
use r2cnn::ingest::{synth_generate, SynthCategory};
use r2cnn::net::{
    backward, cross_entropy, grad_check_with, rnn_inputs, Cnn, CnnConfig, GradReport, Mode, Network, Parameters, Rnn,
    RnnConfig, Stencil, Tensor, REL_ERR_FLOOR,
};
use r2cnn::nlr::{binary_rasterize, rasterize_backward, rasterize_forward};
use r2cnn::pipeline::{eval_loss, eval_rng, forward_classify, prepare, ExperimentConfig, Model, Variant};
use r2cnn::rng::rng_for;
use r2cnn::{AttentionSequence, Grid, RasterConfig, Result, VectorSketch};
use rand::Rng as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// Rasterizer attention gradients on a 64x64 canvas.
    Nlr,
    /// LSTM and attention head parameters.
    Rnn,
    /// CNN parameters on a 16x16 input.
    Cnn,
    /// Every parameter of a tiny sketch_r2cnn model through the full chain.
    Full,
}

impl Profile {
    pub fn tolerance(self) -> f64 {
        match self {
            Profile::Nlr => 1e-6,
            Profile::Rnn => 1e-3,
            Profile::Cnn | Profile::Full => 1e-4,
        }
    }

    fn step(self) -> f64 {
        match self {
            Profile::Nlr => 1e-4,
            Profile::Rnn => 1e-3,
            Profile::Full => 1e-4,
            Profile::Cnn => 1e-4,
        }
    }

    /// The smooth LSTM profile gets the higher-order formula; profiles that
    /// pass through ReLU and max-pool kinks keep a narrow central stencil.
    fn stencil(self) -> Stencil {
        match self {
            Profile::Rnn => Stencil::FivePoint,
            _ => Stencil::Central,
        }
    }
}

/// Named attention vectors, one per probe sketch.
#[derive(Clone)]
struct AttentionSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl Parameters for AttentionSet {
    fn tensors(&self) -> Vec<&Tensor> {
        self.tensors.iter().collect()
    }
    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.tensors.iter_mut().collect()
    }
    fn names(&self) -> Vec<String> {
        self.names.clone()
    }
}

const PROBES: [SynthCategory; 3] = [SynthCategory::Zigzag, SynthCategory::Spiral, SynthCategory::SquareCw];

fn probe_sketch(category: SynthCategory, seed: u64, config: &ExperimentConfig) -> Result<VectorSketch> {
    prepare(&synth_generate(category, seed).sketch, config)
}

fn tiny_config(seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::desk(Variant::SketchR2cnn, 2);
    c.rnn = RnnConfig::with_hidden(8);
    c.cnn = CnnConfig::with_channels(16, 16, [4, 8, 8], 2);
    c.raster = RasterConfig::new(16, 16, 1.0);
    c.pad = 2.0;
    c.seed = seed;
    c
}

fn randomize_biases(cnn: &mut Cnn, seed: u64) {
    let mut rng = rng_for(seed, &[0xb1a5]);
    for conv in &mut cnn.convs {
        conv.bias.data.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
    }
}

/// Perturb the first entry of the analytic gradient named `name`.
fn corrupt<P: Parameters>(analytic: &mut P, name: &str) -> bool {
    let names = analytic.names();
    match names.iter().position(|n| n == name) {
        Some(i) => {
            analytic.tensors_mut()[i].data[0] += 1.0;
            true
        }
        None => false,
    }
}

fn finish<P: Parameters + Clone>(
    f: impl Fn(&P) -> f64,
    params: &P,
    mut analytic: P,
    profile: Profile,
    corrupt_name: Option<&str>,
) -> std::result::Result<GradReport, String> {
    if let Some(name) = corrupt_name {
        if !corrupt(&mut analytic, name) {
            return Err(format!("no tensor named {name:?}; available: {}", params.names().join(", ")));
        }
    }
    Ok(grad_check_with(
        f,
        params,
        &analytic,
        profile.step(),
        profile.tolerance(),
        REL_ERR_FLOOR,
        profile.stencil(),
    ))
}

/// Run `profile`. An `Err` carries a message about a bad `corrupt` name.
pub fn run(profile: Profile, seed: u64, corrupt_name: Option<&str>) -> Result<std::result::Result<GradReport, String>> {
    match profile {
        Profile::Nlr => {
            let raster = RasterConfig::new(64, 64, 1.0);
            let mut config = ExperimentConfig::desk(Variant::SketchR2cnn, 2);
            config.raster = raster;
            let mut rng = rng_for(seed, &[1]);
            let mut sketches = Vec::new();
            let mut deltas = Vec::new();
            let mut params = AttentionSet {
                names: Vec::new(),
                tensors: Vec::new(),
            };
            let mut analytic = params.clone();
            for cat in PROBES {
                let s = probe_sketch(cat, seed, &config)?;
                let a: Vec<f64> = (0..s.len()).map(|_| rng.random_range(0.0..1.0)).collect();
                let delta = Grid::from_vec(64, 64, (0..64 * 64).map(|_| rng.random_range(-1.0..1.0)).collect())?;
                let map = rasterize_forward(&s, &AttentionSequence(a.clone()), &raster)?;
                let g = rasterize_backward(&map, &delta)?;
                let name = format!("nlr.attention.{}", cat.name());
                params.names.push(name.clone());
                analytic.names.push(name);
                params.tensors.push(Tensor {
                    shape: vec![a.len()],
                    data: a,
                });
                analytic.tensors.push(Tensor {
                    shape: vec![g.values().len()],
                    data: g.values().to_vec(),
                });
                sketches.push(s);
                deltas.push(delta);
            }
            let f = |p: &AttentionSet| {
                p.tensors
                    .iter()
                    .zip(sketches.iter().zip(&deltas))
                    .map(|(t, (s, d))| {
                        let map = rasterize_forward(s, &AttentionSequence(t.data.clone()), &raster)
                            .expect("probe sketch rasterizes");
                        d.dot(&map.intensities)
                    })
                    .sum()
            };
            Ok(finish(f, &params, analytic, profile, corrupt_name))
        }
        Profile::Rnn => {
            let config = tiny_config(seed);
            let rnn = Rnn::new(config.rnn, &mut rng_for(seed, &[2]))?;
            let s = probe_sketch(SynthCategory::Spiral, seed, &config)?;
            let inputs = rnn_inputs(&s.to_offsets(), config.offset_scale);
            let mut rng = rng_for(seed, &[3]);
            let weights: Vec<f64> = (0..inputs.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, trace) = rnn.forward(&inputs, Mode::Eval, None)?;
            let mut grads = rnn.clone();
            grads.zero();
            rnn.backward(&trace, &weights, &mut grads)?;
            let f = |r: &Rnn| {
                let (a, _) = r.forward(&inputs, Mode::Eval, None).expect("probe forward");
                a.values().iter().zip(&weights).map(|(x, w)| x * w).sum()
            };
            Ok(finish(f, &rnn, grads, profile, corrupt_name))
        }
        Profile::Cnn => {
            let config = tiny_config(seed);
            let mut cnn = Cnn::new(CnnConfig::with_channels(16, 16, [4, 8, 8], 3), &mut rng_for(seed, &[4]))?;
            randomize_biases(&mut cnn, seed);
            let s = probe_sketch(SynthCategory::Spiral, seed, &config)?;
            let image = binary_rasterize(&s, &config.raster)?;
            let (logits, trace) = cnn.forward(&image)?;
            let (_, d_logits) = cross_entropy(&logits, 1)?;
            let mut grads = cnn.clone();
            grads.zero();
            cnn.backward(&trace, &d_logits, &mut grads, false)?;
            let f = |c: &Cnn| {
                let (logits, _) = c.forward(&image).expect("probe forward");
                cross_entropy(&logits, 1).expect("label in range").0
            };
            Ok(finish(f, &cnn, grads, profile, corrupt_name))
        }
        Profile::Full => {
            let config = tiny_config(seed);
            let mut model = Model::new(config.clone(), vec!["zigzag".into(), "spiral".into()])?;
            randomize_biases(&mut model.network.cnn, seed);
            let s = probe_sketch(SynthCategory::Spiral, seed, &config)?;
            let mut c = forward_classify(&model, &s, Mode::Eval, &mut eval_rng(config.seed, &s))?;
            c.record_loss(1)?;
            let analytic = backward(&mut c.tape, &model.network, 1.0)?.grads;
            let f = |n: &Network| eval_loss(&config, n, &s, 1).expect("probe forward");
            Ok(finish(f, &model.network, analytic, profile, corrupt_name))
        }
    }
}
