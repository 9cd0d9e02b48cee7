//! `r2cnn`: rasterize, simplify, gradient-check, train, evaluate and predict
//! from the command line. See `docs/r2cnn.1.md` for the full reference.

mod gradcheck;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use r2cnn::ingest::{load_dataset, load_sketch, save_internal, save_sketch, synth_dataset, Split, SynthCategory};
use r2cnn::net::{load_checkpoint, AdamConfig};
use r2cnn::nlr::{
    attention_from_json, attention_to_json, grid_to_json, provenance_to_json, rasterize_forward, write_pgm,
};
use r2cnn::pipeline::{evaluate, predict, train, ExperimentConfig, Model, TrainOptions, Variant};
use r2cnn::simplify::simplify_with_report;
use r2cnn::{AttentionSequence, RasterConfig, SimplifyConfig};
use serde_json::json;

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_GRADCHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "r2cnn", version, about = "Sketch recognition with recurrent attention and a differentiable line rasterizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize one sketch under an attention sequence.
    Rasterize(RasterizeArgs),
    /// Compare analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
    /// RDP-simplify one sketch under a point cap.
    Simplify(SimplifyArgs),
    /// Write a synthetic shape dataset.
    Synth(SynthArgs),
    /// Train a model and write metrics and checkpoints.
    Train(TrainArgs),
    /// Accuracy of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Classify one sketch and write its attention map.
    Predict(PredictArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AttentionMode {
    Uniform,
    Ramp,
    File,
}

#[derive(Args)]
struct RasterizeArgs {
    /// Internal-format sketch (`.json`) or QuickDraw line (`.ndjson`).
    input: PathBuf,
    /// Output PGM image.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "uniform")]
    attention: AttentionMode,
    /// Attention file for `--attention file`.
    #[arg(long)]
    attention_file: Option<PathBuf>,
    #[arg(long, default_value_t = 224)]
    width: u32,
    #[arg(long, default_value_t = 224)]
    height: u32,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    /// Canvas margin when fitting the sketch.
    #[arg(long, default_value_t = 4.0)]
    pad: f64,
    /// Use the input coordinates as canvas pixels instead of fitting.
    #[arg(long)]
    no_fit: bool,
    /// Also write the exact intensities as a JSON grid.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Also write per-pixel owners and interpolation weights.
    #[arg(long)]
    provenance: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "full")]
    profile: gradcheck::Profile,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Self-test hook: add 1 to the first analytic entry of this tensor.
    #[arg(long, value_name = "TENSOR")]
    corrupt: Option<String>,
}

#[derive(Args)]
struct SimplifyArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    eps: f64,
    #[arg(long, default_value_t = 448)]
    max_points: usize,
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset file (internal format).
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 200)]
    per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "train")]
    split: Split,
    /// Comma-separated category names; all six by default.
    #[arg(long, value_delimiter = ',')]
    categories: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ProfileName {
    Desk,
    Paper,
}

#[derive(Args)]
struct TrainArgs {
    /// Training data: internal dataset file or directory of `.ndjson` files.
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    valid: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Output directory for config, metrics and checkpoints.
    #[arg(short, long)]
    output: PathBuf,
    /// Experiment config file; overrides `--profile` and `--variant`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    profile: ProfileName,
    #[arg(long, default_value = "sketch_r2cnn")]
    variant: String,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Cap on items per category read from each dataset.
    #[arg(long, default_value_t = usize::MAX)]
    max_per_class: usize,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long, default_value_t = usize::MAX)]
    max_per_class: usize,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    input: PathBuf,
    /// Attention map image (PGM) for the prepared sketch.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Per-point attention values of the prepared sketch.
    #[arg(long)]
    attention_out: Option<PathBuf>,
}

struct Failure {
    kind: String,
    message: String,
    code: u8,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: "UsageError".into(),
            message: message.into(),
            code: EXIT_USAGE,
        }
    }
}

impl From<r2cnn::Error> for Failure {
    fn from(e: r2cnn::Error) -> Self {
        Self {
            kind: e.kind().into(),
            message: e.to_string(),
            code: EXIT_FAILURE,
        }
    }
}

type CmdResult = Result<(), Failure>;

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        kind: "IoError".into(),
        message: format!("{}: {e}", path.display()),
        code: EXIT_FAILURE,
    }
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

fn rasterize(args: RasterizeArgs) -> CmdResult {
    let raster = RasterConfig::new(args.width, args.height, args.eps);
    raster.validate()?;
    match (args.attention, &args.attention_file) {
        (AttentionMode::File, None) => return Err(Failure::usage("--attention file needs --attention-file")),
        (AttentionMode::Uniform | AttentionMode::Ramp, Some(_)) => {
            return Err(Failure::usage("--attention-file only applies to --attention file"))
        }
        _ => {}
    }
    let (raw, _) = load_sketch(&args.input)?;
    let sketch = if args.no_fit {
        raw
    } else {
        raw.normalize_to_canvas(args.width, args.height, args.pad)?
    };
    let attention = match (args.attention, &args.attention_file) {
        (AttentionMode::Uniform, _) => AttentionSequence::uniform(sketch.len(), 1.0),
        (AttentionMode::Ramp, _) => AttentionSequence::ramp(sketch.len()),
        (AttentionMode::File, Some(path)) => attention_from_json(&read_text(path)?)?,
        (AttentionMode::File, None) => unreachable!("checked above"),
    };
    let map = rasterize_forward(&sketch, &attention, &raster)?;
    write_pgm(&map.intensities, &args.output)?;
    if let Some(path) = &args.json {
        write_text(path, &grid_to_json(&map.intensities))?;
    }
    if let Some(path) = &args.provenance {
        write_text(path, &provenance_to_json(&map.coverage))?;
    }
    println!("owned_pixels {}", map.owned_pixels());
    Ok(())
}

fn run_gradcheck(args: GradcheckArgs) -> CmdResult {
    let report = gradcheck::run(args.profile, args.seed, args.corrupt.as_deref())?.map_err(Failure::usage)?;
    println!("{report}");
    if report.passed {
        println!("gradcheck {:?} passed (max rel err {:.3e})", args.profile, report.max_rel_err());
        return Ok(());
    }
    let worst = report.worst().expect("a failed report has tensors");
    Err(Failure {
        kind: "GradCheckFailed".into(),
        message: format!(
            "{} rel err {:.3e} at index {} exceeds {:.0e}",
            worst.name, worst.max_rel_err, worst.worst_index, report.tolerance
        ),
        code: EXIT_GRADCHECK,
    })
}

fn simplify(args: SimplifyArgs) -> CmdResult {
    let config = SimplifyConfig {
        epsilon: args.eps,
        max_points: args.max_points,
        ..SimplifyConfig::tu_berlin()
    };
    config.validate()?;
    let (sketch, category) = load_sketch(&args.input)?;
    let out = simplify_with_report(&sketch, &config)?;
    save_sketch(&out.sketch, category.as_deref(), &args.output)?;
    println!(
        "points {} -> {} (effective eps {}, escalations {}, truncated {})",
        sketch.len(),
        out.sketch.len(),
        out.effective_epsilon,
        out.escalations,
        out.truncated
    );
    Ok(())
}

fn synth(args: SynthArgs) -> CmdResult {
    let categories: Vec<SynthCategory> = if args.categories.is_empty() {
        SynthCategory::ALL.to_vec()
    } else {
        args.categories
            .iter()
            .map(|n| SynthCategory::from_name(n).ok_or_else(|| Failure::usage(format!("unknown category {n:?}"))))
            .collect::<Result<_, _>>()?
    };
    if args.per_class == 0 {
        return Err(Failure::usage("--per-class must be positive"));
    }
    let dataset = synth_dataset(&categories, args.seed, args.per_class, args.split);
    save_internal(&dataset, &args.output)?;
    println!("items {} categories {}", dataset.len(), dataset.num_classes());
    Ok(())
}

fn build_config(args: &TrainArgs, classes: usize) -> Result<ExperimentConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let variant = Variant::from_name(&args.variant)
                .ok_or_else(|| Failure::usage(format!("unknown variant {:?}", args.variant)))?;
            match args.profile {
                ProfileName::Desk => ExperimentConfig::desk(variant, classes),
                ProfileName::Paper => ExperimentConfig::paper(variant, classes),
            }
        }
    };
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(lr) = args.lr {
        config.optimizer = AdamConfig {
            lr,
            ..config.optimizer
        };
    }
    if let Some(b) = args.batch_size {
        config.batch_size = b;
    }
    if config.cnn.num_classes != classes {
        return Err(Failure::usage(format!(
            "config has {} classes but the data has {classes}",
            config.cnn.num_classes
        )));
    }
    config.validate()?;
    Ok(config)
}

fn train_cmd(args: TrainArgs) -> CmdResult {
    if args.config.is_none() {
        Variant::from_name(&args.variant).ok_or_else(|| Failure::usage(format!("unknown variant {:?}", args.variant)))?;
    }
    let train_set = load_dataset(&args.train, Split::Train, args.max_per_class)?;
    let config = build_config(&args, train_set.num_classes())?;
    let valid = args
        .valid
        .as_ref()
        .map(|p| load_dataset(p, Split::Valid, args.max_per_class))
        .transpose()?;
    let test = args
        .test
        .as_ref()
        .map(|p| load_dataset(p, Split::Test, args.max_per_class))
        .transpose()?;
    let options = TrainOptions {
        out_dir: Some(args.output.clone()),
        progress: !args.quiet,
        ..TrainOptions::default()
    };
    let out = train(&config, &train_set, valid.as_ref(), test.as_ref(), &options)?;
    let last = out.metrics.last().expect("at least one epoch");
    println!(
        "{}",
        json!({
            "variant": config.variant.name(),
            "epochs": last.epoch,
            "train_accuracy": last.train_accuracy,
            "valid_accuracy": last.valid_accuracy,
            "test_accuracy": last.test_accuracy,
            "best_epoch": out.best_epoch,
        })
    );
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> CmdResult {
    let model = Model::from_checkpoint(load_checkpoint(&args.checkpoint)?)?;
    let data = load_dataset(&args.data, args.split, args.max_per_class)?;
    if data.categories != model.categories {
        return Err(Failure::usage("dataset categories differ from the checkpoint's"));
    }
    let accuracy = evaluate(&model, &data)?;
    println!("{}", json!({"split": args.split.as_str(), "items": data.len(), "accuracy": accuracy}));
    Ok(())
}

fn predict_cmd(args: PredictArgs) -> CmdResult {
    let model = Model::from_checkpoint(load_checkpoint(&args.checkpoint)?)?;
    let (sketch, _) = load_sketch(&args.input)?;
    let p = predict(&model, &sketch)?;
    if let Some(path) = &args.map {
        write_pgm(&p.classified.map.intensities, path)?;
    }
    if let Some(path) = &args.attention_out {
        let attention = p
            .classified
            .attention
            .clone()
            .unwrap_or_else(|| AttentionSequence::uniform(p.classified.sketch.len(), 1.0));
        write_text(path, &attention_to_json(&attention))?;
    }
    println!(
        "{}",
        json!({"label": p.label, "category": p.category, "probabilities": p.probabilities})
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let message = e.kind().to_string();
            eprintln!("{}", json!({"error": "UsageError", "message": message}));
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let result = match cli.command {
        Command::Rasterize(a) => rasterize(a),
        Command::Gradcheck(a) => run_gradcheck(a),
        Command::Simplify(a) => simplify(a),
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Predict(a) => predict_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({"error": f.kind, "message": f.message}));
            ExitCode::from(f.code)
        }
    }
}
