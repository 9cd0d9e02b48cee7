//! Train a variant on the synthetic shape classes and print per-epoch metrics
//! and a test-set confusion matrix.
//!
//! `cargo run --release --example toy -- [variant] [epochs] [seed] [--squares]`

use r2cnn::ingest::{synth_dataset, Split, SynthCategory};
use r2cnn::pipeline::{predict, train, ExperimentConfig, TrainOptions, Variant};

fn main() -> r2cnn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let squares = args.iter().any(|a| a == "--squares");
    let positional: Vec<&String> = args.iter().filter(|a| !a.starts_with("--")).collect();
    let variant = positional
        .first()
        .and_then(|v| Variant::from_name(v))
        .unwrap_or(Variant::SketchR2cnn);
    let cats: Vec<SynthCategory> = if squares {
        SynthCategory::SQUARES.to_vec()
    } else {
        SynthCategory::ALL.to_vec()
    };
    let mut config = ExperimentConfig::desk(variant, cats.len());
    if let Some(e) = positional.get(1).and_then(|e| e.parse().ok()) {
        config.epochs = e;
    }
    if let Some(s) = positional.get(2).and_then(|s| s.parse().ok()) {
        config.seed = s;
    }
    let train_set = synth_dataset(&cats, config.seed, 200, Split::Train);
    let valid = synth_dataset(&cats, config.seed, 50, Split::Valid);
    let test = synth_dataset(&cats, config.seed, 50, Split::Test);
    let options = TrainOptions {
        progress: true,
        ..TrainOptions::default()
    };
    let out = train(&config, &train_set, Some(&valid), Some(&test), &options)?;

    let mut confusion = vec![vec![0usize; cats.len()]; cats.len()];
    for item in &test.items {
        confusion[item.label][predict(&out.model, &item.sketch)?.label] += 1;
    }
    for (c, row) in cats.iter().zip(&confusion) {
        println!("{:>11} {:?}", c.name(), row);
    }
    let last = out.metrics.last().expect("at least one epoch");
    println!(
        "{}: final train {:.3} test {:?}; best epoch {}",
        variant.name(),
        last.train_accuracy,
        last.test_accuracy,
        out.best_epoch
    );
    Ok(())
}
