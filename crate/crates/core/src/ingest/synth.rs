//! Synthetic single-stroke shapes for desk-scale experiments.
//!
//! Shapes are laid out in a unit frame, placed with a random similarity
//! transform into a 256-unit space, resampled along their outline and
//! jittered per point. `SquareCw` and `SquareCcw` draw the same jittered
//! outline in opposite temporal order, so their binary rasters are
//! identical for a matched seed and only the drawing order tells them apart.

use std::f64::consts::TAU;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{Dataset, LabeledSketch, Split};
use crate::rng::{derive_seed, rng_for, Rng};
use crate::sketch::VectorSketch;

const JITTER_SIGMA: f64 = 2.0;
const RESAMPLE_SPACING: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SynthCategory {
    Line,
    Circle,
    Zigzag,
    Spiral,
    SquareCw,
    SquareCcw,
}

impl SynthCategory {
    pub const ALL: [SynthCategory; 6] = [
        SynthCategory::Line,
        SynthCategory::Circle,
        SynthCategory::Zigzag,
        SynthCategory::Spiral,
        SynthCategory::SquareCw,
        SynthCategory::SquareCcw,
    ];

    /// The two raster-identical classes.
    pub const SQUARES: [SynthCategory; 2] = [SynthCategory::SquareCw, SynthCategory::SquareCcw];

    pub fn name(&self) -> &'static str {
        match self {
            SynthCategory::Line => "line",
            SynthCategory::Circle => "circle",
            SynthCategory::Zigzag => "zigzag",
            SynthCategory::Spiral => "spiral",
            SynthCategory::SquareCw => "square_cw",
            SynthCategory::SquareCcw => "square_ccw",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn label(&self) -> usize {
        Self::ALL.iter().position(|c| c == self).unwrap()
    }

    /// Random stream key; both squares share one so a seed fixes the outline.
    fn family(&self) -> u64 {
        match self {
            SynthCategory::SquareCw | SynthCategory::SquareCcw => 4,
            other => other.label() as u64,
        }
    }

    /// Control polyline in the unit frame, before transform and resampling.
    fn control_points(&self, rng: &mut Rng) -> Vec<(f64, f64)> {
        match self {
            SynthCategory::Line => vec![(-1.0, 0.0), (1.0, 0.0)],
            SynthCategory::Circle => {
                let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let aspect = rng.random_range(0.75..1.0);
                (0..=32)
                    .map(|i| {
                        let t = dir * TAU * i as f64 / 32.0;
                        (t.cos(), aspect * t.sin())
                    })
                    .collect()
            }
            SynthCategory::Zigzag => {
                let teeth = rng.random_range(4..=7);
                let amp = rng.random_range(0.3..0.6);
                (0..=teeth)
                    .map(|i| {
                        let x = -1.0 + 2.0 * i as f64 / teeth as f64;
                        (x, if i % 2 == 0 { -amp } else { amp })
                    })
                    .collect()
            }
            SynthCategory::Spiral => {
                let turns = rng.random_range(1.5..2.5);
                let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let steps = 64;
                (0..=steps)
                    .map(|i| {
                        let u = i as f64 / steps as f64;
                        let r = 0.1 + 0.9 * u;
                        let t = dir * turns * TAU * u;
                        (r * t.cos(), r * t.sin())
                    })
                    .collect()
            }
            // Screen coordinates point y down: right, then down is clockwise.
            SynthCategory::SquareCw | SynthCategory::SquareCcw => {
                vec![(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0)]
            }
        }
    }
}

fn resample(polyline: &[(f64, f64)], spacing: f64) -> Vec<(f64, f64)> {
    let mut out = vec![polyline[0]];
    for w in polyline.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let pieces = (len / spacing).ceil().max(1.0) as usize;
        for k in 1..=pieces {
            let t = k as f64 / pieces as f64;
            out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
        }
    }
    out
}

/// Generate one shape from an explicit random stream.
pub fn synth_generate_with(category: SynthCategory, rng: &mut Rng) -> LabeledSketch {
    let angle = rng.random_range(0.0..TAU);
    let scale = rng.random_range(55.0..85.0);
    let center = (
        128.0 + rng.random_range(-8.0..8.0),
        128.0 + rng.random_range(-8.0..8.0),
    );
    let control = category.control_points(rng);
    let (sin, cos) = angle.sin_cos();
    let placed: Vec<(f64, f64)> = control
        .iter()
        .map(|&(x, y)| {
            (
                center.0 + scale * (cos * x - sin * y),
                center.1 + scale * (sin * x + cos * y),
            )
        })
        .collect();
    let jitter = Normal::new(0.0, JITTER_SIGMA).expect("valid sigma");
    let mut stroke: Vec<(f64, f64)> = resample(&placed, RESAMPLE_SPACING)
        .into_iter()
        .map(|(x, y)| (x + jitter.sample(rng), y + jitter.sample(rng)))
        .collect();
    if category == SynthCategory::SquareCcw {
        stroke.reverse();
    }
    LabeledSketch {
        sketch: VectorSketch::from_strokes(&[stroke]).expect("finite synthetic stroke"),
        label: category.label(),
        category_name: category.name().to_owned(),
    }
}

/// Deterministic shape for `(category, seed)`. Both squares drawn from the
/// same seed share every random draw.
pub fn synth_generate(category: SynthCategory, seed: u64) -> LabeledSketch {
    synth_generate_with(category, &mut rng_for(seed, &[category.family()]))
}

/// `per_class` items of each category, category-major. Labels index into
/// `categories`. Splits draw from disjoint seed paths.
pub fn synth_dataset(categories: &[SynthCategory], seed: u64, per_class: usize, split: Split) -> Dataset {
    let mut items = Vec::with_capacity(categories.len() * per_class);
    for (label, &cat) in categories.iter().enumerate() {
        for k in 0..per_class {
            let mut item = synth_generate(cat, derive_seed(seed, &[split.tag(), k as u64]));
            item.label = label;
            items.push(item);
        }
    }
    Dataset::new(categories.iter().map(|c| c.name().to_owned()).collect(), items, split)
        .expect("labels index the category list")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlr::{binary_rasterize, RasterConfig};

    #[test]
    fn deterministic_per_seed() {
        for cat in SynthCategory::ALL {
            assert_eq!(synth_generate(cat, 11), synth_generate(cat, 11));
            assert_ne!(synth_generate(cat, 11).sketch, synth_generate(cat, 12).sketch);
        }
    }

    #[test]
    fn line_has_two_control_points() {
        let mut rng = rng_for(0, &[]);
        assert_eq!(SynthCategory::Line.control_points(&mut rng).len(), 2);
        assert!(synth_generate(SynthCategory::Line, 5).sketch.len() > 2);
    }

    #[test]
    fn squares_share_outline_in_reverse() {
        let cw = synth_generate(SynthCategory::SquareCw, 7).sketch;
        let ccw = synth_generate(SynthCategory::SquareCcw, 7).sketch;
        let mut rev: Vec<_> = cw.points().iter().map(|p| (p.x, p.y)).collect();
        rev.reverse();
        let fwd: Vec<_> = ccw.points().iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(rev, fwd);
    }

    #[test]
    fn squares_are_raster_identical_with_matched_jitter() {
        let cfg = RasterConfig::new(64, 64, 1.0);
        for seed in 0..20 {
            let cw = synth_generate(SynthCategory::SquareCw, seed).sketch;
            let ccw = synth_generate(SynthCategory::SquareCcw, seed).sketch;
            let a = binary_rasterize(&cw.normalize_to_canvas(64, 64, 4.0).unwrap(), &cfg).unwrap();
            let b = binary_rasterize(&ccw.normalize_to_canvas(64, 64, 4.0).unwrap(), &cfg).unwrap();
            assert_eq!(a, b);
        }
        // Independent jitter streams give different rasters.
        let cw = synth_generate(SynthCategory::SquareCw, 1).sketch;
        let ccw = synth_generate(SynthCategory::SquareCcw, 2).sketch;
        let a = binary_rasterize(&cw.normalize_to_canvas(64, 64, 4.0).unwrap(), &cfg).unwrap();
        let b = binary_rasterize(&ccw.normalize_to_canvas(64, 64, 4.0).unwrap(), &cfg).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn coordinates_stay_in_quickdraw_range() {
        for cat in SynthCategory::ALL {
            for seed in 0..50 {
                let (x0, y0, x1, y1) = synth_generate(cat, seed).sketch.bounds();
                assert!(x0 > -10.0 && y0 > -10.0 && x1 < 266.0 && y1 < 266.0, "{cat:?} {seed}");
            }
        }
    }

    #[test]
    fn dataset_counts_and_split_disjointness() {
        let train = synth_dataset(&SynthCategory::ALL, 1, 200, Split::Train);
        assert_eq!(train.len(), 1200);
        assert_eq!(train.num_classes(), 6);
        let test = synth_dataset(&SynthCategory::ALL, 1, 50, Split::Test);
        for t in &test.items {
            assert!(!train.items.iter().any(|it| it.sketch == t.sketch));
        }
    }
}
