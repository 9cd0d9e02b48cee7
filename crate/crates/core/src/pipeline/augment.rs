use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::sketch::{Point, VectorSketch};

pub const REFLECT_PROBABILITY: f64 = 0.5;
pub const STROKE_REMOVAL_PROBABILITY: f64 = 0.3;
pub const JITTER_SIGMA: f64 = 1.0;

/// Training-time augmentation switches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub reflect: bool,
    pub remove_stroke: bool,
    pub jitter: bool,
}

impl AugmentConfig {
    pub const OFF: AugmentConfig = AugmentConfig {
        reflect: false,
        remove_stroke: false,
        jitter: false,
    };

    pub const ALL: AugmentConfig = AugmentConfig {
        reflect: true,
        remove_stroke: true,
        jitter: true,
    };

    pub fn any(&self) -> bool {
        self.reflect || self.remove_stroke || self.jitter
    }
}

/// Mirror `x` across the vertical center line of a canvas `width` pixels wide.
pub fn reflect_horizontal(sketch: &VectorSketch, width: u32) -> VectorSketch {
    let w = f64::from(width) - 1.0;
    let points = sketch
        .points()
        .iter()
        .map(|p| Point::new(w - p.x, p.y, p.ends_stroke))
        .collect();
    VectorSketch::new(points).expect("reflection keeps points finite")
}

/// Random augmentation of a canvas-space sketch. Every random draw is made
/// whether or not its switch is on, so toggling one switch does not shift
/// the stream seen by the others.
pub fn augment(sketch: &VectorSketch, rng: &mut Rng, switches: &AugmentConfig, width: u32) -> VectorSketch {
    let do_reflect = rng.random_bool(REFLECT_PROBABILITY);
    let do_remove = rng.random_bool(STROKE_REMOVAL_PROBABILITY);
    let strokes = sketch.strokes();
    let victim = rng.random_range(0..strokes.len());
    if !switches.any() {
        return sketch.clone();
    }

    let mut points: Vec<Point> = if switches.remove_stroke && do_remove && strokes.len() > 1 {
        strokes
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != victim)
            .flat_map(|(_, r)| sketch.points()[r.clone()].iter().copied())
            .collect()
    } else {
        sketch.points().to_vec()
    };
    if switches.reflect && do_reflect {
        let w = f64::from(width) - 1.0;
        points.iter_mut().for_each(|p| p.x = w - p.x);
    }
    if switches.jitter {
        let noise = Normal::new(0.0, JITTER_SIGMA).expect("valid sigma");
        for p in &mut points {
            p.x += noise.sample(rng);
            p.y += noise.sample(rng);
        }
    }
    VectorSketch::new(points).expect("augmentation keeps at least one finite point")
}

/// Uniform random permutation of the strokes; points inside a stroke keep
/// their order.
pub fn randomize_stroke_order(sketch: &VectorSketch, rng: &mut Rng) -> VectorSketch {
    let mut strokes = sketch.strokes();
    strokes.shuffle(rng);
    let points = strokes
        .into_iter()
        .flat_map(|r| sketch.points()[r].iter().copied())
        .collect();
    VectorSketch::new(points).expect("permutation keeps the point set")
}
