//! Ramer-Douglas-Peucker stroke simplification and sequence-length capping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sketch::VectorSketch;

/// Number of times the tolerance is escalated before falling back to
/// truncation.
pub const MAX_ESCALATIONS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplifyConfig {
    pub epsilon: f64,
    pub max_points: usize,
    pub escalation_factor: f64,
}

impl Default for SimplifyConfig {
    fn default() -> Self {
        Self::tu_berlin()
    }
}

impl SimplifyConfig {
    /// Cap used for TU-Berlin-style sketches.
    pub fn tu_berlin() -> Self {
        Self {
            epsilon: 2.0,
            max_points: 448,
            escalation_factor: 1.5,
        }
    }

    /// Cap used for QuickDraw-style sketches.
    pub fn quickdraw() -> Self {
        Self {
            max_points: 321,
            ..Self::tu_berlin()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!("epsilon {} must be > 0", self.epsilon)));
        }
        if self.max_points < 2 {
            return Err(Error::InvalidConfig(format!(
                "max_points {} must be >= 2",
                self.max_points
            )));
        }
        if !(self.escalation_factor > 1.0 && self.escalation_factor.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "escalation_factor {} must be > 1",
                self.escalation_factor
            )));
        }
        Ok(())
    }
}

/// Squared distance from `p` to the closed segment `a..b`.
fn segment_dist2(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (ex, ey) = (p.0 - (a.0 + t * dx), p.1 - (a.1 + t * dy));
    ex * ex + ey * ey
}

/// Indices of the points RDP keeps, ascending. First and last always kept.
pub fn rdp_keep(points: &[(f64, f64)], epsilon: f64) -> Vec<usize> {
    let n = points.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let eps2 = epsilon * epsilon;
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    let mut stack = vec![(0, n - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (a, b) = (points[lo], points[hi]);
        let mut worst = (lo, -1.0);
        for (i, &p) in points.iter().enumerate().take(hi).skip(lo + 1) {
            let d2 = segment_dist2(p, a, b);
            if d2 > worst.1 {
                worst = (i, d2);
            }
        }
        if worst.1 > eps2 {
            keep[worst.0] = true;
            stack.push((worst.0, hi));
            stack.push((lo, worst.0));
        }
    }
    keep.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect()
}

/// Simplify one polyline. Discarded points lie within `epsilon` of the
/// simplified polyline.
pub fn rdp_stroke(points: &[(f64, f64)], epsilon: f64) -> Vec<(f64, f64)> {
    rdp_keep(points, epsilon).into_iter().map(|i| points[i]).collect()
}

/// Result of [`simplify_with_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct SimplifyOutcome {
    pub sketch: VectorSketch,
    /// Tolerance of the last RDP pass.
    pub effective_epsilon: f64,
    pub escalations: usize,
    /// Whether trailing strokes or points had to be cut to honor the cap.
    pub truncated: bool,
}

fn simplify_strokes(strokes: &[Vec<(f64, f64)>], epsilon: f64) -> Vec<Vec<(f64, f64)>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        strokes.par_iter().map(|s| rdp_stroke(s, epsilon)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        strokes.iter().map(|s| rdp_stroke(s, epsilon)).collect()
    }
}

fn assemble(strokes: &[Vec<(f64, f64)>]) -> VectorSketch {
    VectorSketch::from_strokes(strokes).expect("simplified strokes come from a valid sketch")
}

pub fn simplify_with_report(sketch: &VectorSketch, config: &SimplifyConfig) -> Result<SimplifyOutcome> {
    config.validate()?;
    let strokes: Vec<Vec<(f64, f64)>> = sketch
        .strokes()
        .into_iter()
        .map(|r| sketch.points()[r].iter().map(|p| (p.x, p.y)).collect())
        .collect();

    let mut epsilon = config.epsilon;
    let mut simplified = simplify_strokes(&strokes, epsilon);
    let mut escalations = 0;
    loop {
        let candidate = assemble(&simplified);
        if candidate.len() <= config.max_points {
            return Ok(SimplifyOutcome {
                sketch: candidate,
                effective_epsilon: epsilon,
                escalations,
                truncated: false,
            });
        }
        if escalations == MAX_ESCALATIONS {
            break;
        }
        escalations += 1;
        epsilon *= config.escalation_factor;
        simplified = simplify_strokes(&strokes, epsilon);
    }

    let mut points = assemble(&simplified).into_points();
    let mut ends: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.ends_stroke)
        .map(|(i, _)| i + 1)
        .collect();
    while points.len() > config.max_points && ends.len() > 1 {
        ends.pop();
        points.truncate(*ends.last().unwrap());
    }
    points.truncate(config.max_points);
    let sketch = VectorSketch::new(points)?;
    Ok(SimplifyOutcome {
        sketch,
        effective_epsilon: epsilon,
        escalations,
        truncated: true,
    })
}

/// RDP per stroke with tolerance escalation, then hard truncation, so that
/// the output never exceeds `config.max_points`.
pub fn simplify_sketch(sketch: &VectorSketch, config: &SimplifyConfig) -> Result<VectorSketch> {
    simplify_with_report(sketch, config).map(|o| o.sketch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn collinear_interior_removed() {
        assert_eq!(rdp_stroke(&[(0., 0.), (1., 0.), (2., 0.)], 0.5), vec![(0., 0.), (2., 0.)]);
    }

    #[test]
    fn deviating_point_kept() {
        let pts = [(0., 0.), (1., 1.), (2., 0.)];
        assert_eq!(rdp_stroke(&pts, 0.5), pts.to_vec());
    }

    #[test]
    fn single_point_and_pair() {
        assert_eq!(rdp_stroke(&[(3., 3.)], 0.5), vec![(3., 3.)]);
        assert_eq!(rdp_stroke(&[(3., 3.), (4., 4.)], 0.5), vec![(3., 3.), (4., 4.)]);
    }

    #[test]
    fn hook_point_beyond_chord_is_kept() {
        // (3, 0) sits on the infinite chord line but 1 unit past its end.
        let pts = [(0., 0.), (3., 0.), (2., 0.)];
        assert_eq!(rdp_stroke(&pts, 0.5), pts.to_vec());
    }

    #[test]
    fn closed_loop_keeps_far_corner() {
        let square = [(0., 0.), (10., 0.), (10., 10.), (0., 10.), (0., 0.)];
        assert_eq!(rdp_stroke(&square, 0.5), square.to_vec());
    }

    #[test]
    fn straight_strokes_reduce_to_endpoints() {
        let s = VectorSketch::from_strokes(&[
            vec![(0., 0.), (1., 0.), (2., 0.), (3., 0.)],
            vec![(0., 5.), (0., 6.), (0., 7.)],
        ])
        .unwrap();
        let out = simplify_sketch(&s, &SimplifyConfig::default()).unwrap();
        let coords: Vec<_> = out.points().iter().map(|p| (p.x, p.y, p.ends_stroke)).collect();
        assert_eq!(
            coords,
            vec![(0., 0., false), (3., 0., true), (0., 5., false), (0., 7., true)]
        );
    }

    #[test]
    fn truncation_drops_trailing_strokes_first() {
        // Zigzags that no tolerance escalation can flatten below the cap.
        let zig = |y0: f64, n: usize| -> Vec<(f64, f64)> {
            (0..n).map(|i| (i as f64 * 1000.0, y0 + if i % 2 == 0 { 0.0 } else { 1e6 })).collect()
        };
        let s = VectorSketch::from_strokes(&[zig(0.0, 6), zig(5e6, 6), zig(1e7, 6)]).unwrap();
        let config = SimplifyConfig {
            epsilon: 1.0,
            max_points: 8,
            escalation_factor: 1.5,
        };
        let out = simplify_with_report(&s, &config).unwrap();
        assert!(out.truncated);
        assert_eq!(out.escalations, MAX_ESCALATIONS);
        assert_eq!(out.sketch.len(), 6);
        assert_eq!(out.sketch.strokes().len(), 1);

        let config = SimplifyConfig { max_points: 4, ..config };
        let out = simplify_with_report(&s, &config).unwrap();
        assert_eq!(out.sketch.len(), 4);
        assert!(out.sketch.points()[3].ends_stroke);
    }

    #[test]
    fn invalid_config_rejected() {
        let s = VectorSketch::from_strokes(&[vec![(0., 0.), (1., 0.)]]).unwrap();
        for bad in [
            SimplifyConfig { epsilon: 0.0, ..Default::default() },
            SimplifyConfig { max_points: 1, ..Default::default() },
            SimplifyConfig { escalation_factor: 1.0, ..Default::default() },
        ] {
            assert!(matches!(simplify_sketch(&s, &bad), Err(Error::InvalidConfig(_))));
        }
    }

    fn arb_stroke() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..120).prop_map(|steps| {
            let mut pos = (0.0, 0.0);
            steps
                .into_iter()
                .map(|(dx, dy)| {
                    pos = (pos.0 + dx, pos.1 + dy);
                    pos
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn rdp_is_idempotent(stroke in arb_stroke(), eps in 0.1..4.0f64) {
            let once = rdp_stroke(&stroke, eps);
            prop_assert_eq!(rdp_stroke(&once, eps), once);
        }

        #[test]
        fn sketch_simplify_is_idempotent(a in arb_stroke(), b in arb_stroke()) {
            let s = VectorSketch::from_strokes(&[a, b]).unwrap();
            let config = SimplifyConfig::default();
            let once = simplify_sketch(&s, &config).unwrap();
            prop_assert_eq!(simplify_sketch(&once, &config).unwrap(), once);
        }

        #[test]
        fn cap_always_honored(a in arb_stroke(), b in arb_stroke(), cap in 2usize..40) {
            let s = VectorSketch::from_strokes(&[a, b]).unwrap();
            let config = SimplifyConfig { epsilon: 0.05, max_points: cap, escalation_factor: 1.2 };
            let out = simplify_sketch(&s, &config).unwrap();
            prop_assert!(out.len() <= cap);
            prop_assert!(out.points().last().unwrap().ends_stroke);
        }
    }
}
