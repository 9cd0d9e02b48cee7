//! Vector sketch data model.
//!
//! A sketch is an ordered point sequence. Every point carries a stroke-end
//! flag: a point that does not end its stroke is joined to the next point by
//! a line segment.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sampled pen position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    /// `true` when this point is the last one of its stroke (state 1).
    pub ends_stroke: bool,
}

impl Point {
    pub const fn new(x: f64, y: f64, ends_stroke: bool) -> Self {
        Self { x, y, ends_stroke }
    }

    /// Stroke state as the 0/1 value used by the network input and file formats.
    pub fn state(&self) -> u8 {
        u8::from(self.ends_stroke)
    }

    fn same_position(&self, other: &Point) -> bool {
        self.x == other.x && self.y == other.y
    }
}

// Points travel as `[x, y, s]` triples in every JSON format.
impl Serialize for Point {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        (self.x, self.y, self.state()).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let (x, y, s): (f64, f64, u8) = Deserialize::deserialize(deserializer)?;
        match s {
            0 | 1 => Ok(Point::new(x, y, s == 1)),
            other => Err(serde::de::Error::custom(format!(
                "stroke state must be 0 or 1, got {other}"
            ))),
        }
    }
}

/// A validated, non-empty point sequence.
///
/// Invariants: all coordinates are finite, the last point ends its stroke,
/// and no two consecutive points of the same stroke share a position.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct VectorSketch {
    points: Vec<Point>,
}

impl<'de> Deserialize<'de> for VectorSketch {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let points: Vec<Point> = Deserialize::deserialize(deserializer)?;
        VectorSketch::new(points).map_err(serde::de::Error::custom)
    }
}

/// Line segment between two consecutive points of one stroke.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub start_index: usize,
    pub end_index: usize,
    pub start: (f64, f64),
    pub end: (f64, f64),
}

impl VectorSketch {
    /// Validate raw points: rejects non-finite input, drops consecutive
    /// duplicates inside a stroke and forces the final point to end its stroke.
    pub fn new(raw: Vec<Point>) -> Result<Self> {
        if let Some(index) = raw.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::NonFiniteCoordinate { index });
        }
        let mut points: Vec<Point> = Vec::with_capacity(raw.len());
        for p in raw {
            match points.last_mut() {
                // A duplicate inherits nothing but its stroke-end flag.
                Some(prev) if !prev.ends_stroke && prev.same_position(&p) => {
                    prev.ends_stroke = p.ends_stroke;
                }
                _ => points.push(p),
            }
        }
        match points.last_mut() {
            None => Err(Error::EmptySketch),
            Some(last) => {
                last.ends_stroke = true;
                Ok(Self { points })
            }
        }
    }

    /// Build a sketch from strokes given as `(x, y)` polylines.
    pub fn from_strokes<S: AsRef<[(f64, f64)]>>(strokes: &[S]) -> Result<Self> {
        let mut points = Vec::new();
        for stroke in strokes {
            let stroke = stroke.as_ref();
            for (i, &(x, y)) in stroke.iter().enumerate() {
                points.push(Point::new(x, y, i + 1 == stroke.len()));
            }
        }
        Self::new(points)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    /// Index ranges of the strokes, in temporal order.
    pub fn strokes(&self) -> Vec<Range<usize>> {
        let mut ranges = Vec::new();
        let mut start = 0;
        for (i, p) in self.points.iter().enumerate() {
            if p.ends_stroke {
                ranges.push(start..i + 1);
                start = i + 1;
            }
        }
        ranges
    }

    /// One segment per point whose stroke continues, in temporal order.
    pub fn segments(&self) -> Vec<Segment> {
        self.points
            .windows(2)
            .enumerate()
            .filter(|(_, w)| !w[0].ends_stroke)
            .map(|(i, w)| Segment {
                start_index: i,
                end_index: i + 1,
                start: (w[0].x, w[0].y),
                end: (w[1].x, w[1].y),
            })
            .collect()
    }

    /// Axis-aligned bounds as `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.points.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(x0, y0, x1, y1), p| (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y)),
        )
    }

    /// Relative encoding: the first offset is `(0, 0)`, every later one is the
    /// displacement from the previous point.
    pub fn to_offsets(&self) -> OffsetSketch {
        let mut prev = (self.points[0].x, self.points[0].y);
        let offsets = self
            .points
            .iter()
            .map(|p| {
                let o = Offset {
                    dx: p.x - prev.0,
                    dy: p.y - prev.1,
                    ends_stroke: p.ends_stroke,
                };
                prev = (p.x, p.y);
                o
            })
            .collect();
        OffsetSketch { offsets }
    }

    /// Inverse of [`VectorSketch::to_offsets`] given the absolute first point.
    pub fn from_offsets(offsets: &OffsetSketch, origin: (f64, f64)) -> Result<Self> {
        let mut pos = origin;
        let points = offsets
            .offsets
            .iter()
            .enumerate()
            .map(|(i, o)| {
                if i > 0 {
                    pos = (pos.0 + o.dx, pos.1 + o.dy);
                }
                Point::new(pos.0, pos.1, o.ends_stroke)
            })
            .collect();
        Self::new(points)
    }

    /// Uniformly scale and center the sketch into
    /// `[pad, width-1-pad] x [pad, height-1-pad]`.
    ///
    /// A sketch with zero extent in both axes lands on the canvas center.
    pub fn normalize_to_canvas(&self, width: u32, height: u32, pad: f64) -> Result<Self> {
        if !(pad >= 0.0 && f64::from(width) > 2.0 * pad && f64::from(height) > 2.0 * pad) {
            return Err(Error::InvalidCanvas { width, height, pad });
        }
        let target_w = f64::from(width) - 1.0 - 2.0 * pad;
        let target_h = f64::from(height) - 1.0 - 2.0 * pad;
        let (x0, y0, x1, y1) = self.bounds();
        let (bw, bh) = (x1 - x0, y1 - y0);
        let scale = match (bw > 0.0, bh > 0.0) {
            (true, true) => (target_w / bw).min(target_h / bh),
            (true, false) => target_w / bw,
            (false, true) => target_h / bh,
            (false, false) => 0.0,
        };
        let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
        let (tx, ty) = ((f64::from(width) - 1.0) / 2.0, (f64::from(height) - 1.0) / 2.0);
        let points = self
            .points
            .iter()
            .map(|p| Point::new(tx + (p.x - cx) * scale, ty + (p.y - cy) * scale, p.ends_stroke))
            .collect();
        Self::new(points)
    }
}

/// Per-point displacement from the previous point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Offset {
    pub dx: f64,
    pub dy: f64,
    pub ends_stroke: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OffsetSketch {
    offsets: Vec<Offset>,
}

impl OffsetSketch {
    pub fn new(offsets: Vec<Offset>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::EmptySketch);
        }
        if let Some(index) = offsets.iter().position(|o| !o.dx.is_finite() || !o.dy.is_finite()) {
            return Err(Error::NonFiniteCoordinate { index });
        }
        Ok(Self { offsets })
    }

    pub fn offsets(&self) -> &[Offset] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(raw: &[(f64, f64, u8)]) -> Vec<Point> {
        raw.iter().map(|&(x, y, s)| Point::new(x, y, s == 1)).collect()
    }

    fn triples(sketch: &VectorSketch) -> Vec<(f64, f64, u8)> {
        sketch.points().iter().map(|p| (p.x, p.y, p.state())).collect()
    }

    #[test]
    fn valid_sketch_unchanged() {
        let s = VectorSketch::new(pts(&[(0., 0., 0), (1., 0., 1)])).unwrap();
        assert_eq!(triples(&s), vec![(0., 0., 0), (1., 0., 1)]);
    }

    #[test]
    fn duplicates_dropped_and_last_state_forced() {
        let s = VectorSketch::new(pts(&[(0., 0., 0), (0., 0., 0), (1., 0., 0)])).unwrap();
        assert_eq!(triples(&s), vec![(0., 0., 0), (1., 0., 1)]);
    }

    #[test]
    fn duplicate_stroke_end_moves_to_survivor() {
        let s = VectorSketch::new(pts(&[(0., 0., 0), (0., 0., 1), (5., 5., 1)])).unwrap();
        assert_eq!(triples(&s), vec![(0., 0., 1), (5., 5., 1)]);
    }

    #[test]
    fn empty_and_non_finite_rejected() {
        assert!(matches!(VectorSketch::new(vec![]), Err(Error::EmptySketch)));
        assert!(matches!(
            VectorSketch::new(pts(&[(0., 0., 0), (f64::NAN, 1., 1)])),
            Err(Error::NonFiniteCoordinate { index: 1 })
        ));
        assert!(matches!(
            VectorSketch::new(pts(&[(f64::INFINITY, 0., 1)])),
            Err(Error::NonFiniteCoordinate { index: 0 })
        ));
    }

    #[test]
    fn offsets_examples() {
        let s = VectorSketch::new(pts(&[(5., 7., 1)])).unwrap();
        let o = s.to_offsets();
        assert_eq!(o.offsets(), &[Offset { dx: 0., dy: 0., ends_stroke: true }]);
        assert_eq!(triples(&VectorSketch::from_offsets(&o, (5., 7.)).unwrap()), vec![(5., 7., 1)]);

        let s = VectorSketch::new(pts(&[(2., 2., 0), (5., 6., 0), (5., 1., 1)])).unwrap();
        let o: Vec<_> = s.to_offsets().offsets().iter().map(|o| (o.dx, o.dy, o.ends_stroke)).collect();
        assert_eq!(o, vec![(0., 0., false), (3., 4., false), (0., -5., true)]);
        let back = VectorSketch::from_offsets(&s.to_offsets(), (2., 2.)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn segments_follow_stroke_states() {
        let idx = |raw: &[(f64, f64, u8)]| -> Vec<(usize, usize)> {
            VectorSketch::new(pts(raw))
                .unwrap()
                .segments()
                .iter()
                .map(|s| (s.start_index, s.end_index))
                .collect()
        };
        assert_eq!(idx(&[(0., 0., 0), (1., 0., 1), (2., 0., 0), (3., 0., 1)]), vec![(0, 1), (2, 3)]);
        assert_eq!(idx(&[(0., 0., 1), (1., 0., 1)]), vec![]);
        assert_eq!(idx(&[(0., 0., 0), (1., 0., 0), (2., 0., 1)]), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn normalize_examples() {
        let square = VectorSketch::from_strokes(&[vec![(0., 0.), (1., 0.), (1., 1.), (0., 1.), (0., 0.)]])
            .unwrap();
        let n = square.normalize_to_canvas(224, 224, 4.0).unwrap();
        assert_eq!(n.bounds(), (4.0, 4.0, 219.0, 219.0));

        let dot = VectorSketch::new(pts(&[(3., 9., 1)])).unwrap();
        let n = dot.normalize_to_canvas(224, 224, 4.0).unwrap();
        assert_eq!((n.points()[0].x, n.points()[0].y), (111.5, 111.5));

        let filled = VectorSketch::from_strokes(&[vec![(4., 4.), (219., 219.)]]).unwrap();
        let n = filled.normalize_to_canvas(224, 224, 4.0).unwrap();
        for (a, b) in n.points().iter().zip(filled.points()) {
            assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
        }

        assert!(matches!(dot.normalize_to_canvas(8, 8, 4.0), Err(Error::InvalidCanvas { .. })));
    }

    #[test]
    fn normalize_flat_sketch_keeps_extent_axis() {
        let line = VectorSketch::from_strokes(&[vec![(0., 5.), (10., 5.)]]).unwrap();
        let n = line.normalize_to_canvas(64, 32, 2.0).unwrap();
        let (x0, y0, x1, y1) = n.bounds();
        assert_eq!((x0, x1), (2.0, 61.0));
        assert_eq!((y0, y1), (15.5, 15.5));
    }

    #[test]
    fn point_json_is_triple() {
        let s = VectorSketch::new(pts(&[(0.5, 1., 0), (2., 3., 1)])).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, "[[0.5,1.0,0],[2.0,3.0,1]]");
        let back: VectorSketch = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<VectorSketch>("[[0,0,2]]").is_err());
    }

    fn arb_sketch() -> impl Strategy<Value = VectorSketch> {
        prop::collection::vec((-300.0..300.0f64, -300.0..300.0f64, prop::bool::weighted(0.2)), 1..60)
            .prop_map(|raw| {
                VectorSketch::new(raw.into_iter().map(|(x, y, e)| Point::new(x, y, e)).collect())
                    .unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn offsets_round_trip(s in arb_sketch()) {
            let first = s.points()[0];
            let back = VectorSketch::from_offsets(&s.to_offsets(), (first.x, first.y)).unwrap();
            prop_assert_eq!(back.len(), s.len());
            for (a, b) in back.points().iter().zip(s.points()) {
                prop_assert!((a.x - b.x).abs() <= 1e-9 && (a.y - b.y).abs() <= 1e-9);
                prop_assert_eq!(a.ends_stroke, b.ends_stroke);
            }
        }

        #[test]
        fn segment_count_matches_open_states(s in arb_sketch()) {
            let open = s.points().iter().filter(|p| !p.ends_stroke).count();
            prop_assert_eq!(s.segments().len(), open);
        }
    }

    proptest! {
        #[test]
        fn normalize_in_bounds_and_idempotent(s in arb_sketch(), w in 8u32..300, h in 8u32..300) {
            let pad = 2.0;
            let n = s.normalize_to_canvas(w, h, pad).unwrap();
            for p in n.points() {
                prop_assert!(p.x >= pad - 1e-9 && p.x <= f64::from(w) - 1.0 - pad + 1e-9);
                prop_assert!(p.y >= pad - 1e-9 && p.y <= f64::from(h) - 1.0 - pad + 1e-9);
            }
            let nn = n.normalize_to_canvas(w, h, pad).unwrap();
            prop_assert_eq!(nn.len(), n.len());
            for (a, b) in nn.points().iter().zip(n.points()) {
                prop_assert!((a.x - b.x).abs() <= 1e-9 && (a.y - b.y).abs() <= 1e-9);
            }
        }
    }
}
