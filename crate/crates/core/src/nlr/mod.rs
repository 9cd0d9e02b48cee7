//! Neural line rasterization: a differentiable vector-to-raster conversion.
//!
//! Every pixel whose center lies strictly within `epsilon` of a segment is a
//! stroke pixel. Its intensity interpolates the attention of the owning
//! segment's endpoints,
//!
//! ```text
//! I_k = (1 - alpha_k) * a_i + alpha_k * a_{i+1}
//! ```
//!
//! where `alpha_k` is the clamped projection parameter of the pixel center
//! onto the segment. Ownership depends on geometry only, so the map is linear
//! in the attention values and its Jacobian is the constant provenance table
//! recorded during the forward pass. The backward pass scatters an incoming
//! pixel gradient back onto the points through that table.
//!
//! Overlaps resolve in painter's order: the temporally latest covering
//! primitive owns the pixel. Isolated points (single-point strokes) render as
//! discs of radius `epsilon` carrying their own attention value.

mod export;
mod index;
pub mod oracle;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sketch::VectorSketch;

pub use export::{
    attention_from_json, attention_to_json, grid_from_json, grid_to_json, provenance_to_json, to_pgm, write_pgm,
};
pub use oracle::oracle_rasterize;

use index::CellIndex;

/// Rows per tile in the backward scatter.
const TILE_ROWS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterConfig {
    pub width: u32,
    pub height: u32,
    /// Stroke half-width threshold in pixels.
    pub epsilon: f64,
    /// Render single-point strokes as discs.
    #[serde(default = "default_true")]
    pub render_dots: bool,
}

fn default_true() -> bool {
    true
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self::new(224, 224, 1.0)
    }
}

impl RasterConfig {
    pub fn new(width: u32, height: u32, epsilon: f64) -> Self {
        Self {
            width,
            height,
            epsilon,
            render_dots: true,
        }
    }

    /// The reduced map size used when injecting attention into a backbone.
    pub fn small() -> Self {
        Self::new(56, 56, 0.5)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig(format!(
                "canvas {}x{} must be at least 1x1",
                self.width, self.height
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!("epsilon {} must be > 0", self.epsilon)));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Row-major real-valued image.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height} grid",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn dot(&self, other: &Grid) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

/// Per-point attention values, one per sketch point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttentionSequence(pub Vec<f64>);

impl AttentionSequence {
    pub fn uniform(n: usize, value: f64) -> Self {
        Self(vec![value; n])
    }

    /// Linear ramp from 1 at the first point to 0 at the last.
    pub fn ramp(n: usize) -> Self {
        if n == 1 {
            return Self(vec![1.0]);
        }
        let last = (n - 1) as f64;
        Self((0..n).map(|i| 1.0 - i as f64 / last).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-point accumulated gradient of the loss w.r.t. attention.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionGradient(pub Vec<f64>);

impl AttentionGradient {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// A rasterizable primitive. For a disc, `first == second` and `a == b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Primitive {
    pub first: usize,
    pub second: usize,
    #[serde(skip)]
    pub a: (f64, f64),
    #[serde(skip)]
    pub b: (f64, f64),
}

impl Primitive {
    pub fn is_dot(&self) -> bool {
        self.first == self.second
    }

    /// Returns `(squared distance, clamped projection parameter)` of `c`.
    #[inline]
    pub(crate) fn locate(&self, c: (f64, f64)) -> (f64, f64) {
        let (dx, dy) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((c.0 - self.a.0) * dx + (c.1 - self.a.1) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (ex, ey) = (c.0 - (self.a.0 + t * dx), c.1 - (self.a.1 + t * dy));
        (ex * ex + ey * ey, t)
    }

    /// Interpolated intensity at projection parameter `alpha`.
    #[inline]
    pub fn shade(&self, alpha: f64, attention: &[f64]) -> f64 {
        (1.0 - alpha) * attention[self.first] + alpha * attention[self.second]
    }
}

/// Primitives of a sketch in temporal order: one segment per continuing
/// point, plus one disc per isolated point when `render_dots` is set.
pub fn primitives(sketch: &VectorSketch, render_dots: bool) -> Vec<Primitive> {
    let pts = sketch.points();
    let mut out = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        let starts_stroke = i == 0 || pts[i - 1].ends_stroke;
        if !p.ends_stroke {
            let q = pts[i + 1];
            out.push(Primitive {
                first: i,
                second: i + 1,
                a: (p.x, p.y),
                b: (q.x, q.y),
            });
        } else if starts_stroke && render_dots {
            out.push(Primitive {
                first: i,
                second: i,
                a: (p.x, p.y),
                b: (p.x, p.y),
            });
        }
    }
    out
}

/// Which primitive owns a pixel, and where along it the pixel projects.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct PixelProvenance {
    pub owner: Option<u32>,
    pub alpha: f64,
}

/// Geometry-only rasterization result: who owns each pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Coverage {
    pub config: RasterConfig,
    pub primitives: Vec<Primitive>,
    /// Row-major, `width * height` entries.
    pub provenance: Vec<PixelProvenance>,
    pub sketch_len: usize,
}

impl Coverage {
    pub fn compute(sketch: &VectorSketch, config: &RasterConfig) -> Result<Self> {
        config.validate()?;
        let primitives = primitives(sketch, config.render_dots);
        let index = CellIndex::build(&primitives, config);
        let width = config.width as usize;
        let eps2 = config.epsilon * config.epsilon;
        let mut provenance = vec![PixelProvenance::default(); config.pixel_count()];

        let fill_row = |row: usize, out: &mut [PixelProvenance]| {
            let cy = row as f64 + 0.5;
            for (col, slot) in out.iter_mut().enumerate() {
                let c = (col as f64 + 0.5, cy);
                // Candidates are stored ascending; the latest covering one wins.
                for &j in index.candidates(col, row).iter().rev() {
                    let (d2, t) = primitives[j as usize].locate(c);
                    if d2 < eps2 {
                        *slot = PixelProvenance {
                            owner: Some(j),
                            alpha: t,
                        };
                        break;
                    }
                }
            }
        };

        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            provenance
                .par_chunks_mut(width)
                .enumerate()
                .for_each(|(row, out)| fill_row(row, out));
        }
        #[cfg(not(feature = "parallel"))]
        for (row, out) in provenance.chunks_mut(width).enumerate() {
            fill_row(row, out);
        }

        Ok(Self {
            config: *config,
            primitives,
            provenance,
            sketch_len: sketch.len(),
        })
    }

    pub fn owned_pixels(&self) -> usize {
        self.provenance.iter().filter(|p| p.owner.is_some()).count()
    }

    /// Evaluate the interpolated intensities for one attention sequence.
    pub fn shade(&self, attention: &AttentionSequence) -> Result<Grid> {
        if attention.len() != self.sketch_len {
            return Err(Error::LengthMismatch {
                attention: attention.len(),
                points: self.sketch_len,
            });
        }
        let a = attention.values();
        let data = self
            .provenance
            .iter()
            .map(|p| match p.owner {
                Some(j) => self.primitives[j as usize].shade(p.alpha, a),
                None => 0.0,
            })
            .collect();
        Ok(Grid {
            width: self.config.width as usize,
            height: self.config.height as usize,
            data,
        })
    }

    /// Scatter a pixel gradient onto the points.
    ///
    /// Partial sums are kept per tile of rows and reduced in tile order, so
    /// the result does not depend on how tiles are scheduled.
    pub fn backward(&self, delta: &Grid) -> Result<AttentionGradient> {
        let (w, h) = (self.config.width as usize, self.config.height as usize);
        if delta.width != w || delta.height != h || delta.data.len() != w * h {
            return Err(Error::ShapeMismatch(format!(
                "incoming gradient {}x{} for a {w}x{h} map",
                delta.width, delta.height
            )));
        }
        let n = self.sketch_len;
        let tile = |t: usize| -> Vec<f64> {
            let mut acc = vec![0.0; n];
            let lo = t * TILE_ROWS * w;
            let hi = ((t + 1) * TILE_ROWS * w).min(w * h);
            for (prov, &d) in self.provenance[lo..hi].iter().zip(&delta.data[lo..hi]) {
                if let Some(j) = prov.owner {
                    let prim = &self.primitives[j as usize];
                    if prim.is_dot() {
                        acc[prim.first] += d;
                    } else {
                        acc[prim.first] += d * (1.0 - prov.alpha);
                        acc[prim.second] += d * prov.alpha;
                    }
                }
            }
            acc
        };
        let tiles = h.div_ceil(TILE_ROWS);

        #[cfg(feature = "parallel")]
        let partials: Vec<Vec<f64>> = {
            use rayon::prelude::*;
            (0..tiles).into_par_iter().map(tile).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let partials: Vec<Vec<f64>> = (0..tiles).map(tile).collect();

        let mut grad = vec![0.0; n];
        for part in &partials {
            for (g, p) in grad.iter_mut().zip(part) {
                *g += p;
            }
        }
        Ok(AttentionGradient(grad))
    }
}

/// Intensities plus the provenance needed by the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    pub intensities: Grid,
    pub coverage: Coverage,
}

impl AttentionMap {
    pub fn config(&self) -> &RasterConfig {
        &self.coverage.config
    }

    pub fn provenance(&self) -> &[PixelProvenance] {
        &self.coverage.provenance
    }

    pub fn owned_pixels(&self) -> usize {
        self.coverage.owned_pixels()
    }
}

/// Forward rasterization of `sketch` (canvas coordinates) under `attention`.
pub fn rasterize_forward(
    sketch: &VectorSketch,
    attention: &AttentionSequence,
    config: &RasterConfig,
) -> Result<AttentionMap> {
    if attention.len() != sketch.len() {
        return Err(Error::LengthMismatch {
            attention: attention.len(),
            points: sketch.len(),
        });
    }
    let coverage = Coverage::compute(sketch, config)?;
    let intensities = coverage.shade(attention)?;
    Ok(AttentionMap {
        intensities,
        coverage,
    })
}

/// Gradient of the loss w.r.t. each point's attention, given the gradient
/// w.r.t. each pixel of the forward output.
pub fn rasterize_backward(map: &AttentionMap, delta: &Grid) -> Result<AttentionGradient> {
    map.coverage.backward(delta)
}

/// Sketching-order baseline: a ramp from 1 at the first point to 0 at the last.
pub fn order_encode_rasterize(sketch: &VectorSketch, config: &RasterConfig) -> Result<Grid> {
    rasterize_forward(sketch, &AttentionSequence::ramp(sketch.len()), config).map(|m| m.intensities)
}

/// Plain binary raster: every stroke pixel is 1.
pub fn binary_rasterize(sketch: &VectorSketch, config: &RasterConfig) -> Result<Grid> {
    rasterize_forward(sketch, &AttentionSequence::uniform(sketch.len(), 1.0), config)
        .map(|m| m.intensities)
}
