//! Reference rasterizer: a plain loop over every (pixel, primitive) pair.
//!
//! Shares nothing with the accelerated path except the result types. Used
//! by tests to pin coverage sets and intensities.

use super::{AttentionMap, AttentionSequence, Coverage, Grid, PixelProvenance, Primitive, RasterConfig};
use crate::error::{Error, Result};
use crate::sketch::VectorSketch;

pub fn oracle_rasterize(
    sketch: &VectorSketch,
    attention: &AttentionSequence,
    config: &RasterConfig,
) -> Result<AttentionMap> {
    config.validate()?;
    if attention.len() != sketch.len() {
        return Err(Error::LengthMismatch {
            attention: attention.len(),
            points: sketch.len(),
        });
    }
    let pts = sketch.points();
    let a = attention.values();

    // Temporal primitive list rebuilt from the raw stroke states.
    let mut prims: Vec<Primitive> = Vec::new();
    for i in 0..pts.len() {
        let isolated = pts[i].ends_stroke && (i == 0 || pts[i - 1].ends_stroke);
        if !pts[i].ends_stroke {
            prims.push(Primitive {
                first: i,
                second: i + 1,
                a: (pts[i].x, pts[i].y),
                b: (pts[i + 1].x, pts[i + 1].y),
            });
        } else if isolated && config.render_dots {
            prims.push(Primitive {
                first: i,
                second: i,
                a: (pts[i].x, pts[i].y),
                b: (pts[i].x, pts[i].y),
            });
        }
    }

    let (w, h) = (config.width as usize, config.height as usize);
    let eps2 = config.epsilon * config.epsilon;
    let mut provenance = vec![PixelProvenance::default(); w * h];
    let mut data = vec![0.0; w * h];
    for row in 0..h {
        for col in 0..w {
            let (px, py) = (col as f64 + 0.5, row as f64 + 0.5);
            for (j, prim) in prims.iter().enumerate() {
                let (ux, uy) = (prim.b.0 - prim.a.0, prim.b.1 - prim.a.1);
                let len2 = ux * ux + uy * uy;
                let mut t = 0.0;
                if len2 > 0.0 {
                    t = ((px - prim.a.0) * ux + (py - prim.a.1) * uy) / len2;
                    t = t.clamp(0.0, 1.0);
                }
                let (qx, qy) = (prim.a.0 + t * ux, prim.a.1 + t * uy);
                let d2 = (px - qx) * (px - qx) + (py - qy) * (py - qy);
                // Later primitives overwrite earlier ones.
                if d2 < eps2 {
                    provenance[row * w + col] = PixelProvenance {
                        owner: Some(j as u32),
                        alpha: t,
                    };
                    data[row * w + col] = (1.0 - t) * a[prim.first] + t * a[prim.second];
                }
            }
        }
    }
    Ok(AttentionMap {
        intensities: Grid { width: w, height: h, data },
        coverage: Coverage {
            config: *config,
            primitives: prims,
            provenance,
            sketch_len: sketch.len(),
        },
    })
}
