//! Uniform-grid spatial index over raster primitives.

use super::{Primitive, RasterConfig};

const CELL: usize = 8;

pub(super) struct CellIndex {
    cols: usize,
    cells: Vec<Vec<u32>>,
}

impl CellIndex {
    /// Each primitive is registered in every cell that any pixel center
    /// within `epsilon` of it could fall into. Cell lists stay ascending.
    pub(super) fn build(primitives: &[Primitive], config: &RasterConfig) -> Self {
        let (w, h) = (config.width as usize, config.height as usize);
        let cols = w.div_ceil(CELL);
        let rows = h.div_ceil(CELL);
        let mut cells = vec![Vec::new(); cols * rows];
        let eps = config.epsilon;
        let half_diag = CELL as f64 * std::f64::consts::FRAC_1_SQRT_2;
        let cell_range = |lo: f64, hi: f64, n: usize| -> Option<(usize, usize)> {
            // Pixel centers sit at index + 0.5, cell c spans [c*CELL, (c+1)*CELL).
            let first = ((lo - eps).floor().max(0.0) / CELL as f64).floor();
            let last = ((hi + eps).ceil() / CELL as f64).floor();
            if last < 0.0 || first >= n as f64 {
                return None;
            }
            Some((first as usize, (last as usize).min(n - 1)))
        };
        for (j, prim) in primitives.iter().enumerate() {
            let (x0, x1) = (prim.a.0.min(prim.b.0), prim.a.0.max(prim.b.0));
            let (y0, y1) = (prim.a.1.min(prim.b.1), prim.a.1.max(prim.b.1));
            let (Some((cx0, cx1)), Some((cy0, cy1))) = (cell_range(x0, x1, cols), cell_range(y0, y1, rows))
            else {
                continue;
            };
            let reach = eps + half_diag;
            for cy in cy0..=cy1 {
                for cx in cx0..=cx1 {
                    let center = ((cx as f64 + 0.5) * CELL as f64, (cy as f64 + 0.5) * CELL as f64);
                    let (d2, _) = prim.locate(center);
                    if d2 <= reach * reach {
                        cells[cy * cols + cx].push(j as u32);
                    }
                }
            }
        }
        Self { cols, cells }
    }

    pub(super) fn candidates(&self, col: usize, row: usize) -> &[u32] {
        &self.cells[(row / CELL) * self.cols + col / CELL]
    }
}
