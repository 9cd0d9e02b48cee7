//! Browser bindings for the demo page in `www/`.
//!
//! Sketches cross the boundary as flat `[x, y, ends_stroke, ...]` arrays of
//! `f64`, with `ends_stroke` as 0 or 1. Grids are row-major.

use r2cnn::nlr::{rasterize_backward, rasterize_forward};
use r2cnn::simplify::simplify_with_report;
use r2cnn::{AttentionSequence, Grid, Point, RasterConfig, SimplifyConfig, VectorSketch};
use wasm_bindgen::prelude::*;

fn decode(flat: &[f64]) -> r2cnn::Result<VectorSketch> {
    if !flat.len().is_multiple_of(3) {
        return Err(r2cnn::Error::ShapeMismatch(format!(
            "{} values is not a whole number of points",
            flat.len()
        )));
    }
    VectorSketch::new(flat.chunks(3).map(|c| Point::new(c[0], c[1], c[2] != 0.0)).collect())
}

fn encode(sketch: &VectorSketch) -> Vec<f64> {
    sketch
        .points()
        .iter()
        .flat_map(|p| [p.x, p.y, f64::from(u8::from(p.ends_stroke))])
        .collect()
}

/// `mode` is `uniform`, `ramp` or `custom`; `custom` reads `attention`.
pub fn attention_for(mode: &str, n: usize, attention: &[f64]) -> r2cnn::Result<AttentionSequence> {
    match mode {
        "uniform" => Ok(AttentionSequence::uniform(n, 1.0)),
        "ramp" => Ok(AttentionSequence::ramp(n)),
        "custom" => Ok(AttentionSequence(attention.to_vec())),
        other => Err(r2cnn::Error::InvalidConfig(format!("unknown attention mode {other:?}"))),
    }
}

pub fn rasterize_flat(
    points: &[f64],
    width: u32,
    height: u32,
    epsilon: f64,
    mode: &str,
    attention: &[f64],
) -> r2cnn::Result<Vec<f64>> {
    let sketch = decode(points)?;
    let a = attention_for(mode, sketch.len(), attention)?;
    Ok(rasterize_forward(&sketch, &a, &RasterConfig::new(width, height, epsilon))?.intensities.data)
}

pub fn simplify_flat(points: &[f64], epsilon: f64, max_points: usize) -> r2cnn::Result<Vec<f64>> {
    let config = SimplifyConfig {
        epsilon,
        max_points,
        ..SimplifyConfig::tu_berlin()
    };
    Ok(encode(&simplify_with_report(&decode(points)?, &config)?.sketch))
}

/// Per-point gradient of the loss "sum of intensities inside a disc of
/// `radius` around (`cx`, `cy`)".
#[allow(clippy::too_many_arguments)]
pub fn disc_gradient_flat(
    points: &[f64],
    width: u32,
    height: u32,
    epsilon: f64,
    mode: &str,
    attention: &[f64],
    cx: f64,
    cy: f64,
    radius: f64,
) -> r2cnn::Result<Vec<f64>> {
    let sketch = decode(points)?;
    let a = attention_for(mode, sketch.len(), attention)?;
    let map = rasterize_forward(&sketch, &a, &RasterConfig::new(width, height, epsilon))?;
    let (w, h) = (width as usize, height as usize);
    let delta = (0..w * h)
        .map(|k| {
            let (col, row) = ((k % w) as f64 + 0.5, (k / w) as f64 + 0.5);
            f64::from(u8::from((col - cx).powi(2) + (row - cy).powi(2) <= radius * radius))
        })
        .collect();
    Ok(rasterize_backward(&map, &Grid::from_vec(w, h, delta)?)?.0)
}

fn js(e: r2cnn::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Rasterized intensities, `width * height` values.
#[wasm_bindgen]
pub fn rasterize(
    points: &[f64],
    width: u32,
    height: u32,
    epsilon: f64,
    mode: &str,
    attention: &[f64],
) -> Result<Vec<f64>, JsError> {
    rasterize_flat(points, width, height, epsilon, mode, attention).map_err(js)
}

/// RDP-simplified sketch in the same flat layout.
#[wasm_bindgen]
pub fn simplify(points: &[f64], epsilon: f64, max_points: usize) -> Result<Vec<f64>, JsError> {
    simplify_flat(points, epsilon, max_points).map_err(js)
}

/// One gradient value per point.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn disc_gradient(
    points: &[f64],
    width: u32,
    height: u32,
    epsilon: f64,
    mode: &str,
    attention: &[f64],
    cx: f64,
    cy: f64,
    radius: f64,
) -> Result<Vec<f64>, JsError> {
    disc_gradient_flat(points, width, height, epsilon, mode, attention, cx, cy, radius).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    const L: [f64; 9] = [2.0, 2.0, 0.0, 12.0, 2.0, 0.0, 12.0, 12.0, 1.0];

    #[test]
    fn flat_round_trip() {
        assert_eq!(encode(&decode(&L).unwrap()), L.to_vec());
        assert!(decode(&L[..4]).is_err());
    }

    #[test]
    fn rasterize_matches_core() {
        let s = decode(&L).unwrap();
        let cfg = RasterConfig::new(16, 16, 1.0);
        let core = rasterize_forward(&s, &AttentionSequence::ramp(3), &cfg).unwrap().intensities.data;
        assert_eq!(rasterize_flat(&L, 16, 16, 1.0, "ramp", &[]).unwrap(), core);
        assert!(rasterize_flat(&L, 16, 16, 1.0, "spiral", &[]).is_err());
        assert!(rasterize_flat(&L, 16, 16, 1.0, "custom", &[0.5]).is_err());
    }

    #[test]
    fn collinear_points_simplify_away() {
        let line = [0.0, 0.0, 0.0, 5.0, 5.0, 0.0, 10.0, 10.0, 1.0];
        assert_eq!(simplify_flat(&line, 1.0, 448).unwrap(), vec![0.0, 0.0, 0.0, 10.0, 10.0, 1.0]);
    }

    #[test]
    fn disc_gradient_counts_owned_pixels() {
        let none = disc_gradient_flat(&L, 16, 16, 1.0, "uniform", &[], 100.0, 100.0, 2.0).unwrap();
        assert!(none.iter().all(|&g| g == 0.0));
        let all = disc_gradient_flat(&L, 16, 16, 1.0, "uniform", &[], 8.0, 8.0, 100.0).unwrap();
        let owned = rasterize_flat(&L, 16, 16, 1.0, "uniform", &[]).unwrap().iter().filter(|&&v| v > 0.0).count();
        assert!((all.iter().sum::<f64>() - owned as f64).abs() < 1e-9);
    }
}
