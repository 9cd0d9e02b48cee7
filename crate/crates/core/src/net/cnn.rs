//! Small convolutional classifier: `[conv -> ReLU -> max-pool]*`, global
//! average pooling, then a linear head.

use serde::{Deserialize, Serialize};

use super::init::uniform;
use super::{Parameters, Tensor};
use crate::error::{Error, Result};
use crate::nlr::Grid;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnStage {
    /// Odd kernel size; convolutions are zero-padded to keep the size.
    pub kernel: usize,
    pub channels: usize,
    /// Max-pool window and stride; 1 disables pooling.
    pub pool: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub height: usize,
    pub width: usize,
    pub stages: Vec<CnnStage>,
    pub num_classes: usize,
}

impl CnnConfig {
    /// Three 3x3 stages with the given channel counts, each followed by 2x pooling.
    pub fn with_channels(height: usize, width: usize, channels: [usize; 3], num_classes: usize) -> Self {
        Self {
            height,
            width,
            stages: channels
                .into_iter()
                .map(|c| CnnStage {
                    kernel: 3,
                    channels: c,
                    pool: 2,
                })
                .collect(),
            num_classes,
        }
    }

    /// 16/32/64 channels.
    pub fn toy(height: usize, width: usize, num_classes: usize) -> Self {
        Self::with_channels(height, width, [16, 32, 64], num_classes)
    }

    pub fn feature_size(&self) -> usize {
        self.stages.last().map_or(1, |s| s.channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::InvalidConfig("cnn needs at least one class".into()));
        }
        let (mut h, mut w) = (self.height, self.width);
        for (i, s) in self.stages.iter().enumerate() {
            if s.kernel % 2 == 0 || s.channels == 0 || s.pool == 0 {
                return Err(Error::InvalidConfig(format!("invalid cnn stage {i}: {s:?}")));
            }
            h /= s.pool;
            w /= s.pool;
        }
        if h == 0 || w == 0 {
            return Err(Error::InvalidConfig(format!(
                "{}x{} input pools away to nothing",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv {
    /// `[out, in, k, k]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
struct StageTrace {
    input: Vec<f64>,
    in_channels: usize,
    height: usize,
    width: usize,
    pre: Vec<f64>,
    /// Flat index into the post-ReLU map for every pooled output.
    argmax: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CnnTrace {
    stages: Vec<StageTrace>,
    /// Spatial size of the map that was average-pooled.
    final_hw: (usize, usize),
    features: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cnn {
    pub config: CnnConfig,
    pub convs: Vec<Conv>,
    /// `[classes, features]`
    pub fc_w: Tensor,
    /// `[classes]`
    pub fc_b: Tensor,
}

/// Zero-padded "same" convolution.
fn conv_forward(
    input: &[f64],
    (ci, h, w): (usize, usize, usize),
    weight: &[f64],
    bias: &[f64],
    k: usize,
) -> Vec<f64> {
    let co = bias.len();
    let p = (k / 2) as isize;
    let plane = h * w;
    let mut out = vec![0.0; co * plane];
    for o in 0..co {
        let out_plane = &mut out[o * plane..(o + 1) * plane];
        out_plane.fill(bias[o]);
        for c in 0..ci {
            let in_plane = &input[c * plane..(c + 1) * plane];
            for ky in 0..k {
                let dy = ky as isize - p;
                let (y0, y1) = ((-dy).max(0) as usize, (h as isize - dy).min(h as isize) as usize);
                for kx in 0..k {
                    let wv = weight[((o * ci + c) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let dx = kx as isize - p;
                    let (x0, x1) = ((-dx).max(0) as usize, (w as isize - dx).min(w as isize) as usize);
                    for y in y0..y1 {
                        let src = ((y as isize + dy) as usize) * w;
                        let src = &in_plane[(src as isize + x0 as isize + dx) as usize..];
                        let dst = &mut out_plane[y * w + x0..y * w + x1];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients; returns the input gradient when asked.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    (ci, h, w): (usize, usize, usize),
    weight: &[f64],
    k: usize,
    d_out: &[f64],
    d_weight: &mut [f64],
    d_bias: &mut [f64],
    want_input: bool,
) -> Option<Vec<f64>> {
    let co = d_bias.len();
    let p = (k / 2) as isize;
    let plane = h * w;
    let mut d_in = want_input.then(|| vec![0.0; ci * plane]);
    for o in 0..co {
        let g_plane = &d_out[o * plane..(o + 1) * plane];
        if g_plane.iter().all(|&g| g == 0.0) {
            continue;
        }
        d_bias[o] += g_plane.iter().sum::<f64>();
        for c in 0..ci {
            let in_plane = &input[c * plane..(c + 1) * plane];
            for ky in 0..k {
                let dy = ky as isize - p;
                let (y0, y1) = ((-dy).max(0) as usize, (h as isize - dy).min(h as isize) as usize);
                for kx in 0..k {
                    let dx = kx as isize - p;
                    let (x0, x1) = ((-dx).max(0) as usize, (w as isize - dx).min(w as isize) as usize);
                    let widx = ((o * ci + c) * k + ky) * k + kx;
                    let wv = weight[widx];
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let src = ((y as isize + dy) as usize * w) as isize + x0 as isize + dx;
                        let src = src as usize;
                        let g = &g_plane[y * w + x0..y * w + x1];
                        let s = &input_slice(in_plane, src, x1 - x0);
                        acc += g.iter().zip(s.iter()).map(|(a, b)| a * b).sum::<f64>();
                        if let Some(d_in) = d_in.as_mut() {
                            let dst = &mut d_in[c * plane + src..c * plane + src + (x1 - x0)];
                            for (d, gv) in dst.iter_mut().zip(g) {
                                *d += wv * gv;
                            }
                        }
                    }
                    d_weight[widx] += acc;
                }
            }
        }
    }
    d_in
}

#[inline]
fn input_slice(plane: &[f64], start: usize, len: usize) -> &[f64] {
    &plane[start..start + len]
}

impl Cnn {
    pub fn new(config: CnnConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut in_ch = 1;
        let mut convs = Vec::with_capacity(config.stages.len());
        for s in &config.stages {
            let fan_in = in_ch * s.kernel * s.kernel;
            convs.push(Conv {
                weight: uniform(rng, &[s.channels, in_ch, s.kernel, s.kernel], (6.0 / fan_in as f64).sqrt()),
                bias: Tensor::zeros(&[s.channels]),
            });
            in_ch = s.channels;
        }
        let f = config.feature_size();
        let fc_w = uniform(rng, &[config.num_classes, f], (1.0 / f as f64).sqrt());
        let fc_b = Tensor::zeros(&[config.num_classes]);
        Ok(Self {
            config,
            convs,
            fc_w,
            fc_b,
        })
    }

    pub fn forward(&self, image: &Grid) -> Result<(Vec<f64>, CnnTrace)> {
        if image.height != self.config.height || image.width != self.config.width {
            return Err(Error::ShapeMismatch(format!(
                "image {}x{} for a {}x{} network",
                image.width, image.height, self.config.width, self.config.height
            )));
        }
        let (mut h, mut w) = (image.height, image.width);
        let mut ch = 1;
        let mut act = image.data.clone();
        let mut stages = Vec::with_capacity(self.convs.len());
        for (conv, stage) in self.convs.iter().zip(&self.config.stages) {
            let pre = conv_forward(&act, (ch, h, w), &conv.weight.data, &conv.bias.data, stage.kernel);
            let co = stage.channels;
            let pool = stage.pool;
            let (ph, pw) = (h / pool, w / pool);
            let mut pooled = vec![0.0; co * ph * pw];
            let mut argmax = vec![0; co * ph * pw];
            for o in 0..co {
                for py in 0..ph {
                    for px in 0..pw {
                        let mut best = (usize::MAX, f64::NEG_INFINITY);
                        for dy in 0..pool {
                            for dx in 0..pool {
                                let idx = o * h * w + (py * pool + dy) * w + px * pool + dx;
                                let v = pre[idx].max(0.0);
                                if v > best.1 {
                                    best = (idx, v);
                                }
                            }
                        }
                        let out = (o * ph + py) * pw + px;
                        pooled[out] = best.1;
                        argmax[out] = best.0;
                    }
                }
            }
            stages.push(StageTrace {
                input: std::mem::replace(&mut act, pooled),
                in_channels: ch,
                height: h,
                width: w,
                pre,
                argmax,
            });
            ch = co;
            h = ph;
            w = pw;
        }
        let area = (h * w) as f64;
        let features: Vec<f64> = act.chunks_exact(h * w).map(|p| p.iter().sum::<f64>() / area).collect();
        let f = features.len();
        let logits = (0..self.config.num_classes)
            .map(|c| {
                self.fc_b.data[c]
                    + self.fc_w.data[c * f..(c + 1) * f]
                        .iter()
                        .zip(&features)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect();
        Ok((
            logits,
            CnnTrace {
                stages,
                final_hw: (h, w),
                features,
            },
        ))
    }

    /// Accumulates parameter gradients into `grads`; returns the gradient
    /// w.r.t. the input image when `want_input` is set.
    pub fn backward(
        &self,
        trace: &CnnTrace,
        d_logits: &[f64],
        grads: &mut Cnn,
        want_input: bool,
    ) -> Result<Option<Grid>> {
        if d_logits.len() != self.config.num_classes {
            return Err(Error::ShapeMismatch(format!(
                "{} logit gradients for {} classes",
                d_logits.len(),
                self.config.num_classes
            )));
        }
        let f = trace.features.len();
        let mut d_feat = vec![0.0; f];
        for (c, &g) in d_logits.iter().enumerate() {
            grads.fc_b.data[c] += g;
            for k in 0..f {
                grads.fc_w.data[c * f + k] += g * trace.features[k];
                d_feat[k] += g * self.fc_w.data[c * f + k];
            }
        }
        let (h, w) = trace.final_hw;
        let area = (h * w) as f64;
        let mut d_act: Vec<f64> = d_feat.iter().flat_map(|&g| std::iter::repeat_n(g / area, h * w)).collect();

        let mut image_grad = None;
        for (i, (st, stage)) in trace.stages.iter().zip(&self.config.stages).enumerate().rev() {
            let mut d_pre = vec![0.0; st.pre.len()];
            for (&idx, &g) in st.argmax.iter().zip(&d_act) {
                if st.pre[idx] > 0.0 {
                    d_pre[idx] += g;
                }
            }
            let need_input = i > 0 || want_input;
            let g = &mut grads.convs[i];
            let d_in = conv_backward(
                &st.input,
                (st.in_channels, st.height, st.width),
                &self.convs[i].weight.data,
                stage.kernel,
                &d_pre,
                &mut g.weight.data,
                &mut g.bias.data,
                need_input,
            );
            if i == 0 {
                image_grad = d_in.map(|data| Grid {
                    width: st.width,
                    height: st.height,
                    data,
                });
            } else {
                d_act = d_in.expect("requested");
            }
        }
        Ok(image_grad)
    }
}

impl Parameters for Cnn {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.convs.iter().flat_map(|c| [&c.weight, &c.bias]).collect();
        out.extend([&self.fc_w, &self.fc_b]);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.convs.iter_mut().flat_map(|c| [&mut c.weight, &mut c.bias]).collect();
        out.extend([&mut self.fc_w, &mut self.fc_b]);
        out
    }

    fn names(&self) -> Vec<String> {
        let mut out: Vec<String> = (0..self.convs.len())
            .flat_map(|i| [format!("cnn.conv{i}.w"), format!("cnn.conv{i}.b")])
            .collect();
        out.extend(["cnn.fc.w".to_owned(), "cnn.fc.b".to_owned()]);
        out
    }
}
