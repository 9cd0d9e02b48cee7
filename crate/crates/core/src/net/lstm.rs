//! Multi-layer (bi)directional LSTM with a per-step sigmoid attention head.
//!
//! Gate layout inside every `4H` block is `[input, forget, cell, output]`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::init::{orthogonal, uniform};
use super::{sigmoid, Mode, Parameters, Tensor};
use crate::error::{Error, Result};
use crate::nlr::AttentionSequence;
use crate::rng::Rng;
use crate::sketch::OffsetSketch;

/// Features per time step: `(dx, dy, s)`.
pub const INPUT_SIZE: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnnConfig {
    pub input_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub bidirectional: bool,
    pub dropout_prob: f64,
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self {
            input_size: INPUT_SIZE,
            hidden_size: 512,
            num_layers: 2,
            bidirectional: true,
            dropout_prob: 0.5,
        }
    }
}

impl RnnConfig {
    pub fn with_hidden(hidden_size: usize) -> Self {
        Self {
            hidden_size,
            ..Self::default()
        }
    }

    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    pub fn output_size(&self) -> usize {
        self.directions() * self.hidden_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size != INPUT_SIZE {
            return Err(Error::InvalidConfig(format!(
                "rnn input size must be {INPUT_SIZE}, got {}",
                self.input_size
            )));
        }
        if self.hidden_size == 0 || self.num_layers == 0 {
            return Err(Error::InvalidConfig("rnn needs hidden_size and num_layers > 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::InvalidConfig(format!(
                "dropout probability {} outside [0, 1)",
                self.dropout_prob
            )));
        }
        Ok(())
    }
}

/// Network input for one sketch: offsets divided by `scale` (canvas pixels),
/// raw stroke state.
pub fn rnn_inputs(offsets: &OffsetSketch, scale: f64) -> Vec<[f64; INPUT_SIZE]> {
    offsets
        .offsets()
        .iter()
        .map(|o| [o.dx / scale, o.dy / scale, f64::from(u8::from(o.ends_stroke))])
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell {
    /// `[4H, in]`
    pub w_ih: Tensor,
    /// `[4H, H]`
    pub w_hh: Tensor,
    /// `[4H]`
    pub bias: Tensor,
}

impl LstmCell {
    fn new(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let w_ih = uniform(rng, &[4 * hidden, input], (1.0 / input as f64).sqrt());
        let mut w_hh = Tensor::zeros(&[4 * hidden, hidden]);
        for gate in 0..4 {
            let q = orthogonal(rng, hidden);
            w_hh.data[gate * hidden * hidden..(gate + 1) * hidden * hidden].copy_from_slice(&q);
        }
        let mut bias = Tensor::zeros(&[4 * hidden]);
        bias.data[hidden..2 * hidden].fill(1.0);
        Self { w_ih, w_hh, bias }
    }

    fn hidden(&self) -> usize {
        self.bias.len() / 4
    }

    fn input(&self) -> usize {
        self.w_ih.shape[1]
    }
}

/// Activations of one direction of one layer, indexed by sequence position.
#[derive(Clone, Debug, PartialEq)]
struct DirTrace {
    /// Activated gates `[i, f, g, o]` per step, `4H` each.
    gates: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    tanh_c: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
struct LayerTrace {
    /// Layer input after dropout.
    input: Vec<Vec<f64>>,
    /// Inverted-dropout multipliers applied to the previous layer's output.
    mask: Option<Vec<Vec<f64>>>,
    dirs: Vec<DirTrace>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct RnnTrace {
    layers: Vec<LayerTrace>,
    top: Vec<Vec<f64>>,
    attention: Vec<f64>,
}

impl RnnTrace {
    pub fn attention(&self) -> &[f64] {
        &self.attention
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rnn {
    pub config: RnnConfig,
    /// `layers[l][d]`, direction 0 runs forward in time, 1 backward.
    pub layers: Vec<Vec<LstmCell>>,
    /// `[D*H]`
    pub head_w: Tensor,
    /// `[1]`
    pub head_b: Tensor,
}

fn matvec_acc(out: &mut [f64], w: &[f64], x: &[f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `dW += dz x^T` and `dx += W^T dz`.
fn matvec_backward(dz: &[f64], w: &[f64], x: &[f64], dw: &mut [f64], dx: &mut [f64]) {
    let cols = x.len();
    for ((&d, dw_row), row) in dz.iter().zip(dw.chunks_exact_mut(cols)).zip(w.chunks_exact(cols)) {
        if d != 0.0 {
            dw_row.iter_mut().zip(x).for_each(|(g, xv)| *g += d * xv);
            dx.iter_mut().zip(row).for_each(|(g, wv)| *g += d * wv);
        }
    }
}

impl Rnn {
    pub fn new(config: RnnConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_size;
        let layers = (0..config.num_layers)
            .map(|l| {
                let input = if l == 0 { config.input_size } else { config.output_size() };
                (0..config.directions()).map(|_| LstmCell::new(input, h, rng)).collect()
            })
            .collect();
        let head_w = uniform(rng, &[config.output_size()], (1.0 / config.output_size() as f64).sqrt());
        Ok(Self {
            config,
            layers,
            head_w,
            head_b: Tensor::zeros(&[1]),
        })
    }

    /// Zero the attention head so every point gets attention 0.5.
    pub fn zero_head(&mut self) {
        self.head_w.data.fill(0.0);
        self.head_b.data.fill(0.0);
    }

    fn run_direction(cell: &LstmCell, input: &[Vec<f64>], reverse: bool) -> DirTrace {
        let t_len = input.len();
        let h = cell.hidden();
        let mut trace = DirTrace {
            gates: vec![Vec::new(); t_len],
            c: vec![Vec::new(); t_len],
            tanh_c: vec![Vec::new(); t_len],
            h: vec![Vec::new(); t_len],
        };
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let order: Vec<usize> = if reverse { (0..t_len).rev().collect() } else { (0..t_len).collect() };
        for t in order {
            let mut z = cell.bias.data.clone();
            matvec_acc(&mut z, &cell.w_ih.data, &input[t]);
            matvec_acc(&mut z, &cell.w_hh.data, &h_prev);
            for (k, v) in z.iter_mut().enumerate() {
                *v = if (2 * h..3 * h).contains(&k) { v.tanh() } else { sigmoid(*v) };
            }
            let mut c = vec![0.0; h];
            let mut tc = vec![0.0; h];
            let mut hn = vec![0.0; h];
            for j in 0..h {
                c[j] = z[h + j] * c_prev[j] + z[j] * z[2 * h + j];
                tc[j] = c[j].tanh();
                hn[j] = z[3 * h + j] * tc[j];
            }
            trace.gates[t] = z;
            c_prev.clone_from(&c);
            h_prev.clone_from(&hn);
            trace.c[t] = c;
            trace.tanh_c[t] = tc;
            trace.h[t] = hn;
        }
        trace
    }

    /// Per-point attention in (0, 1). Train mode applies inverted dropout
    /// between LSTM layers using `dropout_rng`.
    pub fn forward(
        &self,
        inputs: &[[f64; INPUT_SIZE]],
        mode: Mode,
        mut dropout_rng: Option<&mut Rng>,
    ) -> Result<(AttentionSequence, RnnTrace)> {
        if inputs.is_empty() {
            return Err(Error::ShapeMismatch("empty input sequence".into()));
        }
        let p = self.config.dropout_prob;
        let mut current: Vec<Vec<f64>> = inputs.iter().map(|x| x.to_vec()).collect();
        let mut layers = Vec::with_capacity(self.layers.len());
        for (l, cells) in self.layers.iter().enumerate() {
            let mut mask = None;
            if l > 0 && mode == Mode::Train && p > 0.0 {
                let rng = dropout_rng
                    .as_deref_mut()
                    .ok_or_else(|| Error::InvalidConfig("train mode needs a dropout stream".into()))?;
                let keep = 1.0 / (1.0 - p);
                let m: Vec<Vec<f64>> = current
                    .iter()
                    .map(|row| row.iter().map(|_| if rng.random_bool(p) { 0.0 } else { keep }).collect())
                    .collect();
                for (row, mrow) in current.iter_mut().zip(&m) {
                    row.iter_mut().zip(mrow).for_each(|(v, s)| *v *= s);
                }
                mask = Some(m);
            }
            let dirs: Vec<DirTrace> = cells
                .iter()
                .enumerate()
                .map(|(d, cell)| Self::run_direction(cell, &current, d == 1))
                .collect();
            let output: Vec<Vec<f64>> = (0..current.len())
                .map(|t| dirs.iter().flat_map(|d| d.h[t].iter().copied()).collect())
                .collect();
            layers.push(LayerTrace {
                input: current,
                mask,
                dirs,
            });
            current = output;
        }
        let attention: Vec<f64> = current
            .iter()
            .map(|row| {
                let z = self.head_b.data[0]
                    + row.iter().zip(&self.head_w.data).map(|(a, b)| a * b).sum::<f64>();
                sigmoid(z)
            })
            .collect();
        let trace = RnnTrace {
            layers,
            top: current,
            attention: attention.clone(),
        };
        Ok((AttentionSequence(attention), trace))
    }

    /// Accumulate parameter gradients into `grads` given `dL/da`.
    pub fn backward(&self, trace: &RnnTrace, d_attention: &[f64], grads: &mut Rnn) -> Result<()> {
        if d_attention.len() != trace.attention.len() {
            return Err(Error::ShapeMismatch(format!(
                "attention gradient has {} entries for {} steps",
                d_attention.len(),
                trace.attention.len()
            )));
        }
        let t_len = trace.top.len();
        let width = self.config.output_size();
        let h = self.config.hidden_size;

        let mut d_out: Vec<Vec<f64>> = vec![vec![0.0; width]; t_len];
        for t in 0..t_len {
            let a = trace.attention[t];
            let dz = d_attention[t] * a * (1.0 - a);
            grads.head_b.data[0] += dz;
            for k in 0..width {
                grads.head_w.data[k] += dz * trace.top[t][k];
                d_out[t][k] = dz * self.head_w.data[k];
            }
        }

        for l in (0..self.layers.len()).rev() {
            let layer = &trace.layers[l];
            let in_dim = self.layers[l][0].input();
            let mut d_in: Vec<Vec<f64>> = vec![vec![0.0; in_dim]; t_len];
            for (d, cell) in self.layers[l].iter().enumerate() {
                let dt = &layer.dirs[d];
                let g = &mut grads.layers[l][d];
                let reverse = d == 1;
                let order: Vec<usize> =
                    if reverse { (0..t_len).collect() } else { (0..t_len).rev().collect() };
                let mut dh_next = vec![0.0; h];
                let mut dc_next = vec![0.0; h];
                let zeros = vec![0.0; h];
                for t in order {
                    let prev = if reverse {
                        (t + 1 < t_len).then_some(t + 1)
                    } else {
                        t.checked_sub(1)
                    };
                    let (h_prev, c_prev) = match prev {
                        Some(q) => (&dt.h[q], &dt.c[q]),
                        None => (&zeros, &zeros),
                    };
                    let gates = &dt.gates[t];
                    let mut dz = vec![0.0; 4 * h];
                    for j in 0..h {
                        let (i, f, gg, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                        let tc = dt.tanh_c[t][j];
                        let dh = d_out[t][d * h + j] + dh_next[j];
                        let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
                        dz[j] = dc * gg * i * (1.0 - i);
                        dz[h + j] = dc * c_prev[j] * f * (1.0 - f);
                        dz[2 * h + j] = dc * i * (1.0 - gg * gg);
                        dz[3 * h + j] = dh * tc * o * (1.0 - o);
                        dc_next[j] = dc * f;
                    }
                    g.bias.data.iter_mut().zip(&dz).for_each(|(b, v)| *b += v);
                    matvec_backward(&dz, &cell.w_ih.data, &layer.input[t], &mut g.w_ih.data, &mut d_in[t]);
                    dh_next.fill(0.0);
                    matvec_backward(&dz, &cell.w_hh.data, h_prev, &mut g.w_hh.data, &mut dh_next);
                }
            }
            if l > 0 {
                if let Some(mask) = &layer.mask {
                    for (row, mrow) in d_in.iter_mut().zip(mask) {
                        row.iter_mut().zip(mrow).for_each(|(v, s)| *v *= s);
                    }
                }
                d_out = d_in;
            }
        }
        Ok(())
    }
}

impl Parameters for Rnn {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for cells in &self.layers {
            for c in cells {
                out.extend([&c.w_ih, &c.w_hh, &c.bias]);
            }
        }
        out.extend([&self.head_w, &self.head_b]);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for cells in &mut self.layers {
            for c in cells {
                out.extend([&mut c.w_ih, &mut c.w_hh, &mut c.bias]);
            }
        }
        out.extend([&mut self.head_w, &mut self.head_b]);
        out
    }

    fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (l, cells) in self.layers.iter().enumerate() {
            for d in 0..cells.len() {
                let dir = if d == 0 { "fwd" } else { "bwd" };
                for t in ["w_ih", "w_hh", "bias"] {
                    out.push(format!("rnn.l{l}.{dir}.{t}"));
                }
            }
        }
        out.extend(["rnn.head.w".to_owned(), "rnn.head.b".to_owned()]);
        out
    }
}
