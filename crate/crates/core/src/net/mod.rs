//! Minimal neural toolkit for the sketch classifier.
//!
//! Layers keep explicit forward traces and implement their own reverse-mode
//! passes; a [`Tape`] strings the traces of one forward pass together so
//! [`backward`] can replay them in reverse. Parameter containers expose
//! their tensors in a fixed order through [`Parameters`], which is what the
//! optimizer, checkpoints and the finite-difference checker iterate over.

mod adam;
mod checkpoint;
mod cnn;
mod gradcheck;
mod init;
mod loss;
mod lstm;
mod tape;

use serde::{Deserialize, Serialize};

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION,
};
pub use cnn::{Cnn, CnnConfig, CnnStage, CnnTrace};
pub use gradcheck::{grad_check, grad_check_with, relative_error, GradReport, Stencil, TensorReport, REL_ERR_FLOOR};
pub use loss::{cross_entropy, softmax};
pub use lstm::{rnn_inputs, LstmCell, Rnn, RnnConfig, RnnTrace};
pub use tape::{backward, Backward, Tape, TapeEntry};

/// Dense row-major tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Train mode enables dropout; eval mode is deterministic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Uniform access to the learnable tensors of a container, in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;
    fn names(&self) -> Vec<String>;

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn zero(&mut self) {
        for t in self.tensors_mut() {
            t.data.fill(0.0);
        }
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// `self += other`. Panics if the layouts differ.
    fn add_assign(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            assert_eq!(a.shape, b.shape, "parameter layouts differ");
            a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

impl Parameters for Tensor {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![self]
    }
    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![self]
    }
    fn names(&self) -> Vec<String> {
        vec!["tensor".into()]
    }
}

/// Full classifier: optional recurrent attention front end plus the CNN.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub rnn: Option<Rnn>,
    pub cnn: Cnn,
}

impl Network {
    /// Same layout, all zeros. Used for gradient slots and moment buffers.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.zero();
        out
    }
}

impl Parameters for Network {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut out = self.rnn.as_ref().map(|r| r.tensors()).unwrap_or_default();
        out.extend(self.cnn.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.rnn.as_mut().map(|r| r.tensors_mut()).unwrap_or_default();
        out.extend(self.cnn.tensors_mut());
        out
    }

    fn names(&self) -> Vec<String> {
        let mut out = self.rnn.as_ref().map(|r| r.names()).unwrap_or_default();
        out.extend(self.cnn.names());
        out
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
