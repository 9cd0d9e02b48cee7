use super::{CnnTrace, Network, RnnTrace};
use crate::error::{Error, Result};
use crate::nlr::{AttentionGradient, Coverage, Grid};

/// One recorded stage of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub enum TapeEntry {
    /// Attention RNN over the point sequence.
    Rnn(RnnTrace),
    /// Rasterization of attention into the image.
    Raster(Coverage),
    /// CNN over the image.
    Cnn(CnnTrace),
    /// Softmax cross-entropy; holds `dL/dlogits`.
    Loss { loss: f64, d_logits: Vec<f64> },
}

impl TapeEntry {
    fn name(&self) -> &'static str {
        match self {
            TapeEntry::Rnn(_) => "rnn",
            TapeEntry::Raster(_) => "raster",
            TapeEntry::Cnn(_) => "cnn",
            TapeEntry::Loss { .. } => "loss",
        }
    }
}

/// Forward-pass record, replayed in reverse by [`backward`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tape {
    entries: Vec<TapeEntry>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: TapeEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[TapeEntry] {
        &self.entries
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    /// Loss recorded by the final entry, if any.
    pub fn loss(&self) -> Option<f64> {
        match self.entries.last() {
            Some(TapeEntry::Loss { loss, .. }) => Some(*loss),
            _ => None,
        }
    }
}

/// Gradients produced by one backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Backward {
    pub grads: Network,
    /// `dL/dI` at the CNN input.
    pub image_grad: Grid,
    /// `dL/da`, present when the tape holds a rasterization.
    pub attention_grad: Option<AttentionGradient>,
}

enum Upstream {
    Logits(Vec<f64>),
    Image(Grid),
    Attention(Vec<f64>),
}

/// Reverse-mode pass over `tape` with the loss scaled by `scale`.
pub fn backward(tape: &mut Tape, net: &Network, scale: f64) -> Result<Backward> {
    if tape.consumed {
        return Err(Error::TapeConsumed);
    }
    tape.consumed = true;
    let mut grads = net.zeros_like();
    let mut image_grad = None;
    let mut attention_grad = None;
    let mut upstream: Option<Upstream> = None;

    for entry in tape.entries.iter().rev() {
        upstream = Some(match (entry, upstream.take()) {
            (TapeEntry::Loss { d_logits, .. }, None) => {
                Upstream::Logits(d_logits.iter().map(|g| g * scale).collect())
            }
            (TapeEntry::Cnn(trace), Some(Upstream::Logits(d))) => {
                let img = net.cnn.backward(trace, &d, &mut grads.cnn, true)?.expect("requested");
                image_grad = Some(img.clone());
                Upstream::Image(img)
            }
            (TapeEntry::Raster(coverage), Some(Upstream::Image(d))) => {
                let g = coverage.backward(&d)?;
                attention_grad = Some(g.clone());
                Upstream::Attention(g.0)
            }
            (TapeEntry::Rnn(trace), Some(Upstream::Attention(d))) => {
                let rnn = net
                    .rnn
                    .as_ref()
                    .ok_or_else(|| Error::ShapeMismatch("tape has an rnn stage but the network has none".into()))?;
                let slot = grads.rnn.as_mut().expect("same layout as net");
                rnn.backward(trace, &d, slot)?;
                Upstream::Attention(Vec::new())
            }
            (entry, _) => {
                return Err(Error::ShapeMismatch(format!("unexpected {} stage on tape", entry.name())));
            }
        });
    }
    let image_grad = image_grad.ok_or_else(|| Error::ShapeMismatch("tape has no cnn stage".into()))?;
    Ok(Backward {
        grads,
        image_grad,
        attention_grad,
    })
}
