//! Sketch recognition with recurrent attention and differentiable line
//! rasterization.
//!
//! A vector sketch (ordered points with stroke-end flags) is fed to a
//! bidirectional LSTM that predicts one attention value per point. The
//! neural line rasterizer turns points plus attention into an attention map
//! whose stroke pixels interpolate the per-point values, and a small CNN
//! classifies that map. The rasterizer's backward pass routes the CNN's
//! pixel gradients back to the LSTM, so the whole chain trains end to end.
//!
//! Modules, bottom up:
//!
//! - [`sketch`]: point sequences, offsets, canvas normalization
//! - [`ingest`]: QuickDraw ndjson, the internal dataset format, synthetic data
//! - [`simplify`]: RDP simplification with a sequence-length cap
//! - [`nlr`]: forward/backward rasterization and the reference oracle
//! - [`net`]: LSTM, attention head, CNN, loss, Adam, gradient checking
//! - [`pipeline`]: model variants, augmentation, training, evaluation

pub mod error;
pub mod ingest;
pub mod net;
pub mod nlr;
pub mod pipeline;
pub mod rng;
pub mod simplify;
pub mod sketch;

pub use error::{Error, Result};
pub use nlr::{AttentionMap, AttentionSequence, Grid, RasterConfig};
pub use simplify::SimplifyConfig;
pub use sketch::{Point, VectorSketch};
