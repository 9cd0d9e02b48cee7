//! Binary checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "R2CNNCKP"
//! version  u32
//! hlen     u64      length of the JSON header in bytes
//! header   hlen bytes of UTF-8 JSON
//! params   f64 LE, every tensor in header order
//! m        f64 LE, same layout (Adam first moments)
//! v        f64 LE, same layout (Adam second moments)
//! ```
//!
//! The header records the network configs, seed, Adam step, epoch, the
//! experiment description and the name and shape of every tensor.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, Cnn, CnnConfig, Network, Parameters, Rnn, RnnConfig};
use crate::error::{Error, Result};
use crate::rng::rng_for;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"R2CNNCKP";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub adam: AdamState<Network>,
    pub seed: u64,
    pub epoch: usize,
    /// Free-form experiment description stored alongside the weights.
    pub experiment: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    rnn: Option<RnnConfig>,
    cnn: CnnConfig,
    seed: u64,
    step: u64,
    epoch: usize,
    experiment: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

fn network_for(rnn: Option<RnnConfig>, cnn: CnnConfig) -> Result<Network> {
    let mut rng = rng_for(0, &[]);
    let rnn = rnn.map(|c| Rnn::new(c, &mut rng)).transpose()?;
    let mut net = Network {
        rnn,
        cnn: Cnn::new(cnn, &mut rng)?,
    };
    net.zero();
    Ok(net)
}

/// Serialize a checkpoint into bytes.
pub fn checkpoint_bytes(ck: &Checkpoint) -> Vec<u8> {
    let net = &ck.network;
    let header = Header {
        rnn: net.rnn.as_ref().map(|r| r.config),
        cnn: net.cnn.config.clone(),
        seed: ck.seed,
        step: ck.adam.step,
        epoch: ck.epoch,
        experiment: ck.experiment.clone(),
        tensors: net
            .names()
            .into_iter()
            .zip(net.tensors())
            .map(|(name, t)| TensorEntry {
                name,
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(20 + header.len() + 24 * net.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for part in [net, &ck.adam.m, &ck.adam.v] {
        for t in part.tensors() {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

/// Parse bytes produced by [`checkpoint_bytes`]. `path` is used for messages only.
pub fn checkpoint_from_bytes(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let bad = |message: &str| Error::Format {
        path: path.to_path_buf(),
        message: message.to_owned(),
    };
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            kind: "checkpoint",
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = bytes.get(20..).ok_or_else(|| bad("truncated"))?;
    let header_bytes = body.get(..hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(header_bytes).map_err(|e| bad(&format!("bad header: {e}")))?;

    let mut network = network_for(header.rnn, header.cnn)?;
    let layout_ok = network.names().len() == header.tensors.len()
        && network
            .names()
            .iter()
            .zip(network.tensors())
            .zip(&header.tensors)
            .all(|((n, t), e)| *n == e.name && t.shape == e.shape);
    if !layout_ok {
        return Err(bad("tensor layout does not match the stored configs"));
    }
    let count = network.parameter_count();
    let data = &body[hlen..];
    if data.len() != 3 * 8 * count {
        return Err(bad("parameter block has the wrong length"));
    }
    let mut values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut m = network.clone();
    let mut v = network.clone();
    for part in [&mut network, &mut m, &mut v] {
        for t in part.tensors_mut() {
            for x in &mut t.data {
                *x = values.next().expect("length checked");
            }
        }
    }
    Ok(Checkpoint {
        network,
        adam: AdamState {
            m,
            v,
            step: header.step,
        },
        seed: header.seed,
        epoch: header.epoch,
        experiment: header.experiment,
    })
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&checkpoint_bytes(ck)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes, path)
}
