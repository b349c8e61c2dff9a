//! `PXNN` checkpoint files.
//!
//! ```text
//! "PXNN"  u32 version  u32 manifest_len  manifest (JSON, UTF-8)
//! f32 LE weights: every convolution's weights then biases, canonical order
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Architecture, Network};
use crate::error::{Error, Result};

pub const PXNN_MAGIC: &[u8; 4] = b"PXNN";
pub const PXNN_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct LayerEntry {
    in_ch: usize,
    out_ch: usize,
    k: usize,
    stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    architecture: Architecture,
    layers: Vec<LayerEntry>,
    params: usize,
}

fn manifest(net: &Network<f32>) -> Manifest {
    Manifest {
        architecture: net.arch.clone(),
        layers: net
            .convs()
            .iter()
            .map(|c| LayerEntry {
                in_ch: c.in_ch,
                out_ch: c.out_ch,
                k: c.k,
                stride: c.stride,
            })
            .collect(),
        params: net.param_count(),
    }
}

pub fn to_bytes(net: &Network<f32>) -> Vec<u8> {
    let m = serde_json::to_vec(&manifest(net)).expect("manifest serializes");
    let mut out = Vec::with_capacity(12 + m.len() + 4 * net.param_count());
    out.extend_from_slice(PXNN_MAGIC);
    out.extend_from_slice(&PXNN_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.len() as u32).to_le_bytes());
    out.extend_from_slice(&m);
    for c in net.convs() {
        for v in c.weight.iter().chain(&c.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<Network<f32>> {
    let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
    if bytes.len() < 12 || &bytes[..4] != PXNN_MAGIC {
        return Err(bad("bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if word(4) != PXNN_VERSION {
        return Err(bad(&format!("unsupported version {}", word(4))));
    }
    let mlen = word(8) as usize;
    let body = bytes.get(12..12 + mlen).ok_or_else(|| bad("truncated manifest"))?;
    let m: Manifest = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
    let mut net = Network::<f32>::new(m.architecture.clone(), 0)?;
    if manifest(&net) != m {
        return Err(Error::Shape("checkpoint layer manifest does not match its architecture".into()));
    }
    let mut rest = &bytes[12 + mlen..];
    if rest.len() != 4 * m.params {
        return Err(bad(&format!("expected {} weights, found {} bytes", m.params, rest.len())));
    }
    for c in net.convs_mut() {
        for v in c.weight.iter_mut().chain(c.bias.iter_mut()) {
            *v = f32::from_le_bytes(rest[..4].try_into().unwrap());
            rest = &rest[4..];
        }
    }
    Ok(net)
}

pub fn save(net: &Network<f32>, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&to_bytes(net))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Network<f32>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    from_bytes(&buf)
}

/// Loads a checkpoint and checks it has the expected topology.
pub fn load_expecting(path: impl AsRef<Path>, arch: &Architecture) -> Result<Network<f32>> {
    let net = load(path.as_ref())?;
    if &net.arch != arch {
        return Err(Error::Shape(format!(
            "{} holds {:?}, expected {:?}",
            path.as_ref().display(),
            net.arch,
            arch
        )));
    }
    Ok(net)
}
