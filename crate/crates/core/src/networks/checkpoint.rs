//! Binary checkpoint: magic, version, a JSON header describing every tensor,
//! then the raw little-endian `f64` payload in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arch::ArchConfig;
use super::models::GanVo;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"GANVOCKP";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    arch: ArchConfig,
    step: u64,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    net: String,
    name: String,
    shape: Vec<usize>,
}

fn entries(model: &GanVo) -> Vec<(Entry, Vec<f64>)> {
    let mut out = Vec::new();
    for (net_name, net) in model.nets() {
        for (name, t) in net.params.iter() {
            out.push((
                Entry {
                    net: net_name.into(),
                    name: name.into(),
                    shape: t.shape().to_vec(),
                },
                t.data().to_vec(),
            ));
        }
        for (slot, rs) in net.running.iter().enumerate() {
            for (kind, v) in [("mean", &rs.mean), ("var", &rs.var)] {
                out.push((
                    Entry {
                        net: net_name.into(),
                        name: format!("running{slot}.{kind}"),
                        shape: vec![v.len()],
                    },
                    v.clone(),
                ));
            }
        }
    }
    out
}

/// Serializes every parameter and batch-norm buffer of `model`.
pub fn to_bytes(model: &GanVo, step: u64) -> Result<Vec<u8>> {
    let items = entries(model);
    let mut payload = Vec::new();
    let mut tensors = Vec::with_capacity(items.len());
    for (entry, values) in items {
        for v in values {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        tensors.push(entry);
    }
    let header = serde_json::to_vec(&Header {
        arch: model.arch.clone(),
        step,
        tensors,
    })
    .map_err(|e| Error::Data(format!("checkpoint header: {e}")))?;
    let mut out = Vec::with_capacity(20 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Rebuilds a model from [`to_bytes`] output; returns it with its step.
pub fn from_bytes(bytes: &[u8]) -> Result<(GanVo, u64)> {
    let bad = |msg: &str| Error::Data(format!("checkpoint: {msg}"));
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = &bytes[20..];
    if body.len() < hlen {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..hlen])
        .map_err(|e| bad(&format!("malformed header: {e}")))?;
    let mut payload = &body[hlen..];

    let mut model = GanVo::new(header.arch, 0)?;
    let expected = entries(&model);
    if expected.len() != header.tensors.len() {
        return Err(bad(&format!(
            "{} tensors stored, architecture needs {}",
            header.tensors.len(),
            expected.len()
        )));
    }
    let mut values = Vec::with_capacity(expected.len());
    for ((want, _), got) in expected.iter().zip(&header.tensors) {
        if want.net != got.net || want.name != got.name || want.shape != got.shape {
            return Err(bad(&format!(
                "expected {}/{} {:?}, found {}/{} {:?}",
                want.net, want.name, want.shape, got.net, got.name, got.shape
            )));
        }
        let n: usize = got.shape.iter().product();
        if payload.len() < 8 * n {
            return Err(bad("truncated payload"));
        }
        let (chunk, rest) = payload.split_at(8 * n);
        payload = rest;
        values.push(
            chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect::<Vec<_>>(),
        );
    }
    if !payload.is_empty() {
        return Err(bad("trailing bytes"));
    }
    let mut values = values.into_iter();
    for (_, net) in model.nets_mut() {
        let ids: Vec<_> = net.params.ids().collect();
        for id in ids {
            let shape = net.params.get(id).shape().to_vec();
            net.params
                .set(id, Tensor::new(shape, values.next().expect("counted"))?)?;
        }
        for rs in &mut net.running {
            rs.mean = values.next().expect("counted");
            rs.var = values.next().expect("counted");
        }
    }
    Ok((model, header.step))
}

pub fn save_checkpoint(model: &GanVo, step: u64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model, step)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(GanVo, u64)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Lowercase hex SHA-256 of a file's contents.
pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}
