//! Checkpoint layout: the magic bytes, the header length as a
//! little-endian `u32`, a JSON header, then every weight as a
//! little-endian `f32`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::mlp::{Dense, Mlp};
use super::relnet::{RelNet, RelNetSpec};
use crate::error::{read_file, Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ADSSLNET";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the blob, in `f32` elements.
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    spec: RelNetSpec,
    tensors: Vec<TensorEntry>,
    blob_len: usize,
    crc32: u32,
}

fn tensors(model: &RelNet) -> Vec<(String, Vec<usize>, &[f64])> {
    let mut out = Vec::new();
    for (prefix, mlp) in [("relation", &model.relation), ("fusion", &model.fusion)] {
        for (k, l) in mlp.layers.iter().enumerate() {
            let w = l.weights.as_slice().expect("standard layout");
            let b = l.bias.as_slice().expect("standard layout");
            out.push((format!("{prefix}.{k}.weight"), l.weights.shape().to_vec(), w));
            out.push((format!("{prefix}.{k}.bias"), vec![l.bias.len()], b));
        }
    }
    out
}

pub fn encode_checkpoint(model: &RelNet) -> Result<Vec<u8>> {
    let mut blob = Vec::with_capacity(model.num_parameters() * 4);
    let mut entries = Vec::new();
    for (name, shape, values) in tensors(model) {
        entries.push(TensorEntry { name, shape, offset: blob.len() / 4 });
        for v in values {
            blob.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let header = Header {
        version: CHECKPOINT_VERSION,
        spec: model.spec.clone(),
        tensors: entries,
        blob_len: blob.len(),
        crc32: crc32fast::hash(&blob),
    };
    let json = serde_json::to_vec(&header)?;
    let header_len = u32::try_from(json.len()).map_err(|_| Error::Checkpoint("header too large".into()))?;
    let mut out = Vec::with_capacity(CHECKPOINT_MAGIC.len() + 4 + json.len() + blob.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&blob);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<RelNet> {
    let prefix = CHECKPOINT_MAGIC.len() + 4;
    if bytes.len() < prefix || &bytes[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let json = bytes
        .get(prefix..prefix + header_len)
        .ok_or_else(|| Error::Checkpoint(format!("truncated header: {header_len} bytes declared")))?;
    // Check the version before the rest of the schema.
    let raw: serde_json::Value = serde_json::from_slice(json)?;
    let found = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion { found, expected: CHECKPOINT_VERSION });
    }
    let header: Header = serde_json::from_value(raw)?;
    let blob = &bytes[prefix + header_len..];
    if blob.len() != header.blob_len {
        return Err(Error::Checkpoint(format!(
            "header declares a {}-byte weight blob, file holds {}",
            header.blob_len,
            blob.len()
        )));
    }
    let actual = crc32fast::hash(blob);
    if actual != header.crc32 {
        return Err(Error::ChecksumMismatch { expected: header.crc32, actual });
    }
    header.spec.validate()?;

    let read = |entry: &TensorEntry, shape: &[usize]| -> Result<Vec<f64>> {
        if entry.shape != shape {
            return Err(Error::Checkpoint(format!(
                "tensor {} has shape {:?}, architecture needs {:?}",
                entry.name, entry.shape, shape
            )));
        }
        let count: usize = shape.iter().product();
        let bytes = entry
            .offset
            .checked_mul(4)
            .and_then(|start| blob.get(start..start + count * 4))
            .ok_or_else(|| Error::Checkpoint(format!("tensor {} lies outside the blob", entry.name)))?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect())
    };
    let mut entries = header.tensors.iter();
    let mut build = |shapes: Vec<(usize, usize)>| -> Result<Mlp> {
        let mut layers = Vec::with_capacity(shapes.len());
        for (fan_in, fan_out) in shapes {
            let (w, b) = match (entries.next(), entries.next()) {
                (Some(w), Some(b)) => (w, b),
                _ => return Err(Error::Checkpoint("header lists too few tensors".into())),
            };
            let weights = Array2::from_shape_vec((fan_in, fan_out), read(w, &[fan_in, fan_out])?)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
            let bias = Array1::from(read(b, &[fan_out])?);
            layers.push(Dense { weights, bias });
        }
        Mlp::from_layers(layers)
    };
    let relation = build(header.spec.relation_spec().layer_shapes())?;
    let fusion = build(header.spec.fusion_spec().layer_shapes())?;
    if entries.next().is_some() {
        return Err(Error::Checkpoint("header lists extra tensors".into()));
    }
    RelNet::from_parts(header.spec, relation, fusion)
}

pub fn save_checkpoint(model: &RelNet, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<RelNet> {
    decode_checkpoint(&read_file(path)?)
}
