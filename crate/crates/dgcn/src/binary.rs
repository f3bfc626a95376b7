//! Binary matrix files and model checkpoints.
//!
//! Matrix file: the 8 bytes `DGCNMAT\0`, rows and cols as little-endian
//! `u32`, then `rows * cols` little-endian `f64` in row-major order.
//!
//! Checkpoint: the 8 bytes `DGCNCKPT`, a little-endian `u64` header length,
//! a UTF-8 JSON header, then every parameter tensor as little-endian `f64`
//! in header order.

use std::fs;
use std::path::Path;

use dgcn_core::dgcn::DgcnModel;
use dgcn_core::nn::{Activation, DenseLayer, Mlp, Parameters};
use dgcn_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MATRIX_MAGIC: [u8; 8] = *b"DGCNMAT\0";
pub const CHECKPOINT_MAGIC: [u8; 8] = *b"DGCNCKPT";
const MATRIX_HEADER: usize = 16;

pub fn encode_matrix(m: &Matrix) -> Vec<u8> {
    let rows = u32::try_from(m.rows()).expect("row count fits in u32");
    let cols = u32::try_from(m.cols()).expect("column count fits in u32");
    let mut out = Vec::with_capacity(MATRIX_HEADER + 8 * m.as_slice().len());
    out.extend_from_slice(&MATRIX_MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// `path` only labels errors.
pub fn decode_matrix(bytes: &[u8], path: &Path) -> Result<Matrix> {
    if bytes.len() < MATRIX_HEADER {
        if bytes.len() >= 8 && bytes[..8] != MATRIX_MAGIC {
            return Err(Error::BadMagic { path: path.into() });
        }
        return Err(Error::Truncated {
            path: path.into(),
            expected: MATRIX_HEADER as u64,
            found: bytes.len() as u64,
        });
    }
    if bytes[..8] != MATRIX_MAGIC {
        return Err(Error::BadMagic { path: path.into() });
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = MATRIX_HEADER as u64 + 8 * rows as u64 * cols as u64;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            found,
        });
    }
    if found > expected {
        return Err(Error::invalid(
            path,
            format!("{} trailing bytes after matrix data", found - expected),
        ));
    }
    let data = bytes[MATRIX_HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Matrix::from_vec(rows, cols, data)?)
}

pub fn save_matrix(path: &Path, m: &Matrix) -> Result<()> {
    fs::write(path, encode_matrix(m)).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: u32,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    /// Activation after each layer, per network.
    pub activations: Vec<(String, Vec<String>)>,
    pub tensors: Vec<TensorInfo>,
}

const NETWORKS: [&str; 3] = ["enc_f", "enc_a", "dec"];

fn networks(model: &DgcnModel) -> [&Mlp; 3] {
    [&model.enc_f, &model.enc_a, &model.dec]
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Identity => "identity",
    }
}

fn header_for(model: &DgcnModel, seed: u64) -> CheckpointHeader {
    let mut tensors = Vec::new();
    let mut activations = Vec::new();
    for (name, net) in NETWORKS.iter().zip(networks(model)) {
        for (i, l) in net.layers().iter().enumerate() {
            tensors.push(TensorInfo {
                name: format!("{name}.layers[{i}].weight"),
                shape: vec![l.weight.rows(), l.weight.cols()],
            });
            tensors.push(TensorInfo {
                name: format!("{name}.layers[{i}].bias"),
                shape: vec![l.bias.len()],
            });
        }
        let acts = net
            .activations()
            .iter()
            .map(|&a| activation_name(a).to_string())
            .collect();
        activations.push((name.to_string(), acts));
    }
    tensors.push(TensorInfo {
        name: "centroids".into(),
        shape: vec![model.centroids.rows(), model.centroids.cols()],
    });
    CheckpointHeader {
        format: 1,
        seed,
        alpha: model.alpha,
        beta: model.beta,
        activations,
        tensors,
    }
}

pub fn encode_checkpoint(model: &DgcnModel, seed: u64) -> Vec<u8> {
    let header = serde_json::to_vec(&header_for(model, seed)).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, t) in model.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Returns the model and the seed it was trained with.
pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<(DgcnModel, u64)> {
    if bytes.len() < 16 {
        return Err(Error::Truncated {
            path: path.into(),
            expected: 16,
            found: bytes.len() as u64,
        });
    }
    if bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic { path: path.into() });
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let body_start = 16u64.saturating_add(len);
    if (bytes.len() as u64) < body_start {
        return Err(Error::Truncated {
            path: path.into(),
            expected: body_start,
            found: bytes.len() as u64,
        });
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[16..body_start as usize])
        .map_err(|e| Error::invalid(path, format!("checkpoint header: {e}")))?;
    let count: u64 = header
        .tensors
        .iter()
        .map(|t| t.shape.iter().product::<usize>() as u64)
        .sum();
    let expected = body_start + 8 * count;
    if bytes.len() as u64 != expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            found: bytes.len() as u64,
        });
    }
    let mut values = bytes[body_start as usize..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |info: &TensorInfo| -> Vec<f64> {
        let len = info.shape.iter().product();
        values.by_ref().take(len).collect()
    };

    let bad = |msg: String| Error::invalid(path, msg);
    let mut tensors = header.tensors.iter();
    let mut nets = Vec::new();
    for name in NETWORKS {
        let acts = header
            .activations
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| bad(format!("no activations for {name}")))?;
        let mut layers = Vec::new();
        let mut activations = Vec::new();
        for (i, act) in acts.1.iter().enumerate() {
            let w = tensors
                .next()
                .ok_or_else(|| bad(format!("missing {name} layer {i}")))?;
            let b = tensors
                .next()
                .ok_or_else(|| bad(format!("missing {name} layer {i}")))?;
            if w.name != format!("{name}.layers[{i}].weight")
                || b.name != format!("{name}.layers[{i}].bias")
                || w.shape.len() != 2
                || b.shape.len() != 1
            {
                return Err(bad(format!("unexpected tensor {} or {}", w.name, b.name)));
            }
            let weight = Matrix::from_vec(w.shape[0], w.shape[1], take(w))?;
            let bias = take(b);
            layers.push(DenseLayer { weight, bias });
            activations.push(match act.as_str() {
                "relu" => Activation::Relu,
                "identity" => Activation::Identity,
                other => return Err(bad(format!("unknown activation {other:?}"))),
            });
        }
        nets.push(Mlp::new(layers, activations)?);
    }
    let c = tensors
        .next()
        .filter(|t| t.name == "centroids" && t.shape.len() == 2)
        .ok_or_else(|| bad("missing centroids".into()))?;
    if tensors.next().is_some() {
        return Err(bad("unexpected tensors after centroids".into()));
    }
    let centroids = Matrix::from_vec(c.shape[0], c.shape[1], take(c))?;
    let dec = nets.pop().unwrap();
    let enc_a = nets.pop().unwrap();
    let enc_f = nets.pop().unwrap();
    let model = DgcnModel {
        enc_f,
        enc_a,
        dec,
        centroids,
        alpha: header.alpha,
        beta: header.beta,
    };
    model.validate()?;
    Ok((model, header.seed))
}

pub fn save_checkpoint(path: &Path, model: &DgcnModel, seed: u64) -> Result<()> {
    fs::write(path, encode_checkpoint(model, seed)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(DgcnModel, u64)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
