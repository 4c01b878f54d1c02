//! Checkpoint files.
//!
//! Layout: 8-byte magic `CHSTEGCK`, `u32` format version, `u32` header
//! length, a JSON header, then little-endian `f32` parameters in visiting
//! order. Training checkpoints append the optimizer moments as `f64`.
//! Loading re-derives the shape table from the header's architecture and
//! rejects any mismatch, non-finite value or singular mixing kernel.

use std::fs;
use std::path::Path;

use chartsteg_core::stegnet::StegModel;
use chartsteg_core::trainer::step::Plateau;
use chartsteg_core::trainer::Adam;
use chartsteg_core::Error;
use serde::{Deserialize, Serialize};

use crate::config::{ModelSection, RunConfig};
use crate::error::{AppError, Result};

const MAGIC: &[u8; 8] = b"CHSTEGCK";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct AdamHeader {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct PlateauHeader {
    best: Option<f64>,
    bad_windows: u32,
    window_sum: f64,
    window_len: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TrainingHeader {
    step: u64,
    config: RunConfig,
    adam: AdamHeader,
    plateau: PlateauHeader,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    model: ModelSection,
    param_count: usize,
    shapes: Vec<(String, Vec<usize>)>,
    training: Option<TrainingHeader>,
}

/// Optimizer and schedule state stored alongside a model.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingState {
    pub step: u64,
    pub config: RunConfig,
    pub adam: Adam,
    pub plateau: Plateau,
}

fn integrity(msg: impl Into<String>) -> AppError {
    AppError::Core(Error::ModelIntegrity(msg.into()))
}

pub fn to_bytes(model: &StegModel<f32>, training: Option<&TrainingState>) -> Vec<u8> {
    let header = Header {
        model: ModelSection::from(&model.hyper),
        param_count: model.param_count(),
        shapes: model.shape_table(),
        training: training.map(|t| TrainingHeader {
            step: t.step,
            config: t.config.clone(),
            adam: AdamHeader {
                lr: t.adam.lr,
                beta1: t.adam.beta1,
                beta2: t.adam.beta2,
                eps: t.adam.eps,
                t: t.adam.t,
            },
            plateau: PlateauHeader {
                best: t.plateau.best.is_finite().then_some(t.plateau.best),
                bad_windows: t.plateau.bad_windows,
                window_sum: t.plateau.window_sum,
                window_len: t.plateau.window_len,
            },
        }),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + model.param_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in model.flat() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(t) = training {
        for v in t.adam.m.iter().chain(&t.adam.v) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<(StegModel<f32>, Option<TrainingState>)> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(integrity("not a model checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(integrity(format!("unsupported checkpoint version {version}")));
    }
    let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() < header_len {
        return Err(integrity("truncated header"));
    }
    let header: Header =
        serde_json::from_slice(&body[..header_len]).map_err(|e| integrity(format!("bad header: {e}")))?;
    let hyper = header.model.hyper();
    hyper.validate()?;
    let mut model = StegModel::<f32>::init(hyper, 0)?;
    if model.shape_table() != header.shapes || model.param_count() != header.param_count {
        return Err(integrity("shape table does not match the architecture"));
    }
    let n = model.param_count();
    let moments = if header.training.is_some() { 2 * n * 8 } else { 0 };
    let data = &body[header_len..];
    if data.len() != n * 4 + moments {
        return Err(integrity(format!(
            "expected {} payload bytes, found {}",
            n * 4 + moments,
            data.len()
        )));
    }
    let params: Vec<f32> = data[..n * 4]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if params.iter().any(|v| !v.is_finite()) {
        return Err(integrity("non-finite parameter"));
    }
    model.load_flat(&params)?;
    model.validate()?;
    let training = header.training.map(|t| {
        let f64s: Vec<f64> = data[n * 4..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (m, v) = f64s.split_at(n);
        TrainingState {
            step: t.step,
            config: t.config,
            adam: Adam {
                lr: t.adam.lr,
                beta1: t.adam.beta1,
                beta2: t.adam.beta2,
                eps: t.adam.eps,
                t: t.adam.t,
                m: m.to_vec(),
                v: v.to_vec(),
            },
            plateau: Plateau {
                best: t.plateau.best.unwrap_or(f64::INFINITY),
                bad_windows: t.plateau.bad_windows,
                window_sum: t.plateau.window_sum,
                window_len: t.plateau.window_len,
            },
        }
    });
    Ok((model, training))
}

pub fn save(path: &Path, model: &StegModel<f32>, training: Option<&TrainingState>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, to_bytes(model, training)).map_err(|e| AppError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
}

pub fn load(path: &Path) -> Result<(StegModel<f32>, Option<TrainingState>)> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    from_bytes(&bytes).map_err(|e| match e {
        AppError::Core(Error::ModelIntegrity(msg)) => integrity(format!("{}: {msg}", path.display())),
        other => other,
    })
}
