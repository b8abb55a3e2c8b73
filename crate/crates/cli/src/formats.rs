//! On-disk artefacts.
//!
//! Checkpoints and datasets share one container: an 8-byte magic, the
//! header length as a little-endian `u64`, a JSON header, then a binary
//! payload.
//!
//! - Checkpoint payload: every parameter tensor in architecture order,
//!   row-major, as little-endian `f64`.
//! - Dataset payload: each input packed (shape task: 8 pixels per byte,
//!   most significant bit first; sequence task: one byte per token),
//!   followed by the objective values as little-endian `f64`.
//!
//! Every write goes to a temporary file in the target directory and is
//! renamed into place.

use std::{
    fs,
    io::Write,
    path::{Path, PathBuf},
};

use latent_bo_core::{
    diffcore::Tensor,
    tasks::{Dataset, TaskKind},
    vae::{Architecture, VaeParams},
};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::CliError;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LBOCKPT1";
pub const DATASET_MAGIC: &[u8; 8] = b"LBODATA1";

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path.file_name().ok_or_else(|| CliError::format(path, "not a file path"))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

fn container<H: Serialize>(magic: &[u8; 8], header: &H, payload: &[u8]) -> Vec<u8> {
    let h = serde_json::to_vec(header).expect("header serialises");
    let mut out = Vec::with_capacity(16 + h.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(h.len() as u64).to_le_bytes());
    out.extend_from_slice(&h);
    out.extend_from_slice(payload);
    out
}

fn open_container<'a, H: DeserializeOwned>(path: &Path, magic: &[u8; 8], bytes: &'a [u8]) -> Result<(H, &'a [u8]), CliError> {
    if bytes.len() < 16 || &bytes[..8] != magic {
        return Err(CliError::format(path, "bad magic"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if body.len() < len {
        return Err(CliError::format(path, "truncated header"));
    }
    let header = serde_json::from_slice(&body[..len]).map_err(|e| CliError::format(path, format!("header: {e}")))?;
    Ok((header, &body[len..]))
}

fn read_f64s(path: &Path, bytes: &[u8], n: usize) -> Result<Vec<f64>, CliError> {
    if bytes.len() != 8 * n {
        return Err(CliError::format(path, format!("payload holds {} bytes, expected {}", bytes.len(), 8 * n)));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

/// Checkpoint header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// Pipeline stage that produced the weights (`pretrain`, `finetune`).
    pub stage: String,
    pub seed: u64,
    pub architecture: Architecture,
    pub shapes: Vec<[usize; 2]>,
    pub config: serde_json::Value,
}

pub fn encode_checkpoint(params: &VaeParams, stage: &str, seed: u64, config: serde_json::Value) -> Vec<u8> {
    let header = CheckpointHeader {
        stage: stage.to_owned(),
        seed,
        architecture: params.arch().clone(),
        shapes: params.tensors().iter().map(|t| t.shape()).collect(),
        config,
    };
    let payload: Vec<u8> = params.tensors().iter().flat_map(|t| t.data().iter().flat_map(|v| v.to_le_bytes())).collect();
    container(CHECKPOINT_MAGIC, &header, &payload)
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<(CheckpointHeader, VaeParams), CliError> {
    let (header, payload): (CheckpointHeader, _) = open_container(path, CHECKPOINT_MAGIC, bytes)?;
    if header.shapes != header.architecture.tensor_shapes() {
        return Err(CliError::format(path, "tensor shapes do not match the architecture"));
    }
    let total: usize = header.shapes.iter().map(|s| s[0] * s[1]).sum();
    let flat = read_f64s(path, payload, total)?;
    let mut tensors = Vec::with_capacity(header.shapes.len());
    let mut at = 0;
    for s in &header.shapes {
        let n = s[0] * s[1];
        tensors.push(Tensor::from_vec(s[0], s[1], flat[at..at + n].to_vec()).map_err(|e| CliError::format(path, e.to_string()))?);
        at += n;
    }
    let params = VaeParams::from_parts(header.architecture.clone(), tensors).map_err(|e| CliError::format(path, e.to_string()))?;
    Ok((header, params))
}

pub fn save_checkpoint(path: &Path, params: &VaeParams, stage: &str, seed: u64, config: serde_json::Value) -> Result<(), CliError> {
    write_atomic(path, &encode_checkpoint(params, stage, seed, config))
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, VaeParams), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_checkpoint(path, &bytes)
}

/// Dataset header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub task: TaskKind,
    pub count: usize,
    pub input_len: usize,
    /// `bits` or `tokens`.
    pub packing: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

fn packing(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Shape => "bits",
        TaskKind::Sequence => "tokens",
    }
}

fn packed_len(task: TaskKind) -> usize {
    match task {
        TaskKind::Shape => task.input_len().div_ceil(8),
        TaskKind::Sequence => task.input_len(),
    }
}

fn pack(task: TaskKind, x: &[u8], out: &mut Vec<u8>) {
    match task {
        TaskKind::Shape => out.extend(x.chunks(8).map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b & 1) << (7 - i))))),
        TaskKind::Sequence => out.extend_from_slice(x),
    }
}

fn unpack(task: TaskKind, bytes: &[u8]) -> Vec<u8> {
    match task {
        TaskKind::Shape => (0..task.input_len()).map(|i| (bytes[i / 8] >> (7 - i % 8)) & 1).collect(),
        TaskKind::Sequence => bytes.to_vec(),
    }
}

pub fn encode_dataset(task: TaskKind, data: &Dataset, seed: u64, config: serde_json::Value) -> Vec<u8> {
    let header = DatasetHeader {
        task,
        count: data.len(),
        input_len: task.input_len(),
        packing: packing(task).to_owned(),
        seed,
        config,
    };
    let mut payload = Vec::with_capacity(data.len() * (packed_len(task) + 8));
    for x in &data.inputs {
        pack(task, x, &mut payload);
    }
    for v in &data.values {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    container(DATASET_MAGIC, &header, &payload)
}

pub fn decode_dataset(path: &Path, bytes: &[u8]) -> Result<(DatasetHeader, Dataset), CliError> {
    let (header, payload): (DatasetHeader, _) = open_container(path, DATASET_MAGIC, bytes)?;
    if header.input_len != header.task.input_len() || header.packing != packing(header.task) {
        return Err(CliError::format(path, "header does not match the task encoding"));
    }
    let stride = packed_len(header.task);
    let split = header.count * stride;
    if payload.len() < split {
        return Err(CliError::format(path, "truncated inputs"));
    }
    let inputs: Vec<Vec<u8>> = payload[..split].chunks_exact(stride.max(1)).map(|c| unpack(header.task, c)).collect();
    let values = read_f64s(path, &payload[split..], header.count)?;
    let likelihood = header.task.likelihood();
    if inputs.iter().any(|x| likelihood.validate_input(x).is_err()) {
        return Err(CliError::format(path, "input outside the task alphabet"));
    }
    Ok((header, Dataset { inputs, values }))
}

pub fn save_dataset(path: &Path, task: TaskKind, data: &Dataset, seed: u64, config: serde_json::Value) -> Result<(), CliError> {
    write_atomic(path, &encode_dataset(task, data, seed, config))
}

pub fn load_dataset(path: &Path) -> Result<(DatasetHeader, Dataset), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_dataset(path, &bytes)
}
