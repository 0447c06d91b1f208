//! Model checkpoints: JSON header + named little-endian f64 arrays.
//!
//! Layout: 8-byte magic, u32 format version, u64 header length, UTF-8 JSON
//! header, u32 array count, then per array: name, kind (parameter or
//! buffer), shape, data. Everything multi-byte is little-endian. Loading a
//! checkpoint whose version or architecture does not match fails loudly —
//! there is no silent partial restore.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::ArrayD;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::module::Layer;

const MAGIC: &[u8; 8] = b"CAMACKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Identification and resume metadata stored in the JSON header.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// Architecture tag, e.g. "generator" or "resnet18"; must match on load.
    pub arch: String,
    /// Condition-plane count baked into the network (0 for unconditional).
    pub cond_channels: usize,
    /// Base channel width.
    pub width: usize,
    /// Training phase that produced this checkpoint.
    pub phase: String,
    /// Global step at save time.
    pub step: u64,
    /// Serialized training RNG so a resumed run replays the same stream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng: Option<ChaCha8Rng>,
    /// Free-form extras (hyperparameters, provenance).
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

impl CheckpointHeader {
    pub fn new(arch: impl Into<String>, cond_channels: usize, width: usize) -> CheckpointHeader {
        CheckpointHeader {
            arch: arch.into(),
            cond_channels,
            width,
            phase: String::new(),
            step: 0,
            rng: None,
            meta: serde_json::Map::new(),
        }
    }
}

/// Whether a serialized array is an optimizable parameter or auxiliary state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Param,
    Buffer,
}

pub type StateDict = Vec<(String, StateKind, ArrayD<f64>)>;

/// Snapshots every parameter and buffer of `layer`.
pub fn collect_state(layer: &mut dyn Layer) -> StateDict {
    let mut state = StateDict::new();
    layer.visit_params(&mut |name, p| {
        state.push((name.to_string(), StateKind::Param, p.value.clone()));
    });
    layer.visit_buffers(&mut |name, b| {
        state.push((name.to_string(), StateKind::Buffer, b.clone()));
    });
    state
}

/// Restores a state dict into `layer`. Names, kinds, shapes, and order must
/// match exactly.
pub fn apply_state(layer: &mut dyn Layer, state: &StateDict) -> Result<()> {
    let mut idx = 0usize;
    let mut err: Option<NnError> = None;
    {
        let mut take = |name: &str, kind: StateKind, shape: &[usize]| -> Option<ArrayD<f64>> {
            if err.is_some() {
                return None;
            }
            let Some((sname, skind, value)) = state.get(idx) else {
                err = Some(NnError::StateMismatch(format!(
                    "model expects more arrays than checkpoint holds (at {name})"
                )));
                return None;
            };
            idx += 1;
            if sname != name || *skind != kind {
                err = Some(NnError::StateMismatch(format!(
                    "array {idx}: model expects {kind:?} {name}, checkpoint has {skind:?} {sname}"
                )));
                return None;
            }
            if value.shape() != shape {
                err = Some(NnError::StateMismatch(format!(
                    "{name}: shape {:?} in checkpoint, {shape:?} in model",
                    value.shape()
                )));
                return None;
            }
            Some(value.clone())
        };
        layer.visit_params(&mut |name, p| {
            if let Some(v) = take(name, StateKind::Param, p.value.shape()) {
                p.value = v;
            }
        });
        layer.visit_buffers(&mut |name, b| {
            if let Some(v) = take(name, StateKind::Buffer, b.shape()) {
                *b = v;
            }
        });
    }
    if let Some(e) = err {
        return Err(e);
    }
    if idx != state.len() {
        return Err(NnError::StateMismatch(format!(
            "checkpoint holds {} arrays, model consumed {idx}",
            state.len()
        )));
    }
    Ok(())
}

/// Writes a checkpoint atomically (temp file + rename).
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    header: &CheckpointHeader,
    layer: &mut dyn Layer,
) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    {
        let file = File::create(&tmp).map_err(|e| NnError::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| NnError::io(&tmp, e);
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
        let header_json = serde_json::to_vec(header)?;
        w.write_all(&(header_json.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&header_json).map_err(io)?;

        let state = collect_state(layer);
        w.write_all(&(state.len() as u32).to_le_bytes()).map_err(io)?;
        for (name, kind, value) in &state {
            let name_bytes = name.as_bytes();
            w.write_all(&(name_bytes.len() as u16).to_le_bytes()).map_err(io)?;
            w.write_all(name_bytes).map_err(io)?;
            w.write_all(&[match kind {
                StateKind::Param => 0u8,
                StateKind::Buffer => 1u8,
            }])
            .map_err(io)?;
            let shape = value.shape();
            w.write_all(&[shape.len() as u8]).map_err(io)?;
            for &d in shape {
                w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
            }
            for &v in value.iter() {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(|e| NnError::io(path, e))?;
    Ok(())
}

fn read_exact_buf<R: Read>(r: &mut R, n: usize, path: &Path) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(|e| NnError::io(path, e))?;
    Ok(buf)
}

/// Reads a checkpoint back. The caller matches `header.arch` before applying
/// the state to a model.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(CheckpointHeader, StateDict)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| NnError::io(path, e))?;
    let mut r = BufReader::new(file);

    let magic = read_exact_buf(&mut r, 8, path)?;
    if magic != MAGIC {
        return Err(NnError::BadMagic);
    }
    let ver = u32::from_le_bytes(read_exact_buf(&mut r, 4, path)?.try_into().unwrap());
    if ver != CHECKPOINT_VERSION {
        return Err(NnError::VersionMismatch { found: ver, expected: CHECKPOINT_VERSION });
    }
    let header_len =
        u64::from_le_bytes(read_exact_buf(&mut r, 8, path)?.try_into().unwrap()) as usize;
    if header_len > 1 << 24 {
        return Err(NnError::Format(format!("implausible header length {header_len}")));
    }
    let header: CheckpointHeader = serde_json::from_slice(&read_exact_buf(&mut r, header_len, path)?)?;

    let count = u32::from_le_bytes(read_exact_buf(&mut r, 4, path)?.try_into().unwrap());
    let mut state = StateDict::new();
    for _ in 0..count {
        let name_len =
            u16::from_le_bytes(read_exact_buf(&mut r, 2, path)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(read_exact_buf(&mut r, name_len, path)?)
            .map_err(|e| NnError::Format(format!("array name not UTF-8: {e}")))?;
        let kind = match read_exact_buf(&mut r, 1, path)?[0] {
            0 => StateKind::Param,
            1 => StateKind::Buffer,
            k => return Err(NnError::Format(format!("unknown array kind {k}"))),
        };
        let ndim = read_exact_buf(&mut r, 1, path)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        let mut len = 1usize;
        for _ in 0..ndim {
            let d = u64::from_le_bytes(read_exact_buf(&mut r, 8, path)?.try_into().unwrap());
            let d = usize::try_from(d)
                .map_err(|_| NnError::Format(format!("dimension {d} overflows usize")))?;
            len = len
                .checked_mul(d)
                .ok_or_else(|| NnError::Format("array size overflow".into()))?;
            shape.push(d);
        }
        if len > (1usize << 31) {
            return Err(NnError::Format(format!("implausible array length {len}")));
        }
        let raw = read_exact_buf(&mut r, len * 8, path)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let arr = ArrayD::from_shape_vec(shape, data)
            .map_err(|e| NnError::Format(format!("array shape: {e}")))?;
        state.push((name, kind, arr));
    }
    Ok((header, state))
}
