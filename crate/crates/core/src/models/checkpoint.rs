//! Checkpoint container. All integers and floats are little-endian.
//!
//! ```text
//! magic        4 bytes  "TSCK"
//! version      u16      = 1
//! task         u8       0 music, 1 multi_instrument, 2 drum, 3 vocal_pitch,
//!                       4 vocal_seg, 5 chord, 6 beat
//! width, depth, hidden, in_channels, input_bins, pitch_bins, out_channels
//!              7 x u32
//! attention    u8       0 or 1
//! seed         u64
//! epochs       u32
//! n_history    u32, then n_history x f64 (per-epoch mean loss)
//! n_tensors    u32, then per tensor:
//!     name_len u16, name (UTF-8), rank u8, rank x u32 dims, prod(dims) x f64
//! checksum     u64      FNV-1a over every preceding byte
//! ```
use alloc::string::String;
use alloc::vec::Vec;

use super::{build_model, Model, ModelConfig, ModelError, Task, TrainingMeta};
use crate::nn::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TSCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {CHECKPOINT_VERSION})")]
    Version { found: u16 },
    #[error("checkpoint truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

pub fn save_checkpoint(model: &Model) -> Vec<u8> {
    let c = &model.config;
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(c.task.code());
    for v in [c.width, c.depth, c.hidden, c.in_channels, c.input_bins, c.pitch_bins, c.out_channels] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(c.attention as u8);
    out.extend_from_slice(&c.seed.to_le_bytes());
    out.extend_from_slice(&model.meta.epochs.to_le_bytes());
    out.extend_from_slice(&(model.meta.loss_history.len() as u32).to_le_bytes());
    for v in &model.meta.loss_history {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for (name, t) in model.params.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated { offset: self.bytes.len() })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses a checkpoint; nothing is returned unless every check passes.
pub fn load_checkpoint(bytes: &[u8]) -> Result<Model, CheckpointError> {
    if bytes.len() < 6 {
        return Err(CheckpointError::Truncated { offset: bytes.len() });
    }
    if bytes[..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version { found: version });
    }
    if bytes.len() < 14 {
        return Err(CheckpointError::Truncated { offset: bytes.len() });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if fnv1a(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
        return Err(CheckpointError::Checksum);
    }
    let mut r = Reader { bytes: body, pos: 6 };
    let code = r.u8()?;
    let task = Task::from_code(code).ok_or_else(|| CheckpointError::Corrupt(alloc::format!("task code {code}")))?;
    let mut dims = [0usize; 7];
    for d in dims.iter_mut() {
        *d = r.u32()? as usize;
    }
    let attention = r.u8()? != 0;
    let seed = r.u64()?;
    let config = ModelConfig {
        task,
        width: dims[0],
        depth: dims[1],
        hidden: dims[2],
        in_channels: dims[3],
        input_bins: dims[4],
        pitch_bins: dims[5],
        out_channels: dims[6],
        attention,
        seed,
    };
    let epochs = r.u32()?;
    let n_hist = r.u32()? as usize;
    let mut loss_history = Vec::with_capacity(n_hist.min(body.len() / 8));
    for _ in 0..n_hist {
        loss_history.push(r.f64()?);
    }
    let mut model = build_model(config)?;
    let n_tensors = r.u32()? as usize;
    if n_tensors != model.params.len() {
        return Err(CheckpointError::Corrupt(alloc::format!(
            "{n_tensors} tensors, config implies {}",
            model.params.len()
        )));
    }
    let expected: Vec<(String, Vec<usize>)> = model.params.iter().map(|(n, t)| (String::from(n), t.shape.clone())).collect();
    for ((name, shape), slot) in expected.iter().zip(model.params.tensors_mut()) {
        let len = r.u16()? as usize;
        let got = core::str::from_utf8(r.take(len)?).map_err(|_| CheckpointError::Corrupt(String::from("tensor name is not UTF-8")))?;
        if got != name {
            return Err(CheckpointError::Corrupt(alloc::format!("expected tensor {name}, found {got}")));
        }
        let rank = r.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        if &dims != shape {
            return Err(CheckpointError::Corrupt(alloc::format!("tensor {name} has shape {dims:?}, expected {shape:?}")));
        }
        let mut data = Vec::with_capacity(slot.len());
        for _ in 0..slot.len() {
            data.push(r.f64()?);
        }
        *slot = Tensor::new(dims, data);
    }
    if r.pos != body.len() {
        return Err(CheckpointError::Corrupt(alloc::format!("{} trailing bytes", body.len() - r.pos)));
    }
    model.meta = TrainingMeta { epochs, loss_history };
    Ok(model)
}
