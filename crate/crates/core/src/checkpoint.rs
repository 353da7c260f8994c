//! Binary weight checkpoints: little-endian, self-describing enough to
//! be reloaded against a recompiled plan.
//!
//! Layout:
//!   magic  b"EVOW"
//!   u32    format version (1)
//!   u32    number of parameter tensors
//!   per tensor: u32 n, u32 c, u32 h, u32 w, then n*c*h*w f32 values
//!   u32    number of running-stat entries
//!   per entry: u32 channels, channels f32 means, channels f32 vars
//!
//! All multi-byte values are little-endian.

use crate::compiler::ModelState;
use crate::tensor::norm::RunningStats;
use crate::tensor::{Shape, TensorData};
use std::io::{self, Read, Write};

const MAGIC: &[u8; 4] = b"EVOW";
const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn encode(state: &ModelState<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, state.params.len() as u32);
    for p in &state.params {
        for d in [p.shape.n, p.shape.c, p.shape.h, p.shape.w] {
            put_u32(&mut out, d as u32);
        }
        for &x in &p.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    put_u32(&mut out, state.running.len() as u32);
    for rs in &state.running {
        put_u32(&mut out, rs.mean.len() as u32);
        for &x in &rs.mean {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for &x in &rs.var {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a weight checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32_vec<R: Read>(r: &mut R, len: usize) -> Result<Vec<f32>, CheckpointError> {
    let mut raw = vec![0u8; len * 4];
    r.read_exact(&mut raw)?;
    Ok(raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn decode<R: Read>(mut r: R) -> Result<ModelState<f32>, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let nparams = read_u32(&mut r)? as usize;
    let mut params = Vec::with_capacity(nparams);
    for _ in 0..nparams {
        let n = read_u32(&mut r)? as usize;
        let c = read_u32(&mut r)? as usize;
        let h = read_u32(&mut r)? as usize;
        let w = read_u32(&mut r)? as usize;
        let shape = Shape { n, c, h, w };
        let data = read_f32_vec(&mut r, n * c * h * w)?;
        params.push(TensorData { shape, data });
    }
    let nstats = read_u32(&mut r)? as usize;
    let mut running = Vec::with_capacity(nstats);
    for _ in 0..nstats {
        let channels = read_u32(&mut r)? as usize;
        let mean = read_f32_vec(&mut r, channels)?;
        let var = read_f32_vec(&mut r, channels)?;
        running.push(RunningStats { mean, var });
    }
    Ok(ModelState { params, running })
}

pub fn save(state: &ModelState<f32>, path: &std::path::Path) -> Result<(), CheckpointError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(state))?;
    Ok(())
}

pub fn load(path: &std::path::Path) -> Result<ModelState<f32>, CheckpointError> {
    decode(std::fs::File::open(path)?)
}
