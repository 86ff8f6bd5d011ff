//! Model checkpoint file.
//!
//! Little-endian layout:
//!
//! ```text
//! b"MTMD" | version u32 | freq_bins u32 | dropout f64 | blocks u32 | tensor_count u32
//! tensor_count x { name_len u32 | name utf-8 | ndims u32 | ndims x u32 }
//! parameter values as f32, tensors in table order (trainable, then batch-norm buffers)
//! adam_present u32
//! [ step u64 | lr f64 | beta1 f64 | beta2 f64 | eps f64 | m as f32 | v as f32 ]   (trainable tensors only)
//! ```

use std::fs;
use std::path::Path;

use super::adam::{AdamConfig, AdamState};
use super::model::{ModelConfig, ModelParams, TensorInfo};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MTMD";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, vals: &[f64]) {
    for &v in vals {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn to_bytes(params: &ModelParams, adam: Option<&AdamState>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, params.config.freq_bins as u32);
    out.extend_from_slice(&params.config.dropout.to_le_bytes());
    put_u32(&mut out, params.config.blocks() as u32);
    let table: Vec<TensorInfo> = params.trainable_info().into_iter().chain(params.buffer_info()).collect();
    put_u32(&mut out, table.len() as u32);
    for t in &table {
        put_u32(&mut out, t.name.len() as u32);
        out.extend_from_slice(t.name.as_bytes());
        put_u32(&mut out, t.dims.len() as u32);
        for &d in &t.dims {
            put_u32(&mut out, d as u32);
        }
    }
    for t in params.trainable().into_iter().chain(params.buffers()) {
        put_f32s(&mut out, t);
    }
    match adam {
        None => put_u32(&mut out, 0),
        Some(a) => {
            put_u32(&mut out, 1);
            out.extend_from_slice(&a.step.to_le_bytes());
            for v in [a.config.lr, a.config.beta1, a.config.beta2, a.config.eps] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for m in &a.m {
                put_f32s(&mut out, m);
            }
            for v in &a.v {
                put_f32s(&mut out, v);
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() < n {
            return Err(bad("unexpected end of file"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()) as f64)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn fill(&mut self, dst: &mut [f64]) -> Result<()> {
        for v in dst {
            *v = self.f32()?;
        }
        Ok(())
    }
}

fn bad(msg: &str) -> Error {
    Error::Parse { line: 0, msg: format!("checkpoint: {msg}") }
}

pub fn from_bytes(bytes: &[u8]) -> Result<(ModelParams, Option<AdamState>)> {
    let mut r = Reader { buf: bytes };
    if r.take(4)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let freq_bins = r.u32()? as usize;
    let dropout = r.f64()?;
    let blocks = r.u32()? as usize;
    if blocks == 0 || freq_bins == 0 {
        return Err(bad("empty model"));
    }
    let mut config = ModelConfig::with_blocks(freq_bins, blocks);
    config.dropout = dropout;
    let mut params = ModelParams::zeros(config);

    let expected: Vec<TensorInfo> = params.trainable_info().into_iter().chain(params.buffer_info()).collect();
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(bad(&format!("{count} tensors, model has {}", expected.len())));
    }
    for want in &expected {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| bad("tensor name is not utf-8"))?;
        let ndims = r.u32()? as usize;
        let dims = (0..ndims).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if name != want.name || dims != want.dims {
            return Err(bad(&format!("tensor `{name}` {dims:?} does not match `{}` {:?}", want.name, want.dims)));
        }
    }
    for t in params.trainable_mut() {
        r.fill(t)?;
    }
    for t in params.buffers_mut() {
        r.fill(t)?;
    }
    let adam = match r.u32()? {
        0 => None,
        1 => {
            let step = r.u64()?;
            let config = AdamConfig { lr: r.f64()?, beta1: r.f64()?, beta2: r.f64()?, eps: r.f64()? };
            let mut state = AdamState::new(&params, config);
            state.step = step;
            for m in &mut state.m {
                r.fill(m)?;
            }
            for v in &mut state.v {
                r.fill(v)?;
            }
            Some(state)
        }
        other => return Err(bad(&format!("bad optimizer flag {other}"))),
    };
    if !r.buf.is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok((params, adam))
}

pub fn save(path: impl AsRef<Path>, params: &ModelParams, adam: Option<&AdamState>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(params, adam)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<(ModelParams, Option<AdamState>)> {
    let path = path.as_ref();
    from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
