//! `HBTM` model files:
//!
//! ```text
//! "HBTM" | version u16 | classes u32 | epochs u32 | batch u32
//!        | lr, beta1, beta2, eps f64 | decay epoch u32 | decay factor f64
//!        | head weight decay f64 | seed u64 | block count u32 | containers
//! ```
//!
//! All integers and floats little-endian.

use std::path::Path;

use super::adam::AdamConfig;
use super::{toy_conv_shapes, ToyModel, TrainConfig, BLOCKS, HIDDEN};
use crate::container::{decode_tensor, encode_into, StoredTensor};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MODEL_MAGIC: [u8; 4] = *b"HBTM";
pub const MODEL_VERSION: u16 = 1;

fn block_dims(classes: usize) -> Vec<Vec<usize>> {
    let mut dims: Vec<Vec<usize>> = toy_conv_shapes()
        .iter()
        .map(|s| vec![s.kh, s.kw, s.cin, s.cout])
        .collect();
    for _ in 0..2 {
        dims.extend([vec![HIDDEN, 256], vec![HIDDEN], vec![classes, HIDDEN], vec![classes]]);
    }
    dims
}

pub fn encode_model(model: &ToyModel, cfg: &TrainConfig) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.classes() as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.epochs as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.batch_size as u32).to_le_bytes());
    for v in [cfg.adam.lr, cfg.adam.beta1, cfg.adam.beta2, cfg.adam.eps] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(cfg.decay_epoch as u32).to_le_bytes());
    out.extend_from_slice(&cfg.decay_factor.to_le_bytes());
    out.extend_from_slice(&cfg.head_weight_decay.to_le_bytes());
    out.extend_from_slice(&cfg.seed.to_le_bytes());
    out.extend_from_slice(&(BLOCKS as u32).to_le_bytes());
    for (block, dims) in model.blocks().into_iter().zip(block_dims(model.classes())) {
        encode_into(&Tensor::new(dims, block)?, &mut out)?;
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < n {
            return Err(Error::format(self.at, "model header truncated"));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<(ToyModel, TrainConfig)> {
    let mut c = Cursor { bytes, at: 0 };
    if c.take(4)? != MODEL_MAGIC {
        return Err(Error::format(0, "not a model file (bad magic)"));
    }
    let version = u16::from_le_bytes(c.take(2)?.try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(Error::format(4, format!("unsupported model version {version}")));
    }
    let classes = c.u32()?;
    let epochs = c.u32()?;
    let batch_size = c.u32()?;
    let adam = AdamConfig {
        lr: c.f64()?,
        beta1: c.f64()?,
        beta2: c.f64()?,
        eps: c.f64()?,
    };
    let decay_epoch = c.u32()?;
    let decay_factor = c.f64()?;
    let head_weight_decay = c.f64()?;
    let seed = u64::from_le_bytes(c.take(8)?.try_into().unwrap());
    let count = c.u32()?;
    if count != BLOCKS {
        return Err(Error::format(c.at - 4, format!("expected {BLOCKS} blocks, found {count}")));
    }
    let mut blocks = Vec::with_capacity(BLOCKS);
    for dims in block_dims(classes) {
        let start = c.at;
        let (t, used) = decode_tensor(&bytes[start..]).map_err(|e| match e {
            Error::Format { offset, message } => Error::format(start + offset, message),
            other => other,
        })?;
        c.at += used;
        let t = match t {
            StoredTensor::F64(t) => t,
            StoredTensor::F32(_) => return Err(Error::format(start, "model weights must be f64")),
        };
        if t.dims() != dims.as_slice() {
            return Err(Error::format(
                start,
                format!("block has dims {:?}, expected {dims:?}", t.dims()),
            ));
        }
        blocks.push(t.into_data());
    }
    if c.at != bytes.len() {
        return Err(Error::format(c.at, "trailing bytes after model"));
    }
    let cfg = TrainConfig {
        epochs,
        batch_size,
        adam,
        decay_epoch,
        decay_factor,
        head_weight_decay,
        seed,
    };
    Ok((ToyModel::from_blocks(blocks)?, cfg))
}

pub fn write_model(path: impl AsRef<Path>, model: &ToyModel, cfg: &TrainConfig) -> Result<()> {
    std::fs::write(path, encode_model(model, cfg)?)?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<(ToyModel, TrainConfig)> {
    decode_model(&std::fs::read(path)?)
}
