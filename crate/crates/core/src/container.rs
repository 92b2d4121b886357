//! Binary tensor container used for files and wire payloads.
//!
//! ```text
//! "HBT1" | dtype u8 (1 = f32, 2 = f64) | ndim u8 | ndim x u32 LE extents | LE payload
//! ```
//!
//! No padding and no checksum.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;

pub const TENSOR_MAGIC: [u8; 4] = *b"HBT1";

/// A decoded tensor in whatever precision it was stored at.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl StoredTensor {
    pub fn dtype(&self) -> DType {
        match self {
            StoredTensor::F32(_) => DType::F32,
            StoredTensor::F64(_) => DType::F64,
        }
    }

    pub fn dims(&self) -> &[usize] {
        match self {
            StoredTensor::F32(t) => t.dims(),
            StoredTensor::F64(t) => t.dims(),
        }
    }

    /// Widened (or unchanged) 64-bit copy.
    pub fn into_f64(self) -> Tensor<f64> {
        match self {
            StoredTensor::F32(t) => t.cast(),
            StoredTensor::F64(t) => t,
        }
    }
}

impl From<Tensor<f32>> for StoredTensor {
    fn from(t: Tensor<f32>) -> Self {
        StoredTensor::F32(t)
    }
}

impl From<Tensor<f64>> for StoredTensor {
    fn from(t: Tensor<f64>) -> Self {
        StoredTensor::F64(t)
    }
}

/// Encoded size of a tensor with these extents.
pub fn encoded_len(dims: &[usize], dtype: DType) -> usize {
    4 + 1 + 1 + 4 * dims.len() + dims.iter().product::<usize>() * dtype.width()
}

pub fn encode_tensor<T: Scalar>(t: &Tensor<T>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(encoded_len(t.dims(), T::DTYPE));
    encode_into(t, &mut out)?;
    Ok(out)
}

pub fn encode_into<T: Scalar>(t: &Tensor<T>, out: &mut Vec<u8>) -> Result<()> {
    if !t.is_finite() {
        return Err(Error::NonFinite("refusing to encode a non-finite tensor".into()));
    }
    let ndim = u8::try_from(t.ndim())
        .map_err(|_| Error::shape(format!("{} dims exceed the container limit", t.ndim())))?;
    out.extend_from_slice(&TENSOR_MAGIC);
    out.push(T::DTYPE.code());
    out.push(ndim);
    for &d in t.dims() {
        let d = u32::try_from(d).map_err(|_| Error::shape(format!("extent {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(out);
    }
    Ok(())
}

fn decode_payload<T: Scalar>(dims: Vec<usize>, payload: &[u8], offset: usize) -> Result<Tensor<T>> {
    let w = T::DTYPE.width();
    let data: Vec<T> = payload.chunks_exact(w).map(T::read_le).collect();
    Tensor::new(dims, data).map_err(|e| Error::format(offset, e.to_string()))
}

/// Decodes one container from the front of `bytes`, returning it with the
/// number of bytes consumed.
pub fn decode_tensor(bytes: &[u8]) -> Result<(StoredTensor, usize)> {
    if bytes.len() < 6 {
        return Err(Error::format(
            bytes.len(),
            format!("header needs 6 bytes, got {}", bytes.len()),
        ));
    }
    if bytes[..4] != TENSOR_MAGIC {
        return Err(Error::format(0, format!("bad magic {:?}", &bytes[..4])));
    }
    let dtype = DType::from_code(bytes[4])
        .ok_or_else(|| Error::format(4, format!("unknown dtype code {}", bytes[4])))?;
    let ndim = bytes[5] as usize;
    if ndim == 0 {
        return Err(Error::format(5, "ndim must be positive"));
    }
    let header = 6 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::format(
            bytes.len(),
            format!("extents need {} bytes, got {}", header, bytes.len()),
        ));
    }
    let dims: Vec<usize> = bytes[6..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    if let Some(i) = dims.iter().position(|&d| d == 0) {
        return Err(Error::format(6 + 4 * i, "zero extent"));
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(6, "extent product overflows"))?;
    let total = count
        .checked_mul(dtype.width())
        .and_then(|p| p.checked_add(header))
        .ok_or_else(|| Error::format(6, "payload length overflows"))?;
    if bytes.len() < total {
        return Err(Error::format(
            bytes.len(),
            format!(
                "truncated payload: expected {} bytes in total, got {}",
                total,
                bytes.len()
            ),
        ));
    }
    let payload = &bytes[header..total];
    let t = match dtype {
        DType::F32 => StoredTensor::F32(decode_payload(dims, payload, header)?),
        DType::F64 => StoredTensor::F64(decode_payload(dims, payload, header)?),
    };
    Ok((t, total))
}

/// Decodes a buffer that must hold exactly one container.
pub fn decode_exact(bytes: &[u8]) -> Result<StoredTensor> {
    let (t, used) = decode_tensor(bytes)?;
    if used != bytes.len() {
        return Err(Error::format(
            used,
            format!("{} trailing bytes after tensor", bytes.len() - used),
        ));
    }
    Ok(t)
}

pub fn write_tensor<T: Scalar>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    let bytes = encode_tensor(t)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<StoredTensor> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_exact(&bytes)
}
