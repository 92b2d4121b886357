use super::message::request_len;
use crate::backbone::{fft_flops, Backbone, BackboneSpec};
use crate::error::{Error, Result};

/// Work and traffic of querying one input `k` times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlopReport {
    pub k: usize,
    pub remote_flops: u64,
    pub local_flops: u64,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

impl FlopReport {
    /// Share of all compute done by the worker.
    pub fn remote_fraction(&self) -> f64 {
        let total = self.remote_flops + self.local_flops;
        if total == 0 {
            0.0
        } else {
            self.remote_flops as f64 / total as f64
        }
    }

    pub fn csv(&self) -> String {
        format!(
            "k,remote_flops,local_flops,remote_fraction,bytes_up,bytes_down\n{},{},{},{:.6},{},{}\n",
            self.k,
            self.remote_flops,
            self.local_flops,
            self.remote_fraction(),
            self.bytes_up,
            self.bytes_down
        )
    }
}

/// Cost of one bind or unbind on `dims`: forward transforms of both
/// operands, one inverse transform, and a complex product per coefficient.
pub fn binding_flops(dims: &[usize]) -> u64 {
    let (plane, channels) = match dims {
        [h, w] => (h * w, 1),
        [h, w, d] => (h * w, *d),
        other => (other.iter().product(), 1),
    };
    channels as u64 * (3 * fft_flops(plane) + 4 * plane as u64)
}

/// Remote cost is the backbone's forward pass; local cost is one bind, one
/// unbind and `head_flops` per replicate.
pub fn cost_report(spec: &BackboneSpec, dims: &[usize], k: usize, head_flops: u64) -> Result<FlopReport> {
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    let backbone = Backbone::from_spec(spec)?;
    if !backbone.accepts(dims) {
        return Err(Error::shape(format!(
            "spec takes {:?}, asked to cost {dims:?}",
            backbone.input_dims()
        )));
    }
    backbone.require_shape_preserving()?;
    let k64 = k as u64;
    let bytes = k64 * request_len(dims) as u64;
    Ok(FlopReport {
        k,
        remote_flops: k64 * backbone.flops(),
        local_flops: k64 * (2 * binding_flops(dims) + head_flops),
        bytes_up: bytes,
        bytes_down: bytes,
    })
}
