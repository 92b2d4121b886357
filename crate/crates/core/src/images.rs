//! Synthetic image generators for probes and calibration harnesses.

use crate::error::Result;
use crate::rng::{gaussian_tensor, RngStream};
use crate::tensor::Tensor;

/// Spatially correlated `H x W x D` image: white noise smoothed by one
/// circular 3x3 box filter, then centered per channel. Stands in for
/// mean-normalized natural images.
pub fn smooth_image(dims: &[usize], stream: &RngStream) -> Result<(Tensor<f64>, RngStream)> {
    let (noise, next) = gaussian_tensor::<f64>(dims, 1.0, stream)?;
    let (h, w, d) = noise.plane_dims()?;
    let src = noise.data();
    let mut out = vec![0.0; h * w * d];
    for i in 0..h {
        for j in 0..w {
            for c in 0..d {
                let mut acc = 0.0;
                for di in [h - 1, 0, 1] {
                    for dj in [w - 1, 0, 1] {
                        let (ii, jj) = ((i + di) % h, (j + dj) % w);
                        acc += src[(ii * w + jj) * d + c];
                    }
                }
                out[(i * w + j) * d + c] = acc / 9.0;
            }
        }
    }
    for c in 0..d {
        let mean = (0..h * w).map(|p| out[p * d + c]).sum::<f64>() / (h * w) as f64;
        for p in 0..h * w {
            out[p * d + c] -= mean;
        }
    }
    Ok((Tensor::from_parts(noise.dims().to_vec(), out), next))
}
