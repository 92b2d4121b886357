//! Discrete Fourier transforms over tensors.
//!
//! The forward transform is unnormalized and the inverse carries the `1/n`
//! factor. Vectors use a 1D transform, matrices a 2D transform, and
//! channel-last `H x W x D` tensors an independent 2D transform per channel.
//! Arbitrary extents are supported (mixed radix with Bluestein fallback).

use num_complex::Complex;
use rustfft::FftDirection;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T: Scalar = f64> {
    dims: Vec<usize>,
    values: Vec<Complex<T>>,
}

impl<T: Scalar> Spectrum<T> {
    pub fn new(dims: Vec<usize>, values: Vec<Complex<T>>) -> Result<Self> {
        crate::tensor::check_dims(&dims)?;
        if dims.len() > 3 {
            return Err(Error::shape(format!("spectra support up to 3 dims, got {dims:?}")));
        }
        let n: usize = dims.iter().product();
        if n != values.len() {
            return Err(Error::shape(format!(
                "dims {:?} need {} coefficients, got {}",
                dims,
                n,
                values.len()
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.values
    }

    /// Number of independent channels (the trailing extent of a 3D spectrum).
    pub fn channels(&self) -> usize {
        layout(&self.dims).2
    }

    /// Pointwise product with another spectrum of identical dims.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "spectrum dims {:?} and {:?} differ",
                self.dims, other.dims
            )));
        }
        Ok(Self {
            dims: self.dims.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn(Complex<T>) -> Complex<T>) -> Self {
        Self {
            dims: self.dims.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }
}

/// `(rows, cols, channels)` view of a 1D, 2D or 3D extent list.
fn layout(dims: &[usize]) -> (usize, usize, usize) {
    match *dims {
        [n] => (1, n, 1),
        [h, w] => (h, w, 1),
        [h, w, d] => (h, w, d),
        _ => unreachable!("dims validated to 1..=3 axes"),
    }
}

fn transform_planes<T: Scalar>(
    buf: &mut [Complex<T>],
    (h, w, d): (usize, usize, usize),
    direction: FftDirection,
) {
    let row_fft = T::fft_plan(w, direction);
    let col_fft = (h > 1).then(|| T::fft_plan(h, direction));
    let mut plane = vec![Complex::new(T::zero(), T::zero()); h * w];
    let mut transposed = plane.clone();
    for c in 0..d {
        for p in 0..h * w {
            plane[p] = buf[p * d + c];
        }
        row_fft.process(&mut plane);
        if let Some(col_fft) = &col_fft {
            for i in 0..h {
                for j in 0..w {
                    transposed[j * h + i] = plane[i * w + j];
                }
            }
            col_fft.process(&mut transposed);
            for i in 0..h {
                for j in 0..w {
                    plane[i * w + j] = transposed[j * h + i];
                }
            }
        }
        for p in 0..h * w {
            buf[p * d + c] = plane[p];
        }
    }
}

/// Forward transform of a 1D, 2D or channel-last 3D tensor.
pub fn transform<T: Scalar>(t: &Tensor<T>) -> Result<Spectrum<T>> {
    if t.ndim() > 3 {
        return Err(Error::shape(format!(
            "transform supports up to 3 dims, got {:?}",
            t.dims()
        )));
    }
    let mut values: Vec<Complex<T>> = t
        .data()
        .iter()
        .map(|&v| Complex::new(v, T::zero()))
        .collect();
    transform_planes(&mut values, layout(t.dims()), FftDirection::Forward);
    Ok(Spectrum {
        dims: t.dims().to_vec(),
        values,
    })
}

/// Inverse of [`transform`], returning the complex result (scaled by `1/n` per plane).
pub fn inverse_complex<T: Scalar>(s: &Spectrum<T>) -> Vec<Complex<T>> {
    let shape = layout(&s.dims);
    let mut values = s.values.clone();
    transform_planes(&mut values, shape, FftDirection::Inverse);
    let scale = T::one() / T::of((shape.0 * shape.1) as f64);
    for v in &mut values {
        *v = *v * scale;
    }
    values
}

/// Inverse of [`transform`] folded back to a real tensor. Fails when the
/// discarded imaginary residue exceeds the scalar's tolerance relative to
/// the real part.
pub fn inverse_transform<T: Scalar>(s: &Spectrum<T>) -> Result<Tensor<T>> {
    let values = inverse_complex(s);
    let (mut max_re, mut max_im) = (0.0f64, 0.0f64);
    for v in &values {
        max_re = max_re.max(v.re.as_f64().abs());
        max_im = max_im.max(v.im.as_f64().abs());
    }
    if max_im > T::IMAG_TOLERANCE * max_re && max_im > f64::MIN_POSITIVE {
        return Err(Error::ConjugateSymmetry { max_im, max_re });
    }
    Tensor::new(s.dims.clone(), values.into_iter().map(|v| v.re).collect())
}

/// Unnormalized 2D forward transform of an `H x W` tensor.
pub fn fft2<T: Scalar>(t: &Tensor<T>) -> Result<Spectrum<T>> {
    if t.ndim() != 2 {
        return Err(Error::shape(format!("fft2 needs a 2D tensor, got {:?}", t.dims())));
    }
    transform(t)
}

/// 2D inverse transform with the `1/(H*W)` factor.
pub fn ifft2<T: Scalar>(s: &Spectrum<T>) -> Result<Tensor<T>> {
    if s.dims.len() != 2 {
        return Err(Error::shape(format!("ifft2 needs a 2D spectrum, got {:?}", s.dims)));
    }
    inverse_transform(s)
}

/// Unnormalized 1D forward transform of a vector.
pub fn fft1<T: Scalar>(t: &Tensor<T>) -> Result<Spectrum<T>> {
    if t.ndim() != 1 {
        return Err(Error::shape(format!("fft1 needs a vector, got {:?}", t.dims())));
    }
    transform(t)
}

pub fn ifft1<T: Scalar>(s: &Spectrum<T>) -> Result<Tensor<T>> {
    if s.dims.len() != 1 {
        return Err(Error::shape(format!("ifft1 needs a 1D spectrum, got {:?}", s.dims)));
    }
    inverse_transform(s)
}
