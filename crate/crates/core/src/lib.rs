//! Holographic binding toolkit: 2D HRR secrets, a one-round split-inference
//! protocol, a toy adversarially regularized trainer and the attacks used to
//! audit the obfuscation.

pub mod alt;
pub mod attacks;
pub mod backbone;
pub mod container;
pub mod error;
pub mod fft;
pub mod images;
pub mod protocol;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod trainer;
pub mod vsa;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use scalar::{DType, Scalar};

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Spectrum64 = fft::Spectrum<f64>;
pub type Secret32 = vsa::Secret<f32>;
pub type Secret64 = vsa::Secret<f64>;
