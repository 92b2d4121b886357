//! Scalar abstraction shared by the tensor, transform and binding code.

use std::cell::RefCell;
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::sync::Arc;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rustfft::{Fft, FftDirection, FftNum, FftPlanner};

/// Storage code used by the tensor container.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 1,
    F64 = 2,
}

impl DType {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::F32),
            2 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

/// Floating point element: `f32` or `f64`.
pub trait Scalar:
    Float + FftNum + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    const DTYPE: DType;

    /// Largest tolerated ratio max|im| / max|re| when an inverse transform
    /// is folded back to a real tensor.
    const IMAG_TOLERANCE: f64;

    fn write_le(self, out: &mut Vec<u8>);

    /// `bytes` must hold exactly `DTYPE.width()` bytes.
    fn read_le(bytes: &[u8]) -> Self;

    /// Cached FFT plan for the calling thread.
    fn fft_plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<Self>>;

    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

thread_local! {
    static PLANNER_F32: RefCell<FftPlanner<f32>> = RefCell::new(FftPlanner::new());
    static PLANNER_F64: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

impl Scalar for f32 {
    const DTYPE: DType = DType::F32;
    const IMAG_TOLERANCE: f64 = 1e-3;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }

    fn fft_plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f32>> {
        PLANNER_F32.with(|p| p.borrow_mut().plan_fft(len, direction))
    }
}

impl Scalar for f64 {
    const DTYPE: DType = DType::F64;
    const IMAG_TOLERANCE: f64 = 1e-8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }

    fn fft_plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
        PLANNER_F64.with(|p| p.borrow_mut().plan_fft(len, direction))
    }
}
