//! Dense row-major tensors. Three-dimensional tensors are laid out channel-last
//! (`H x W x D`), so element `(i, j, c)` lives at `(i * W + j) * D + c`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar = f64> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    /// Builds a tensor, rejecting zero extents, a length mismatch or
    /// non-finite values.
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        check_dims(&dims)?;
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "dims {:?} need {} values, got {}",
                dims,
                expected,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("element {i} is {}", data[i])));
        }
        Ok(Self { dims, data })
    }

    /// Unchecked constructor for internal use where the invariants are known to hold.
    pub(crate) fn from_parts(dims: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { dims, data }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self::from_parts(dims.to_vec(), vec![T::zero(); n])
    }

    pub fn filled(dims: &[usize], value: T) -> Self {
        let n = dims.iter().product();
        Self::from_parts(dims.to_vec(), vec![value; n])
    }

    /// Unit impulse at the origin.
    pub fn impulse(dims: &[usize]) -> Self {
        let mut t = Self::zeros(dims);
        if !t.data.is_empty() {
            t.data[0] = T::one();
        }
        t
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = dims.iter().product();
        Self::from_parts(dims.to_vec(), (0..n).map(&mut f).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, self.data)
    }

    /// Same data viewed as a flat vector.
    pub fn flattened(&self) -> Self {
        Self::from_parts(vec![self.data.len()], self.data.clone())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor::from_parts(
            self.dims.clone(),
            self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        )
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_parts(self.dims.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.require_same_dims(other)?;
        Ok(Self::from_parts(
            self.dims.clone(),
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.require_same_dims(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.require_same_dims(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    pub fn norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.require_same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn require_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "dims {:?} and {:?} differ",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    /// Height, width and channel count of a 2D or channel-last 3D tensor.
    pub fn plane_dims(&self) -> Result<(usize, usize, usize)> {
        match self.dims.as_slice() {
            &[h, w] => Ok((h, w, 1)),
            &[h, w, d] => Ok((h, w, d)),
            other => Err(Error::shape(format!(
                "expected a 2D or 3D tensor, got dims {other:?}"
            ))),
        }
    }

    /// Channel `c` of a 2D or 3D tensor as an `H x W` tensor.
    pub fn channel(&self, c: usize) -> Result<Self> {
        let (h, w, d) = self.plane_dims()?;
        if c >= d {
            return Err(Error::shape(format!("channel {c} out of range for depth {d}")));
        }
        let data = (0..h * w).map(|p| self.data[p * d + c]).collect();
        Ok(Self::from_parts(vec![h, w], data))
    }

    /// Stacks equal `H x W` planes into `H x W x D` (or returns the plane when D = 1
    /// and `keep_2d` is set).
    pub fn from_channels(channels: &[Self], keep_2d: bool) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::shape("no channels to stack"))?;
        let (h, w) = match first.dims.as_slice() {
            &[h, w] => (h, w),
            other => return Err(Error::shape(format!("channel dims {other:?} are not 2D"))),
        };
        for ch in channels {
            first.require_same_dims(ch)?;
        }
        let d = channels.len();
        if d == 1 && keep_2d {
            return Ok(first.clone());
        }
        let mut data = vec![T::zero(); h * w * d];
        for (c, ch) in channels.iter().enumerate() {
            for p in 0..h * w {
                data[p * d + c] = ch.data[p];
            }
        }
        Ok(Self::from_parts(vec![h, w, d], data))
    }
}

pub(crate) fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::shape("tensor needs at least one dimension"));
    }
    if dims.contains(&0) {
        return Err(Error::shape(format!("zero extent in dims {dims:?}")));
    }
    Ok(())
}

/// Parses `HxWxD`, `HxW` or `N`.
pub fn parse_dims(text: &str) -> Result<Vec<usize>> {
    let dims = text
        .split(['x', 'X', ','])
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::param(format!("bad extent {p:?} in {text:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    check_dims(&dims)?;
    Ok(dims)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_mismatch() {
        assert!(matches!(
            Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn rejects_nan() {
        assert!(matches!(
            Tensor::<f64>::new(vec![2], vec![0.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn channels_round_trip() {
        let t = Tensor::<f64>::from_fn(&[3, 4, 2], |i| i as f64);
        let chans: Vec<_> = (0..2).map(|c| t.channel(c).unwrap()).collect();
        assert_eq!(chans[1].data()[0], 1.0);
        assert_eq!(Tensor::from_channels(&chans, false).unwrap(), t);
    }

    #[test]
    fn parses_dims() {
        assert_eq!(parse_dims("16x16x1").unwrap(), vec![16, 16, 1]);
        assert_eq!(parse_dims("1024").unwrap(), vec![1024]);
        assert!(parse_dims("4x0").is_err());
        assert!(parse_dims("4xa").is_err());
    }
}
