//! Seeded, counter-based random streams.
//!
//! A stream is a `(seed, position)` pair over ChaCha20: the seed keys the
//! cipher and the position is the 32-bit word offset into its keystream.
//! Streams are plain values. Drawing from one returns the samples together
//! with the successor stream, so the same stream value always yields the
//! same samples on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{check_dims, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    position: u128,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, position: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn position(&self) -> u128 {
        self.position
    }

    /// Independent child stream keyed by `index`.
    pub fn split(&self, index: u64) -> Self {
        let key = splitmix64(self.seed ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)));
        Self::new(key)
    }

    /// Child stream keyed by a sequence of indices, e.g. `(epoch, example)`.
    pub fn derive(&self, path: &[u64]) -> Self {
        path.iter().fold(*self, |s, &i| s.split(i))
    }

    /// Generator positioned at this stream's offset.
    pub fn generator(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_word_pos(self.position);
        rng
    }

    /// Runs `f` against the generator and returns its result with the successor stream.
    pub fn draw<R>(&self, f: impl FnOnce(&mut ChaCha20Rng) -> R) -> (R, Self) {
        let mut rng = self.generator();
        let out = f(&mut rng);
        let next = Self {
            seed: self.seed,
            position: rng.get_word_pos(),
        };
        (out, next)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws `n` i.i.d. standard normal samples.
pub fn standard_normals(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// I.i.d. `N(0, variance)` tensor plus the successor stream.
pub fn gaussian_tensor<T: Scalar>(
    dims: &[usize],
    variance: f64,
    stream: &RngStream,
) -> Result<(Tensor<T>, RngStream)> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::param(format!("variance must be positive, got {variance}")));
    }
    check_dims(dims)?;
    let n: usize = dims.iter().product();
    let sd = variance.sqrt();
    let (values, next) = stream.draw(|rng| standard_normals(rng, n));
    let data = values.into_iter().map(|v| T::of(v * sd)).collect();
    Ok((Tensor::from_parts(dims.to_vec(), data), next))
}
