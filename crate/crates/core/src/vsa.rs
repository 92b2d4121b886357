//! Holographic reduced representation binding in 1D and 2D.
//!
//! Binding is circular convolution computed in the frequency domain. Vectors
//! bind with a 1D transform, `H x W` tensors with a 2D transform, and
//! `H x W x D` tensors channel by channel (each channel with its own slice of
//! an equally shaped secret). Projection rescales every Fourier coefficient to
//! unit magnitude, which turns binding into an orthogonal map whose inverse is
//! the complex conjugate spectrum.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft::{inverse_transform, transform, Spectrum};
use crate::rng::{gaussian_tensor, RngStream};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Coefficients with magnitude below this are treated as zero.
pub const PROJECTION_EPSILON: f64 = 1e-12;

/// Tolerance for deciding a loaded tensor already has a unit-magnitude spectrum.
pub const UNIT_MAGNITUDE_TOLERANCE: f64 = 1e-9;

const SAMPLE_RETRIES: usize = 3;

/// Client-held key: a random tensor plus the seed of the stream that drew it.
#[derive(Debug, Clone, PartialEq)]
pub struct Secret<T: Scalar = f64> {
    tensor: Tensor<T>,
    seed: u64,
    projected: bool,
}

impl<T: Scalar> Secret<T> {
    /// Wraps a raw tensor as an unprojected secret.
    pub fn raw(tensor: Tensor<T>, seed: u64) -> Self {
        Self {
            tensor,
            seed,
            projected: false,
        }
    }

    /// Wraps a tensor, marking it projected when its spectrum is unit-magnitude.
    pub fn from_tensor(tensor: Tensor<T>, seed: u64) -> Result<Self> {
        let projected = has_unit_spectrum(&tensor)?;
        Ok(Self {
            tensor,
            seed,
            projected,
        })
    }

    /// Projects `tensor` and wraps the result.
    pub fn projected_from(tensor: &Tensor<T>, seed: u64) -> Result<Self> {
        Ok(Self {
            tensor: project(tensor)?,
            seed,
            projected: true,
        })
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.tensor
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_projected(&self) -> bool {
        self.projected
    }

    pub fn dims(&self) -> &[usize] {
        self.tensor.dims()
    }

    /// Overwrites the key material with zeros.
    pub fn erase(&mut self) {
        for v in self.tensor.data_mut() {
            *v = T::zero();
        }
        self.projected = false;
    }
}

fn coefficient_position(dims: &[usize], flat: usize) -> (usize, usize) {
    if dims.len() == 3 {
        let d = dims[2];
        (flat % d, flat / d)
    } else {
        (0, flat)
    }
}

fn has_unit_spectrum<T: Scalar>(t: &Tensor<T>) -> Result<bool> {
    let s = transform(t)?;
    Ok(s
        .values()
        .iter()
        .all(|v| (v.norm().as_f64() - 1.0).abs() <= UNIT_MAGNITUDE_TOLERANCE))
}

/// Rescales every coefficient of the (per-channel) spectrum to unit magnitude.
pub fn project<T: Scalar>(v: &Tensor<T>) -> Result<Tensor<T>> {
    let mut s = transform(v)?;
    let dims = s.dims().to_vec();
    for (flat, c) in s.values_mut().iter_mut().enumerate() {
        let m = c.norm();
        if m.as_f64() < PROJECTION_EPSILON {
            let (channel, index) = coefficient_position(&dims, flat);
            return Err(Error::DegenerateSpectrum {
                channel,
                index,
                magnitude: m.as_f64(),
            });
        }
        *c = *c / m;
    }
    inverse_transform(&s)
}

/// Circular convolution of two equally shaped tensors.
pub fn bind_tensors<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    x.require_same_dims(y)?;
    inverse_transform(&transform(x)?.mul(&transform(y)?)?)
}

/// Circular cross-correlation: the spectrum of `a` times the conjugate
/// spectrum of `b`. This is the transpose of binding with `b`, and unbinding
/// when `b` is projected.
pub fn correlate<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.require_same_dims(b)?;
    inverse_transform(&transform(a)?.mul(&transform(b)?.conj())?)
}

pub fn bind<T: Scalar>(x: &Tensor<T>, s: &Secret<T>) -> Result<Tensor<T>> {
    bind_tensors(x, &s.tensor)
}

fn reciprocal_spectrum<T: Scalar>(s: &Secret<T>, clamp: bool) -> Result<Spectrum<T>> {
    let mut spec = transform(&s.tensor)?;
    let dims = spec.dims().to_vec();
    let eps = T::of(PROJECTION_EPSILON);
    for (flat, c) in spec.values_mut().iter_mut().enumerate() {
        let m = c.norm();
        if m < eps {
            if !clamp {
                let (channel, index) = coefficient_position(&dims, flat);
                return Err(Error::NearSingularInverse {
                    channel,
                    index,
                    magnitude: m.as_f64(),
                });
            }
            // Keep the phase, lift the magnitude to the floor.
            *c = if m > T::zero() {
                *c * (eps / m)
            } else {
                Complex::new(eps, T::zero())
            };
        }
        *c = c.inv();
    }
    Ok(spec)
}

/// Secret whose spectrum is the reciprocal of `s`'s spectrum.
pub fn inverse<T: Scalar>(s: &Secret<T>) -> Result<Secret<T>> {
    if s.projected {
        // Reciprocal of a unit-magnitude coefficient is its conjugate.
        let tensor = inverse_transform(&transform(&s.tensor)?.conj())?;
        return Ok(Secret {
            tensor,
            seed: s.seed,
            projected: true,
        });
    }
    let tensor = inverse_transform(&reciprocal_spectrum(s, false)?)?;
    Ok(Secret {
        tensor,
        seed: s.seed,
        projected: false,
    })
}

/// Retrieves the term bound with `s`. Exact for projected secrets.
pub fn unbind<T: Scalar>(b: &Tensor<T>, s: &Secret<T>) -> Result<Tensor<T>> {
    b.require_same_dims(&s.tensor)?;
    if s.projected {
        return correlate(b, &s.tensor);
    }
    inverse_transform(&transform(b)?.mul(&reciprocal_spectrum(s, false)?)?)
}

/// Unbinding with the exact reciprocal, clamping near-zero coefficients to
/// [`PROJECTION_EPSILON`] instead of failing.
pub fn unbind_clamped<T: Scalar>(b: &Tensor<T>, s: &Secret<T>) -> Result<Tensor<T>> {
    b.require_same_dims(&s.tensor)?;
    inverse_transform(&transform(b)?.mul(&reciprocal_spectrum(s, true)?)?)
}

/// Draws a fresh projected secret with `N(0, 1/d)` entries before projection.
/// A degenerate draw is retried on the successor stream.
pub fn sample_secret<T: Scalar>(
    dims: &[usize],
    stream: &RngStream,
) -> Result<(Secret<T>, RngStream)> {
    let d: usize = dims.iter().product();
    let mut cursor = *stream;
    let mut last_err = None;
    for _ in 0..=SAMPLE_RETRIES {
        let (raw, next) = gaussian_tensor::<T>(dims, 1.0 / d as f64, &cursor)?;
        cursor = next;
        match project(&raw) {
            Ok(tensor) => {
                return Ok((
                    Secret {
                        tensor,
                        seed: stream.seed(),
                        projected: true,
                    },
                    cursor,
                ))
            }
            Err(e @ Error::DegenerateSpectrum { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

pub fn cosine<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<T> {
    let dot = a.dot(b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == T::zero() || nb == T::zero() {
        return Err(Error::Degenerate("cosine of a zero-norm tensor".into()));
    }
    Ok((dot / (na * nb)).max(-T::one()).min(T::one()))
}

/// Superposition of bound pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle<T: Scalar = f64> {
    tensor: Tensor<T>,
    term_count: usize,
}

impl<T: Scalar> Bundle<T> {
    pub fn empty(dims: &[usize]) -> Self {
        Self {
            tensor: Tensor::zeros(dims),
            term_count: 0,
        }
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.tensor
    }

    pub fn term_count(&self) -> usize {
        self.term_count
    }
}

pub fn bundle_add<T: Scalar>(mut bundle: Bundle<T>, x: &Tensor<T>, y: &Secret<T>) -> Result<Bundle<T>> {
    bundle.tensor.require_same_dims(x)?;
    bundle.tensor.add_assign(&bind(x, y)?)?;
    bundle.term_count += 1;
    Ok(bundle)
}

/// How strongly `candidate` is present under key `y`: the inner product of
/// the retrieval `unbind(B, y)` with the candidate. Projected inputs have unit
/// norm, so a present term scores near 1 and an absent one near 0.
/// With `use_projection == false` retrieval uses the clamped exact reciprocal.
pub fn presence_probe<T: Scalar>(
    bundle: &Bundle<T>,
    y: &Secret<T>,
    candidate: &Tensor<T>,
    use_projection: bool,
) -> Result<T> {
    let retrieved = if use_projection {
        unbind(&bundle.tensor, y)?
    } else {
        unbind_clamped(&bundle.tensor, y)?
    };
    retrieved.dot(candidate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeMode {
    Projected,
    Naive,
}

impl ProbeMode {
    pub fn name(self) -> &'static str {
        match self {
            ProbeMode::Projected => "projected",
            ProbeMode::Naive => "naive",
        }
    }
}

/// One point of a presence/absence curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub k: usize,
    pub mode: ProbeMode,
    pub present_mean: f64,
    pub absent_mean: f64,
    pub present_std: f64,
    pub absent_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Bundles `k` random pairs of `side x side` tensors per trial and scores one
/// present pair and one fresh absent pair.
pub fn probe_experiment(
    side: usize,
    ks: &[usize],
    modes: &[ProbeMode],
    trials: usize,
    seed: u64,
) -> Result<Vec<ProbeRow>> {
    if side == 0 || trials == 0 {
        return Err(Error::param("probe needs a positive side and trial count"));
    }
    let dims = [side, side];
    let variance = 1.0 / (side * side) as f64;
    let root = RngStream::new(seed);
    let mut rows = Vec::new();
    for &mode in modes {
        for &k in ks {
            if k == 0 {
                return Err(Error::param("term count k must be positive"));
            }
            let mut present = Vec::with_capacity(trials);
            let mut absent = Vec::with_capacity(trials);
            for trial in 0..trials {
                let mut stream = root.derive(&[k as u64, trial as u64]);
                let mut draw = || -> Result<Tensor<f64>> {
                    let (t, next) = gaussian_tensor::<f64>(&dims, variance, &stream)?;
                    stream = next;
                    match mode {
                        ProbeMode::Projected => project(&t),
                        ProbeMode::Naive => Ok(t),
                    }
                };
                let mut bundle = Bundle::empty(&dims);
                let mut first = None;
                for _ in 0..k {
                    let x = draw()?;
                    let y = Secret {
                        tensor: draw()?,
                        seed,
                        projected: mode == ProbeMode::Projected,
                    };
                    bundle = bundle_add(bundle, &x, &y)?;
                    first.get_or_insert((x, y));
                }
                let absent_x = draw()?;
                let absent_y = Secret {
                    tensor: draw()?,
                    seed,
                    projected: mode == ProbeMode::Projected,
                };
                let (x0, y0) = first.expect("k >= 1");
                let projected = mode == ProbeMode::Projected;
                present.push(presence_probe(&bundle, &y0, &x0, projected)?);
                absent.push(presence_probe(&bundle, &absent_y, &absent_x, projected)?);
            }
            let (present_mean, present_std) = mean_std(&present);
            let (absent_mean, absent_std) = mean_std(&absent);
            rows.push(ProbeRow {
                k,
                mode,
                present_mean,
                absent_mean,
                present_std,
                absent_std,
            });
        }
    }
    Ok(rows)
}

pub fn probe_csv(rows: &[ProbeRow]) -> String {
    let mut out = String::from("k,mode,present_mean,absent_mean,present_std,absent_std\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}\n",
            r.k,
            r.mode.name(),
            r.present_mean,
            r.absent_mean,
            r.present_std,
            r.absent_std
        ));
    }
    out
}
