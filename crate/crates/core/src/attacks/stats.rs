use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues above this magnitude below zero are rejected as non-PSD.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Mean and covariance of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let p = mean.len();
        if cov.nrows() != p || cov.ncols() != p {
            return Err(Error::param(format!(
                "covariance is {}x{}, mean has {p} entries",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let asym = (&cov - cov.transpose()).abs().max();
        if asym > PSD_TOLERANCE * (1.0 + cov.abs().max()) {
            return Err(Error::param(format!("covariance is not symmetric ({asym:e})")));
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        let min = SymmetricEigen::new(cov.clone()).eigenvalues.min();
        if p > 0 && min < -PSD_TOLERANCE {
            return Err(Error::param(format!("covariance has eigenvalue {min:e}")));
        }
        Ok(Self { mean, cov })
    }

    /// Sample mean and unbiased covariance of equally long vectors.
    pub fn from_samples(samples: &[DVector<f64>]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::param("need at least two samples"));
        }
        let p = samples[0].len();
        if samples.iter().any(|s| s.len() != p) {
            return Err(Error::param("samples differ in length"));
        }
        let n = samples.len() as f64;
        let mean = samples.iter().fold(DVector::zeros(p), |acc, s| acc + s) / n;
        let mut cov = DMatrix::zeros(p, p);
        for s in samples {
            let c = s - &mean;
            cov.ger(1.0 / (n - 1.0), &c, &c, 1.0);
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `f(A)` for symmetric `A` via its eigendecomposition, with negative
/// eigenvalues clamped to zero first.
fn spectral_map(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|v| f(v.max(0.0)));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

pub fn sqrtm_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(a, f64::sqrt)
}

/// `||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)`.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::param(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let root_a = sqrtm_psd(&a.cov);
    let inner = &root_a * &b.cov * &root_a;
    let cross = sqrtm_psd(&inner).trace();
    let mean_term = (&a.mean - &b.mean).norm_squared();
    let d = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}

/// Gradients of `frechet_distance(a, b)` with respect to `a.mean` and
/// `a.cov`. The covariance gradient is
/// `I - S_b^1/2 (S_b^1/2 S_a S_b^1/2)^-1/2 S_b^1/2`; eigenvalues of the
/// inner matrix are floored at `floor` before the inverse root.
pub fn frechet_gradient(
    a: &GaussianStats,
    b: &GaussianStats,
    floor: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if a.dim() != b.dim() {
        return Err(Error::param("dimension mismatch"));
    }
    let p = a.dim();
    let root_b = sqrtm_psd(&b.cov);
    let m = &root_b * &a.cov * &root_b;
    let inv_root = spectral_map(&m, |v| 1.0 / v.max(floor).sqrt());
    let g_cov = DMatrix::identity(p, p) - &root_b * inv_root * &root_b;
    let g_mean = (&a.mean - &b.mean) * 2.0;
    Ok((g_mean, (&g_cov + g_cov.transpose()) * 0.5))
}

/// Principal axes of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub center: DVector<f64>,
    /// `p x d`, rows are unit principal directions, largest variance first.
    pub components: DMatrix<f64>,
}

impl Pca {
    pub fn fit(samples: &[DVector<f64>], p: usize) -> Result<Self> {
        let stats = GaussianStats::from_samples(samples)?;
        let d = stats.dim();
        if p == 0 || p > d {
            return Err(Error::param(format!("cannot keep {p} of {d} components")));
        }
        let eig = SymmetricEigen::new(stats.cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let mut components = DMatrix::zeros(p, d);
        for (row, &i) in order.iter().take(p).enumerate() {
            let mut v = eig.eigenvectors.column(i).into_owned();
            // Fix the sign so the largest-magnitude entry is positive.
            let imax = v.iamax();
            if v[imax] < 0.0 {
                v = -v;
            }
            components.set_row(row, &v.transpose());
        }
        Ok(Self {
            center: stats.mean,
            components,
        })
    }

    pub fn dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.components * (x - &self.center)
    }
}
