use nalgebra::{DMatrix, DVector};

use super::stats::{frechet_distance, frechet_gradient, GaussianStats, Pca};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::vsa::{correlate, cosine, project, Secret};

/// Eigenvalue floor for the inverse root in the distance gradient.
const GRADIENT_FLOOR: f64 = 1e-12;

/// The adversary's realism score: Fréchet distance between the statistics
/// of candidate images and a reference, both in a PCA subspace.
#[derive(Debug, Clone)]
pub struct RealismScore {
    pub pca: Pca,
    pub reference: GaussianStats,
}

impl RealismScore {
    /// Fits the subspace and reference statistics on the adversary's own
    /// sample of plain images.
    pub fn fit(images: &[Tensor<f64>], p: usize) -> Result<Self> {
        let samples: Vec<DVector<f64>> = images.iter().map(to_vector).collect();
        let pca = Pca::fit(&samples, p)?;
        let reduced: Vec<DVector<f64>> = samples.iter().map(|s| pca.project(s)).collect();
        Ok(Self {
            reference: GaussianStats::from_samples(&reduced)?,
            pca,
        })
    }

    /// Same subspace, reference replaced.
    pub fn with_reference(&self, images: &[Tensor<f64>]) -> Result<Self> {
        let reduced: Vec<DVector<f64>> = images.iter().map(|t| self.pca.project(&to_vector(t))).collect();
        Ok(Self {
            pca: self.pca.clone(),
            reference: GaussianStats::from_samples(&reduced)?,
        })
    }

    pub fn score(&self, images: &[Tensor<f64>]) -> Result<f64> {
        let reduced: Vec<DVector<f64>> = images.iter().map(|t| self.pca.project(&to_vector(t))).collect();
        frechet_distance(&GaussianStats::from_samples(&reduced)?, &self.reference)
    }

    /// Score and its gradient with respect to each image.
    pub fn score_and_gradient(&self, images: &[Tensor<f64>]) -> Result<(f64, Vec<Tensor<f64>>)> {
        let b = images.len();
        let reduced: Vec<DVector<f64>> = images.iter().map(|t| self.pca.project(&to_vector(t))).collect();
        let stats = GaussianStats::from_samples(&reduced)?;
        let score = frechet_distance(&stats, &self.reference)?;
        let (g_mean, g_cov) = frechet_gradient(&stats, &self.reference, GRADIENT_FLOOR)?;
        let w: &DMatrix<f64> = &self.pca.components;
        let grads = images
            .iter()
            .zip(&reduced)
            .map(|(t, z)| {
                let gz = &g_mean / b as f64 + &g_cov * (z - &stats.mean) * (2.0 / (b as f64 - 1.0));
                let gx = w.transpose() * gz;
                Tensor::new(t.dims().to_vec(), gx.as_slice().to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((score, grads))
    }
}

fn to_vector(t: &Tensor<f64>) -> DVector<f64> {
    DVector::from_column_slice(t.data())
}

/// Result of [`inversion_attack`].
#[derive(Debug, Clone)]
pub struct Inversion {
    pub candidate: Secret<f64>,
    /// Score before the first step and after every step.
    pub trajectory: Vec<f64>,
    /// Mean cosine between each true image and its reconstruction, when
    /// ground truth was supplied.
    pub recovery_cosine: Option<f64>,
}

/// Candidate unbinding of every observation with one secret.
pub fn unbind_all(bound: &[Tensor<f64>], s: &Tensor<f64>) -> Result<Vec<Tensor<f64>>> {
    bound.iter().map(|x| correlate(x, s)).collect()
}

/// Gradient of the realism score with respect to the secret candidate.
/// Unbinding by correlation is linear in the secret, and its adjoint maps
/// an image gradient `g` to `correlate(bound, g)`.
pub fn secret_gradient(
    score: &RealismScore,
    bound: &[Tensor<f64>],
    s: &Tensor<f64>,
) -> Result<(f64, Tensor<f64>)> {
    let images = unbind_all(bound, s)?;
    let (value, grads) = score.score_and_gradient(&images)?;
    let mut total = Tensor::zeros(s.dims());
    for (x, g) in bound.iter().zip(&grads) {
        total.add_assign(&correlate(x, g)?)?;
    }
    Ok((value, total))
}

/// Projected gradient descent on one secret candidate shared by all
/// observations in `bound`. Each step moves `lr` along the normalized
/// negative gradient and re-projects to unit spectral magnitude.
pub fn inversion_attack(
    bound: &[Tensor<f64>],
    score: &RealismScore,
    init: &Secret<f64>,
    steps: usize,
    lr: f64,
    truth: Option<&[Tensor<f64>]>,
) -> Result<Inversion> {
    if bound.len() < 2 {
        return Err(Error::param("need at least two bound observations"));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::param("step size must be positive"));
    }
    let mut s = init.tensor().clone();
    let mut trajectory = Vec::with_capacity(steps + 1);
    for step in 0..steps {
        let (value, grad) = secret_gradient(score, bound, &s)?;
        trajectory.push(value);
        let norm = grad.norm();
        if !norm.is_finite() {
            return Err(Error::AttackAborted {
                step,
                message: "non-finite gradient".into(),
            });
        }
        if norm == 0.0 {
            continue;
        }
        let moved = s.sub(&grad.scale(lr / norm))?;
        s = project(&moved).map_err(|e| Error::AttackAborted {
            step,
            message: e.to_string(),
        })?;
    }
    trajectory.push(score.score(&unbind_all(bound, &s)?)?);
    let recovery_cosine = match truth {
        Some(truth) => {
            if truth.len() != bound.len() {
                return Err(Error::param("ground truth and observations differ in count"));
            }
            let recon = unbind_all(bound, &s)?;
            let mut total = 0.0;
            for (x, r) in truth.iter().zip(&recon) {
                total += cosine(x, r)?;
            }
            Some(total / truth.len() as f64)
        }
        None => None,
    };
    let candidate = if steps == 0 {
        init.clone()
    } else {
        Secret::projected_from(&s, init.seed())?
    };
    Ok(Inversion {
        candidate,
        trajectory,
        recovery_cosine,
    })
}
