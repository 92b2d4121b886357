use crate::backbone::layers::softmax;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;
use crate::vsa::{bind, sample_secret};

use super::dataset::{Split, SynthDataset, IMAGE_SIDE};

/// L2 penalty of the linear classifier, applied to weights but not biases.
pub const LINEAR_L2: f64 = 0.1;
const MAX_ITERS: usize = 20_000;
const GRAD_TOL: f64 = 1e-9;

/// Multinomial logistic regression fitted by full-batch gradient descent on
/// the strongly convex penalized objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSoftmax {
    pub classes: usize,
    pub features: usize,
    /// Row-major `classes x features`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearSoftmax {
    pub fn fit(xs: &[Vec<f64>], labels: &[usize], classes: usize, l2: f64) -> Result<Self> {
        if xs.is_empty() || xs.len() != labels.len() || classes == 0 {
            return Err(Error::param("need matching, non-empty features and labels"));
        }
        if l2 <= 0.0 || !l2.is_finite() {
            return Err(Error::param("L2 penalty must be positive"));
        }
        let f = xs[0].len();
        if xs.iter().any(|x| x.len() != f) || labels.iter().any(|&l| l >= classes) {
            return Err(Error::param("ragged features or label out of range"));
        }
        let n = xs.len() as f64;
        // Softmax curvature is at most 1/2, so this step is below 1/L.
        let step = 1.0 / (0.5 * (top_eigenvalue(xs) + 1.0) + l2);
        let mut model = Self {
            classes,
            features: f,
            weights: vec![0.0; classes * f],
            bias: vec![0.0; classes],
        };
        for _ in 0..MAX_ITERS {
            let mut gw = vec![0.0; classes * f];
            let mut gb = vec![0.0; classes];
            for (x, &y) in xs.iter().zip(labels) {
                let mut p = softmax(&model.logits(x));
                p[y] -= 1.0;
                for (c, pc) in p.iter().enumerate() {
                    gb[c] += pc / n;
                    for (g, xv) in gw[c * f..(c + 1) * f].iter_mut().zip(x) {
                        *g += pc * xv / n;
                    }
                }
            }
            for (g, w) in gw.iter_mut().zip(&model.weights) {
                *g += l2 * w;
            }
            let norm = gw.iter().chain(&gb).map(|v| v * v).sum::<f64>().sqrt();
            for (w, g) in model.weights.iter_mut().zip(&gw) {
                *w -= step * g;
            }
            for (b, g) in model.bias.iter_mut().zip(&gb) {
                *b -= step * g;
            }
            if norm < GRAD_TOL {
                break;
            }
        }
        Ok(model)
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|c| {
                self.weights[c * self.features..(c + 1) * self.features]
                    .iter()
                    .zip(x)
                    .map(|(w, v)| w * v)
                    .sum::<f64>()
                    + self.bias[c]
            })
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        super::argmax(&self.logits(x))
    }

    pub fn accuracy(&self, xs: &[Vec<f64>], labels: &[usize]) -> f64 {
        let hits = xs
            .iter()
            .zip(labels)
            .filter(|(x, &y)| self.predict(x) == y)
            .count();
        hits as f64 / labels.len().max(1) as f64
    }
}

/// Largest eigenvalue of the uncentred second-moment matrix, by power
/// iteration.
fn top_eigenvalue(xs: &[Vec<f64>]) -> f64 {
    let f = xs[0].len();
    let n = xs.len() as f64;
    let mut v = vec![1.0 / (f as f64).sqrt(); f];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut w = vec![0.0; f];
        for x in xs {
            let d: f64 = x.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (wi, xi) in w.iter_mut().zip(x) {
                *wi += d * xi / n;
            }
        }
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = w.into_iter().map(|a| a / norm).collect();
        lambda = norm;
    }
    // Power iteration approaches from below; pad the estimate.
    lambda * 1.05
}

/// Test accuracies of one linear classifier under three input regimes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearDemo {
    /// Every train and test image bound with its own fresh secret.
    pub per_example: f64,
    /// Raw images.
    pub unbound: f64,
    /// All images bound with a single secret.
    pub shared_secret: f64,
}

/// Fits the linear classifier in each regime and scores held-out data. The
/// classifier never sees a secret.
pub fn linear_adversary_demo(data: &SynthDataset, seed: u64) -> Result<LinearDemo> {
    let root = RngStream::new(seed);
    let dims = [IMAGE_SIDE, IMAGE_SIDE, 1];
    let flat = |split: &Split| -> Vec<Vec<f64>> { split.images.iter().map(|t| t.data().to_vec()).collect() };
    let bound_each = |split: &Split, tag: u64| -> Result<Vec<Vec<f64>>> {
        split
            .images
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let (s, _) = sample_secret::<f64>(&dims, &root.derive(&[tag, i as u64]))?;
                Ok(bind(x, &s)?.into_data())
            })
            .collect()
    };
    let (shared, _) = sample_secret::<f64>(&dims, &root.derive(&[3]))?;
    let bound_shared = |split: &Split| -> Result<Vec<Vec<f64>>> {
        split
            .images
            .iter()
            .map(|x: &Tensor<f64>| Ok(bind(x, &shared)?.into_data()))
            .collect()
    };
    let score = |train: Vec<Vec<f64>>, test: Vec<Vec<f64>>| -> Result<f64> {
        let m = LinearSoftmax::fit(&train, &data.train.labels, data.classes, LINEAR_L2)?;
        Ok(m.accuracy(&test, &data.test.labels))
    };
    Ok(LinearDemo {
        per_example: score(bound_each(&data.train, 1)?, bound_each(&data.test, 2)?)?,
        unbound: score(flat(&data.train), flat(&data.test))?,
        shared_secret: score(bound_shared(&data.train)?, bound_shared(&data.test)?)?,
    })
}
