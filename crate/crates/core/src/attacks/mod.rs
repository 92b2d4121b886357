//! What an adversary holding only worker-side data can try: clustering the
//! outputs, training its own classifier on them, searching for the secret
//! by gradient descent, and regressing secrets from bound tensors.

mod cluster;
mod invert;
mod regress;
mod stats;

pub use cluster::{ari, kmeans, KMeans};
pub use invert::{inversion_attack, secret_gradient, unbind_all, Inversion, RealismScore};
pub use regress::{secret_regression_attack, Regression};
pub use stats::{frechet_distance, frechet_gradient, sqrtm_psd, GaussianStats, Pca, PSD_TOLERANCE};

use crate::error::Result;
use crate::rng::RngStream;
use crate::tensor::Tensor;
use crate::trainer::{argmax, fit_head, SynthDataset, TrainConfig};
use crate::vsa::{bind, sample_secret};

pub const KMEANS_MAX_ITER: usize = 100;
pub const KMEANS_TOL: f64 = 1e-6;
/// PCA dimension of the realism score.
pub const REALISM_DIMS: usize = 32;
/// Bound test images the inversion adversary works on at once.
pub const INVERSION_BATCH: usize = 64;
pub const INVERSION_STEPS: usize = 500;
pub const INVERSION_LR: f64 = 0.05;
pub const REGRESSION_TRAIN: usize = 1024;
pub const REGRESSION_HELD_OUT: usize = 256;

/// Whether a low or a high score means the attack succeeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// The defence holds while the score stays at or below the threshold.
    AtMost,
    /// The check passes when the score reaches the threshold.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub attack: String,
    pub score: f64,
    /// What the score measures (`ari`, `accuracy`, `cosine`, ...).
    pub metric: String,
    pub parameters: Vec<(String, String)>,
    pub seed: u64,
    pub threshold: f64,
    pub direction: Direction,
}

impl AttackReport {
    pub fn passed(&self) -> bool {
        match self.direction {
            Direction::AtMost => self.score <= self.threshold,
            Direction::AtLeast => self.score >= self.threshold,
        }
    }

    pub fn with_threshold(mut self, threshold: f64, direction: Direction) -> Self {
        self.threshold = threshold;
        self.direction = direction;
        self
    }

    pub fn csv_header() -> &'static str {
        "attack,metric,score,threshold,direction,verdict,seed,parameters"
    }

    pub fn csv_row(&self) -> String {
        let params: Vec<String> = self.parameters.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!(
            "{},{},{:.6},{},{},{},{},{}",
            self.attack,
            self.metric,
            self.score,
            self.threshold,
            match self.direction {
                Direction::AtMost => "at_most",
                Direction::AtLeast => "at_least",
            },
            if self.passed() { "pass" } else { "fail" },
            self.seed,
            params.join(";")
        )
    }

    pub fn csv(&self) -> String {
        format!("{}\n{}\n", Self::csv_header(), self.csv_row())
    }
}

fn report(attack: &str, metric: &str, score: f64, seed: u64, parameters: Vec<(&str, String)>) -> AttackReport {
    AttackReport {
        attack: attack.into(),
        metric: metric.into(),
        score,
        parameters: parameters.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        seed,
        threshold: f64::NAN,
        direction: Direction::AtMost,
    }
}

/// k-means on flattened outputs, scored by ARI against the true labels.
pub fn clustering_attack(
    outputs: &[Tensor<f64>],
    labels: &[usize],
    k: usize,
    seed: u64,
) -> Result<AttackReport> {
    let points: Vec<Vec<f64>> = outputs.iter().map(|t| t.data().to_vec()).collect();
    let km = kmeans(&points, k, &RngStream::new(seed), KMEANS_MAX_ITER, KMEANS_TOL)?;
    let score = ari(&km.labels, labels)?;
    Ok(report(
        "cluster",
        "ari",
        score,
        seed,
        vec![
            ("k", k.to_string()),
            ("points", points.len().to_string()),
            ("iterations", km.iterations.to_string()),
        ],
    ))
}

/// Trains a fresh classifier on `(output, label)` pairs and reports its
/// accuracy on held-out pairs.
pub fn strong_adversary(
    train: (&[Tensor<f64>], &[usize]),
    test: (&[Tensor<f64>], &[usize]),
    classes: usize,
    cfg: &TrainConfig,
) -> Result<AttackReport> {
    let feats = |ts: &[Tensor<f64>]| -> Vec<Vec<f64>> { ts.iter().map(|t| t.data().to_vec()).collect() };
    let head = fit_head(&feats(train.0), train.1, classes, cfg)?;
    let hits = test
        .0
        .iter()
        .zip(test.1)
        .filter(|(t, &y)| argmax(&head.logits(t.data())) == y)
        .count();
    let score = hits as f64 / test.1.len().max(1) as f64;
    Ok(report(
        "strong",
        "accuracy",
        score,
        cfg.seed,
        vec![
            ("train", train.1.len().to_string()),
            ("test", test.1.len().to_string()),
            ("epochs", cfg.epochs.to_string()),
        ],
    ))
}

/// Wraps an inversion outcome; the score is the recovery cosine when known,
/// otherwise the final realism score.
pub fn inversion_report(inv: &Inversion, seed: u64, steps: usize, lr: f64) -> AttackReport {
    let last = *inv.trajectory.last().unwrap_or(&f64::NAN);
    let (metric, score) = match inv.recovery_cosine {
        Some(c) => ("recovery_cosine", c),
        None => ("frechet", last),
    };
    report(
        "invert",
        metric,
        score,
        seed,
        vec![
            ("steps", steps.to_string()),
            ("lr", lr.to_string()),
            ("final_frechet", format!("{last:.6}")),
        ],
    )
}

pub fn regression_report(r: &Regression, seed: u64, train: usize, held_out: usize) -> AttackReport {
    report(
        "regress",
        "cosine",
        r.cosine,
        seed,
        vec![
            ("residual", format!("{:.6}", r.residual)),
            ("rank", r.rank.to_string()),
            ("rank_deficient", r.rank_deficient.to_string()),
            ("train", train.to_string()),
            ("held_out", held_out.to_string()),
        ],
    )
}

/// Inversion against genuine traffic: the first [`INVERSION_BATCH`] test
/// images, each bound with its own secret, attacked from a random candidate
/// with a realism score fitted on the training images.
pub fn genuine_inversion(data: &SynthDataset, seed: u64, steps: usize, lr: f64) -> Result<Inversion> {
    let dims = data.dims();
    let score = RealismScore::fit(&data.train.images, REALISM_DIMS)?;
    let root = RngStream::new(seed);
    let truth = &data.test.images[..INVERSION_BATCH.min(data.test.len())];
    let bound = truth
        .iter()
        .enumerate()
        .map(|(i, x)| bind(x, &sample_secret::<f64>(&dims, &root.derive(&[1, i as u64]))?.0))
        .collect::<Result<Vec<_>>>()?;
    let (init, _) = sample_secret::<f64>(&dims, &root.derive(&[2]))?;
    inversion_attack(&bound, &score, &init, steps, lr, Some(truth))
}

/// Regression against genuine traffic: `(bind(x, s), s)` pairs with fresh
/// secrets over training images, scored on pairs over test images.
pub fn genuine_regression(data: &SynthDataset, seed: u64, n_train: usize, n_held: usize) -> Result<Regression> {
    let dims = data.dims();
    let root = RngStream::new(seed);
    let pair = |images: &[Tensor<f64>], i: usize, tag: u64| -> Result<(Tensor<f64>, Tensor<f64>)> {
        let x = &images[i % images.len()];
        let (s, _) = sample_secret::<f64>(&dims, &root.derive(&[tag, i as u64]))?;
        Ok((bind(x, &s)?, s.into_tensor()))
    };
    let train = (0..n_train)
        .map(|i| pair(&data.train.images, i, 1))
        .collect::<Result<Vec<_>>>()?;
    let held = (0..n_held)
        .map(|i| pair(&data.test.images, i, 2))
        .collect::<Result<Vec<_>>>()?;
    secret_regression_attack(&train, &held)
}
