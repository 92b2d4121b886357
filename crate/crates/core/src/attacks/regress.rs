use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Relative singular-value cutoff for the least-squares fit.
const RANK_TOLERANCE: f64 = 1e-10;

/// Held-out quality of a linear map from bound tensors to secrets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regression {
    /// Mean of `||s_hat - s|| / ||s||` over held-out pairs.
    pub residual: f64,
    /// Mean of `cosine(s_hat, s)` over held-out pairs.
    pub cosine: f64,
    pub rank: usize,
    pub rank_deficient: bool,
}

fn stack(rows: &[&Tensor<f64>], d: usize) -> Result<DMatrix<f64>> {
    if rows.iter().any(|t| t.len() != d) {
        return Err(Error::param("pairs differ in dimension"));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i].data()[j]))
}

/// Least-squares linear map `bound -> secret` fitted on `train` (minimum
/// norm when the system is rank deficient) and scored on `held_out`.
pub fn secret_regression_attack(
    train: &[(Tensor<f64>, Tensor<f64>)],
    held_out: &[(Tensor<f64>, Tensor<f64>)],
) -> Result<Regression> {
    if held_out.len() < 2 {
        return Err(Error::param("need at least two held-out pairs"));
    }
    let d = train
        .first()
        .map(|(x, _)| x.len())
        .ok_or_else(|| Error::param("no training pairs"))?;
    if train.len() < 2 * d {
        return Err(Error::param(format!(
            "need at least {} training pairs for dimension {d}, got {}",
            2 * d,
            train.len()
        )));
    }
    let xs: Vec<&Tensor<f64>> = train.iter().map(|(x, _)| x).collect();
    let ys: Vec<&Tensor<f64>> = train.iter().map(|(_, s)| s).collect();
    let x = stack(&xs, d)?;
    let y = stack(&ys, d)?;
    let svd = x.svd(true, true);
    let top = svd.singular_values.max();
    let eps = top * RANK_TOLERANCE;
    let rank = svd.singular_values.iter().filter(|&&v| v > eps).count();
    let map = svd
        .solve(&y, eps)
        .map_err(|e| Error::Degenerate(format!("least squares failed: {e}")))?;
    let (mut residual, mut cosine) = (0.0, 0.0);
    for (xb, s) in held_out {
        if xb.len() != d || s.len() != d {
            return Err(Error::param("held-out pair has the wrong dimension"));
        }
        let row = DMatrix::from_row_slice(1, d, xb.data());
        let pred = row * &map;
        let truth = DMatrix::from_row_slice(1, d, s.data());
        let sn = truth.norm();
        residual += (&pred - &truth).norm() / sn;
        let pn = pred.norm();
        cosine += if pn == 0.0 { 0.0 } else { pred.dot(&truth) / (pn * sn) };
    }
    let m = held_out.len() as f64;
    Ok(Regression {
        residual: residual / m,
        cosine: cosine / m,
        rank,
        rank_deficient: rank < d,
    })
}
