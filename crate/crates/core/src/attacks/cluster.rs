use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Outcome of [`kmeans`].
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Inertia after each assignment step.
    pub inertia: Vec<f64>,
    pub iterations: usize,
}

impl KMeans {
    pub fn final_inertia(&self) -> f64 {
        *self.inertia.last().unwrap_or(&0.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(i, c)| (i, sq_dist(p, c)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// k-means++ seeding followed by Lloyd iterations. Stops when no centroid
/// moves by more than `tol` or after `max_iter` iterations. A cluster that
/// loses all its points is re-seeded at the point farthest from its
/// centroid.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    stream: &RngStream,
    max_iter: usize,
    tol: f64,
) -> Result<KMeans> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::param(format!("k = {k} must be in 1..={n}")));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::param("points differ in dimension"));
    }
    let mut rng = stream.generator();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }

    let mut labels = vec![0; n];
    let mut inertia = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut total = 0.0;
        let mut dists = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            labels[i] = c;
            dists[i] = d;
            total += d;
        }
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]));
                if let Some(i) = far {
                    counts[labels[i]] -= 1;
                    counts[c] = 1;
                    total -= dists[i];
                    labels[i] = c;
                    dists[i] = 0.0;
                }
            }
        }
        inertia.push(total);
        let mut next = vec![vec![0.0; dim]; k];
        for (p, &l) in points.iter().zip(&labels) {
            for (a, v) in next[l].iter_mut().zip(p) {
                *a += v;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                next[c] = centroids[c].clone();
                continue;
            }
            for a in next[c].iter_mut() {
                *a /= counts[c] as f64;
            }
            shift = shift.max(sq_dist(&next[c], &centroids[c]).sqrt());
        }
        centroids = next;
        if shift <= tol {
            break;
        }
    }
    Ok(KMeans {
        labels,
        centroids,
        inertia,
        iterations,
    })
}

fn choose2(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index of two labelings of the same items.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::param(format!(
            "labelings have {} and {} items",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0usize; ka * kb];
    for (&i, &j) in a.iter().zip(b) {
        table[i * kb + j] += 1;
    }
    let mut rows = vec![0usize; ka];
    let mut cols = vec![0usize; kb];
    for i in 0..ka {
        for j in 0..kb {
            rows[i] += table[i * kb + j];
            cols[j] += table[i * kb + j];
        }
    }
    let index: f64 = table.iter().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.iter().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.iter().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        // Both labelings are trivial (all one cluster or all singletons).
        return Ok(if index == max { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}
