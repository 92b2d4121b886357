use std::f64::consts::PI;

use num_complex::Complex;
use rand::seq::SliceRandom;

use crate::fft::{inverse_transform, transform};

use crate::rng::{standard_normals, RngStream};
use crate::tensor::Tensor;

pub const IMAGE_SIDE: usize = 16;
pub const DEFAULT_CLASSES: usize = 4;
pub const DEFAULT_TRAIN: usize = 512;
pub const DEFAULT_TEST: usize = 256;
pub const DEFAULT_NOISE_SD: f64 = 0.3;

/// Labelled images.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub images: Vec<Tensor<f64>>,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// First `n` examples.
    pub fn head(&self, n: usize) -> Split {
        let n = n.min(self.len());
        Split {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }
}

/// Class `c` images are `pattern_c + noise` with i.i.d. Gaussian pixel noise.
/// The patterns are circular shifts of one smooth random base pattern with
/// their common mean removed. When the shifts tile a full grid the patterns
/// form a regular simplex and share a single magnitude spectrum, differing
/// only in phase.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub seed: u64,
    pub classes: usize,
    pub noise_sd: f64,
    pub patterns: Vec<Tensor<f64>>,
    pub train: Split,
    pub test: Split,
}

impl SynthDataset {
    pub fn dims(&self) -> [usize; 3] {
        [IMAGE_SIDE, IMAGE_SIDE, 1]
    }
}

/// Gain of a 3-tap circular box filter at frequency index `k`.
fn box_gain(k: usize) -> f64 {
    (1.0 + 2.0 * (2.0 * PI * k as f64 / IMAGE_SIDE as f64).cos()) / 3.0
}

/// Unit-norm pattern with magnitude spectrum `(g(u) g(v))^2` for the box gain
/// `g` and uniformly random phases. Its autocorrelation vanishes beyond four
/// pixels in either direction.
fn base_pattern(stream: &RngStream) -> Vec<f64> {
    let n = IMAGE_SIDE * IMAGE_SIDE;
    let (z, _) = stream.draw(|r| standard_normals(r, n));
    let noise = Tensor::from_parts(vec![IMAGE_SIDE, IMAGE_SIDE], z);
    let mut spectrum = transform(&noise).expect("2D transform of a valid tensor");
    for (k, c) in spectrum.values_mut().iter_mut().enumerate() {
        let gain = (box_gain(k / IMAGE_SIDE) * box_gain(k % IMAGE_SIDE)).powi(2);
        *c = Complex::from_polar(gain, c.arg());
    }
    let p = inverse_transform(&spectrum).expect("phases of a real signal stay conjugate symmetric");
    let norm = p.norm();
    p.into_data().into_iter().map(|v| v / norm).collect()
}

/// Shift of class `c` on a square grid with spacing `side / ceil(sqrt(C))`.
fn class_offset(c: usize, classes: usize) -> (usize, usize) {
    let g = (1..).find(|g| g * g >= classes).unwrap();
    let spacing = IMAGE_SIDE / g;
    ((c / g) * spacing, (c % g) * spacing)
}

pub fn synth_dataset(seed: u64) -> SynthDataset {
    synth_dataset_with(seed, DEFAULT_NOISE_SD, DEFAULT_TRAIN, DEFAULT_TEST, DEFAULT_CLASSES)
}

pub fn synth_dataset_with(
    seed: u64,
    noise_sd: f64,
    n_train: usize,
    n_test: usize,
    classes: usize,
) -> SynthDataset {
    let root = RngStream::new(seed);
    let n = IMAGE_SIDE * IMAGE_SIDE;
    let dims = [IMAGE_SIDE, IMAGE_SIDE, 1];
    let base = base_pattern(&root.derive(&[0]));
    let shifts: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            let (di, dj) = class_offset(c, classes);
            (0..n)
                .map(|k| {
                    let (i, j) = (k / IMAGE_SIDE, k % IMAGE_SIDE);
                    base[((i + IMAGE_SIDE - di) % IMAGE_SIDE) * IMAGE_SIDE + (j + IMAGE_SIDE - dj) % IMAGE_SIDE]
                })
                .collect()
        })
        .collect();
    let centroid: Vec<f64> = (0..n)
        .map(|k| shifts.iter().map(|s| s[k]).sum::<f64>() / classes as f64)
        .collect();
    let patterns: Vec<Tensor<f64>> = shifts
        .iter()
        .map(|s| {
            let centred = Tensor::from_parts(dims.to_vec(), s.iter().zip(&centroid).map(|(a, m)| a - m).collect());
            let norm = centred.norm();
            if norm == 0.0 {
                centred
            } else {
                centred.scale(1.0 / norm)
            }
        })
        .collect();
    let split = |tag: u64, count: usize| {
        let mut labels: Vec<usize> = (0..count).map(|i| i % classes).collect();
        let (_, _) = root
            .derive(&[tag, 0])
            .draw(|r| labels.shuffle(r));
        let images = labels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let (z, _) = root.derive(&[tag, 1, i as u64]).draw(|r| standard_normals(r, n));
                let data = patterns[c]
                    .data()
                    .iter()
                    .zip(z)
                    .map(|(p, e)| p + noise_sd * e)
                    .collect();
                Tensor::from_parts(dims.to_vec(), data)
            })
            .collect();
        Split { images, labels }
    };
    let train = split(1, n_train);
    let test = split(2, n_test);
    SynthDataset {
        seed,
        classes,
        noise_sd,
        patterns,
        train,
        test,
    }
}
