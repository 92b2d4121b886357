use holobind::attacks::{
    ari, clustering_attack, frechet_distance, frechet_gradient, inversion_attack, inversion_report, kmeans,
    regression_report, secret_gradient, secret_regression_attack, sqrtm_psd, strong_adversary, unbind_all,
    AttackReport, Direction, GaussianStats, Pca, RealismScore, KMEANS_MAX_ITER, KMEANS_TOL,
};
use holobind::fft::transform;
use holobind::rng::gaussian_tensor;
use holobind::tensor::Tensor;
use holobind::trainer::{bound_inputs, synth_dataset, synth_dataset_with, TrainConfig};
use holobind::vsa::{bind, cosine, sample_secret, Secret};
use holobind::{Error, RngStream};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

const DIMS: [usize; 3] = [16, 16, 1];

fn secret(seed: u64) -> Secret<f64> {
    sample_secret(&DIMS, &RngStream::new(seed)).unwrap().0
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn random_spd(p: usize, rng: &mut ChaCha20Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() + DMatrix::identity(p, p) * 0.5
}

fn random_stats(p: usize, rng: &mut ChaCha20Rng) -> GaussianStats {
    let mean = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    GaussianStats::new(mean, random_spd(p, rng)).unwrap()
}

/// `k` well separated Gaussian blobs in 8 dimensions.
fn blobs(k: usize, per: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for c in 0..k {
        for _ in 0..per {
            let p = (0..8)
                .map(|j| if j == c { sep } else { 0.0 } + rng.sample::<f64, _>(StandardNormal))
                .collect();
            points.push(p);
            labels.push(c);
        }
    }
    (points, labels)
}

#[test]
fn kmeans_splits_two_obvious_pairs() {
    let points = vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![10.0, 10.0], vec![10.0, 10.1]];
    let km = kmeans(&points, 2, &RngStream::new(1), KMEANS_MAX_ITER, KMEANS_TOL).unwrap();
    assert_eq!(km.labels[0], km.labels[1]);
    assert_eq!(km.labels[2], km.labels[3]);
    assert_ne!(km.labels[0], km.labels[2]);
    assert!((km.final_inertia() - 0.01).abs() < 1e-12);
}

#[test]
fn kmeans_on_identical_points_has_zero_inertia() {
    let points = vec![vec![3.0, -1.0]; 10];
    let km = kmeans(&points, 3, &RngStream::new(2), KMEANS_MAX_ITER, KMEANS_TOL).unwrap();
    assert_eq!(km.final_inertia(), 0.0);
}

#[test]
fn kmeans_recovers_separated_blobs() {
    for seed in 0..20 {
        let (points, labels) = blobs(4, 50, 10.0, seed);
        let km = kmeans(&points, 4, &RngStream::new(seed), KMEANS_MAX_ITER, KMEANS_TOL).unwrap();
        assert!(ari(&km.labels, &labels).unwrap() >= 0.99, "seed {seed}");
    }
}

#[test]
fn kmeans_inertia_never_increases() {
    for seed in 0..10 {
        let (points, _) = blobs(5, 40, 1.5, seed);
        let km = kmeans(&points, 5, &RngStream::new(seed), KMEANS_MAX_ITER, KMEANS_TOL).unwrap();
        for w in km.inertia.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "seed {seed}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn kmeans_rejects_bad_k() {
    let points = vec![vec![0.0], vec![1.0]];
    for k in [0, 3] {
        assert!(matches!(
            kmeans(&points, k, &RngStream::new(1), KMEANS_MAX_ITER, KMEANS_TOL),
            Err(Error::Parameter(_))
        ));
    }
}

#[test]
fn ari_reference_values() {
    assert!((ari(&[0, 0, 1, 1, 2], &[0, 0, 1, 1, 2]).unwrap() - 1.0).abs() < 1e-12);
    assert!((ari(&[0, 0, 1, 1, 2], &[5, 5, 9, 9, 7]).unwrap() - 1.0).abs() < 1e-12);
    assert!(ari(&[0, 1, 2, 0, 1], &[0, 0, 0, 0, 0]).unwrap().abs() < 1e-12);
    assert!((ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap() + 0.5).abs() < 1e-12);
}

/// Pair-counting definition, independent of the contingency table route.
fn ari_by_pairs(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut in_a, mut in_b) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            both += (sa && sb) as u8 as f64;
            in_a += sa as u8 as f64;
            in_b += sb as u8 as f64;
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let expected = in_a * in_b / pairs;
    let max = 0.5 * (in_a + in_b);
    if max == expected {
        return if both == expected { 1.0 } else { 0.0 };
    }
    (both - expected) / (max - expected)
}

#[test]
fn ari_matches_pair_counting() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.random_range(2..40);
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
        let got = ari(&a, &b).unwrap();
        let want = ari_by_pairs(&a, &b);
        assert!((got - want).abs() < 1e-9, "{a:?} {b:?}: {got} vs {want}");
    }
}

#[test]
fn ari_rejects_length_mismatch() {
    assert!(matches!(ari(&[0, 1], &[0, 1, 1]), Err(Error::Parameter(_))));
}

#[test]
fn frechet_of_equal_stats_is_zero() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let a = random_stats(5, &mut rng);
    assert!(frechet_distance(&a, &a).unwrap() < 1e-8);
}

#[test]
fn frechet_with_zero_covariance_is_the_mean_term() {
    let a = GaussianStats::new(DVector::from_vec(vec![1.0, 2.0, -3.0]), DMatrix::zeros(3, 3)).unwrap();
    let b = GaussianStats::new(DVector::from_vec(vec![0.5, -1.0, 0.0]), DMatrix::zeros(3, 3)).unwrap();
    assert_eq!(frechet_distance(&a, &b).unwrap(), 0.25 + 9.0 + 9.0);
}

#[test]
fn frechet_of_scaled_identities() {
    let mean = DVector::zeros(3);
    let a = GaussianStats::new(mean.clone(), DMatrix::identity(3, 3)).unwrap();
    let b = GaussianStats::new(mean, DMatrix::identity(3, 3) * 4.0).unwrap();
    assert!((frechet_distance(&a, &b).unwrap() - 3.0).abs() < 1e-12);
}

#[test]
fn frechet_of_commuting_diagonals() {
    // With diagonal covariances the trace term is sum (sqrt(a) - sqrt(b))^2.
    let va = [0.3, 2.0, 5.0, 1.0];
    let vb = [1.2, 0.1, 5.0, 9.0];
    let a = GaussianStats::new(DVector::zeros(4), DMatrix::from_diagonal(&DVector::from_row_slice(&va))).unwrap();
    let b = GaussianStats::new(DVector::zeros(4), DMatrix::from_diagonal(&DVector::from_row_slice(&vb))).unwrap();
    let want: f64 = va.iter().zip(&vb).map(|(x, y)| (x.sqrt() - y.sqrt()).powi(2)).sum();
    assert!((frechet_distance(&a, &b).unwrap() - want).abs() < 1e-10);
}

#[test]
fn frechet_rejects_dimension_mismatch() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let a = random_stats(3, &mut rng);
    let b = random_stats(4, &mut rng);
    assert!(matches!(frechet_distance(&a, &b), Err(Error::Parameter(_))));
    assert!(matches!(frechet_gradient(&a, &b, 1e-12), Err(Error::Parameter(_))));
}

#[test]
fn stats_reject_bad_covariances() {
    let mean = DVector::zeros(2);
    assert!(GaussianStats::new(mean.clone(), DMatrix::identity(3, 3)).is_err());
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    assert!(GaussianStats::new(mean.clone(), asym).is_err());
    let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    assert!(GaussianStats::new(mean, indefinite).is_err());
}

#[test]
fn sqrtm_squares_back() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let a = random_spd(6, &mut rng);
    let r = sqrtm_psd(&a);
    assert!((&r * &r - &a).abs().max() < 1e-10);
    assert!((&r - r.transpose()).abs().max() < 1e-12);
}

#[test]
fn frechet_gradient_matches_finite_differences() {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let p = 4;
    let a = random_stats(p, &mut rng);
    let b = random_stats(p, &mut rng);
    let (g_mean, g_cov) = frechet_gradient(&a, &b, 1e-12).unwrap();
    let h = 1e-6;
    let f = |mean: DVector<f64>, cov: DMatrix<f64>| frechet_distance(&GaussianStats::new(mean, cov).unwrap(), &b).unwrap();
    for i in 0..p {
        let mut e = DVector::zeros(p);
        e[i] = h;
        let fd = (f(&a.mean + &e, a.cov.clone()) - f(&a.mean - &e, a.cov.clone())) / (2.0 * h);
        assert!(rel_err(fd, g_mean[i]) < 1e-5, "mean {i}: {fd} vs {}", g_mean[i]);
    }
    for i in 0..p {
        for j in i..p {
            let mut e = DMatrix::zeros(p, p);
            e[(i, j)] = h;
            e[(j, i)] = h;
            let fd = (f(a.mean.clone(), &a.cov + &e) - f(a.mean.clone(), &a.cov - &e)) / (2.0 * h);
            let want = if i == j { g_cov[(i, i)] } else { 2.0 * g_cov[(i, j)] };
            assert!(rel_err(fd, want) < 1e-5, "cov {i},{j}: {fd} vs {want}");
        }
    }
}

#[test]
fn pca_components_are_orthonormal_and_ordered() {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let scales = [5.0, 3.0, 1.0, 0.5, 0.1];
    let samples: Vec<DVector<f64>> = (0..400)
        .map(|_| DVector::from_fn(5, |i, _| scales[i] * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let pca = Pca::fit(&samples, 3).unwrap();
    let w = &pca.components;
    assert!((w * w.transpose() - DMatrix::identity(3, 3)).abs().max() < 1e-10);
    for (row, axis) in (0..3).zip(0..3) {
        assert!(w[(row, axis)].abs() > 0.99);
    }
    assert!(Pca::fit(&samples, 0).is_err());
    assert!(Pca::fit(&samples, 6).is_err());
}

fn probe_images(n: usize) -> Vec<Tensor<f64>> {
    synth_dataset(1).test.images[..n].to_vec()
}

#[test]
fn realism_gradient_matches_finite_differences() {
    let data = synth_dataset(1);
    let score = RealismScore::fit(&data.train.images, 8).unwrap();
    let images = probe_images(12);
    let (_, grads) = score.score_and_gradient(&images).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let h = 1e-5;
    for _ in 0..20 {
        let k = rng.random_range(0..images.len());
        let i = rng.random_range(0..images[k].len());
        let shifted = |delta: f64| {
            let mut imgs = images.clone();
            imgs[k].data_mut()[i] += delta;
            score.score(&imgs).unwrap()
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        let g = grads[k].data()[i];
        assert!((fd - g).abs() <= 1e-4 * fd.abs().max(g.abs()).max(1e-3), "image {k} pixel {i}: {fd} vs {g}");
    }
}

#[test]
fn secret_gradient_matches_finite_differences() {
    let data = synth_dataset(1);
    let score = RealismScore::fit(&data.train.images, 8).unwrap();
    let s = secret(3);
    let bound: Vec<_> = probe_images(12).iter().map(|x| bind(x, &s).unwrap()).collect();
    let candidate = secret(4).into_tensor();
    let (_, grad) = secret_gradient(&score, &bound, &candidate).unwrap();
    let h = 1e-5;
    for seed in 0..5 {
        let (v, _) = gaussian_tensor::<f64>(&DIMS, 1.0, &RngStream::new(100 + seed)).unwrap();
        let at = |t: f64| score.score(&unbind_all(&bound, &candidate.add(&v.scale(t)).unwrap()).unwrap()).unwrap();
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let analytic: f64 = grad.data().iter().zip(v.data()).map(|(a, b)| a * b).sum();
        assert!(rel_err(fd, analytic) < 1e-4, "direction {seed}: {fd} vs {analytic}");
    }
}

#[test]
fn planted_inversion_stays_on_the_truth() {
    let data = synth_dataset(1);
    let truth = probe_images(64);
    let score = RealismScore::fit(&data.train.images, 32).unwrap().with_reference(&truth).unwrap();
    let s = secret(9);
    let bound: Vec<_> = truth.iter().map(|x| bind(x, &s).unwrap()).collect();
    let inv = inversion_attack(&bound, &score, &s, 100, 0.05, Some(&truth)).unwrap();
    assert!(inv.trajectory[0] < 1e-8);
    assert!(inv.recovery_cosine.unwrap() >= 0.99);
    assert!(cosine(inv.candidate.tensor(), s.tensor()).unwrap() >= 0.99);
}

#[test]
fn inversion_without_steps_returns_the_initialization() {
    let data = synth_dataset(1);
    let score = RealismScore::fit(&data.train.images, 8).unwrap();
    let bound: Vec<_> = probe_images(4).iter().map(|x| bind(x, &secret(1)).unwrap()).collect();
    let init = secret(2);
    let inv = inversion_attack(&bound, &score, &init, 0, 0.05, None).unwrap();
    assert_eq!(inv.candidate, init);
    assert_eq!(inv.trajectory.len(), 1);
    assert!(inv.recovery_cosine.is_none());
    let report = inversion_report(&inv, 2, 0, 0.05);
    assert_eq!(report.metric, "frechet");
}

#[test]
fn inversion_candidate_stays_projected() {
    let data = synth_dataset(1);
    let score = RealismScore::fit(&data.train.images, 8).unwrap();
    let bound: Vec<_> = probe_images(8).iter().map(|x| bind(x, &secret(1)).unwrap()).collect();
    let inv = inversion_attack(&bound, &score, &secret(2), 20, 0.05, None).unwrap();
    assert_eq!(inv.trajectory.len(), 21);
    let spectrum = transform(inv.candidate.tensor()).unwrap();
    for c in spectrum.values() {
        assert!((c.norm() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn inversion_rejects_bad_input() {
    let data = synth_dataset(1);
    let score = RealismScore::fit(&data.train.images, 8).unwrap();
    let one = vec![bind(&probe_images(1)[0], &secret(1)).unwrap()];
    assert!(matches!(
        inversion_attack(&one, &score, &secret(2), 1, 0.05, None),
        Err(Error::Parameter(_))
    ));
    let two: Vec<_> = probe_images(2).iter().map(|x| bind(x, &secret(1)).unwrap()).collect();
    assert!(inversion_attack(&two, &score, &secret(2), 1, 0.0, None).is_err());
    let truth = probe_images(3);
    assert!(inversion_attack(&two, &score, &secret(2), 1, 0.05, Some(&truth)).is_err());
}

fn identity_pairs(n: usize, seed: u64) -> Vec<(Tensor<f64>, Tensor<f64>)> {
    (0..n)
        .map(|i| {
            let s = secret(seed * 10_000 + i as u64).into_tensor();
            (s.clone(), s)
        })
        .collect()
}

#[test]
fn planted_regression_recovers_identity() {
    let r = secret_regression_attack(&identity_pairs(512, 1), &identity_pairs(32, 2)).unwrap();
    assert!(r.residual < 1e-8);
    assert!(r.cosine > 0.99);
    assert_eq!(r.rank, 256);
    assert!(!r.rank_deficient);
}

#[test]
fn regression_flags_rank_deficiency() {
    // Every input lies in one fixed line, so the fitted map has rank one.
    let base = secret(5).into_tensor();
    let train: Vec<_> = (0..512)
        .map(|i| (base.scale(1.0 + i as f64), secret(6 + i as u64).into_tensor()))
        .collect();
    let r = secret_regression_attack(&train, &identity_pairs(4, 3)).unwrap();
    assert_eq!(r.rank, 1);
    assert!(r.rank_deficient);
    assert!(r.residual.is_finite());
}

#[test]
fn regression_rejects_small_samples() {
    assert!(matches!(
        secret_regression_attack(&identity_pairs(512, 1), &identity_pairs(1, 2)),
        Err(Error::Parameter(_))
    ));
    assert!(matches!(
        secret_regression_attack(&identity_pairs(511, 1), &identity_pairs(4, 2)),
        Err(Error::Parameter(_))
    ));
    assert!(secret_regression_attack(&[], &identity_pairs(4, 2)).is_err());
}

#[test]
fn clustering_finds_noiseless_classes() {
    let data = synth_dataset_with(1, 0.0, 64, 128, 4);
    let report = clustering_attack(&data.test.images, &data.test.labels, 4, 1).unwrap();
    assert!(report.score >= 0.9, "{}", report.score);
}

#[test]
fn clustering_bound_images_finds_nothing() {
    let data = synth_dataset(1);
    let bound = bound_inputs(&data.test, 3).unwrap();
    let report = clustering_attack(&bound, &data.test.labels, 4, 3).unwrap();
    assert!(report.score.abs() <= 0.05, "{}", report.score);
}

#[test]
fn strong_adversary_with_shuffled_labels_is_at_chance() {
    let data = synth_dataset(1);
    let mut shuffled = data.train.labels.clone();
    shuffled.shuffle(&mut ChaCha20Rng::seed_from_u64(11));
    let cfg = TrainConfig { seed: 1, ..TrainConfig::default() };
    let report = strong_adversary(
        (&data.train.images, &shuffled),
        (&data.test.images, &data.test.labels),
        4,
        &cfg,
    )
    .unwrap();
    assert!((report.score - 0.25).abs() <= 0.08, "{}", report.score);
}

#[test]
fn strong_adversary_on_plain_images_succeeds() {
    let data = synth_dataset(1);
    let cfg = TrainConfig { seed: 1, ..TrainConfig::default() };
    let report = strong_adversary(
        (&data.train.images, &data.train.labels),
        (&data.test.images, &data.test.labels),
        4,
        &cfg,
    )
    .unwrap();
    assert!(report.score >= 0.9, "{}", report.score);
}

#[test]
fn report_verdicts_and_csv() {
    let r = secret_regression_attack(&identity_pairs(512, 1), &identity_pairs(8, 2)).unwrap();
    let report = regression_report(&r, 4, 512, 8);
    assert!(report.threshold.is_nan());
    let low = report.clone().with_threshold(0.15, Direction::AtMost);
    assert!(!low.passed());
    let high = report.with_threshold(0.99, Direction::AtLeast);
    assert!(high.passed());
    let csv = high.csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], AttackReport::csv_header());
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields.len(), 8);
    assert_eq!(&fields[..2], &["regress", "cosine"]);
    assert_eq!(&fields[3..7], &["0.99", "at_least", "pass", "4"]);
    assert!(fields[7].contains("rank=256"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_ari_symmetric_and_permutation_invariant(
        a in proptest::collection::vec(0usize..4, 2..30),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let b: Vec<usize> = a.iter().map(|_| rng.random_range(0..3)).collect();
        let ab = ari(&a, &b).unwrap();
        prop_assert!((ab - ari(&b, &a).unwrap()).abs() < 1e-12);
        let mut perm: Vec<usize> = (0..4).collect();
        perm.shuffle(&mut rng);
        let relabeled: Vec<usize> = a.iter().map(|&l| perm[l] + 10).collect();
        prop_assert!((ab - ari(&relabeled, &b).unwrap()).abs() < 1e-12);
        prop_assert!(ab <= 1.0 + 1e-12);
    }

    #[test]
    fn prop_frechet_symmetric_and_nonnegative(seed in any::<u64>(), p in 1usize..6) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let a = random_stats(p, &mut rng);
        let b = random_stats(p, &mut rng);
        let ab = frechet_distance(&a, &b).unwrap();
        let ba = frechet_distance(&b, &a).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-8 * (1.0 + ab));
        prop_assert!(frechet_distance(&a, &a).unwrap() <= 1e-8 * (1.0 + a.cov.trace()));
    }

    #[test]
    fn prop_kmeans_inertia_monotone(seed in any::<u64>(), k in 1usize..6) {
        let (points, _) = blobs(3, 20, 2.0, seed);
        let km = kmeans(&points, k, &RngStream::new(seed), KMEANS_MAX_ITER, KMEANS_TOL).unwrap();
        for w in km.inertia.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        prop_assert_eq!(km.labels.len(), points.len());
        prop_assert!(km.labels.iter().all(|&l| l < k));
    }
}
