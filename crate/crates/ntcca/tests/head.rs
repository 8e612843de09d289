use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tenscorr_core::{Mat, Matrix};
use tenscorr_mtcn::{extract_c9_batch, ArchitectureSpec, Images, InitScheme, NetworkState};
use tenscorr_ntcca::{
    build_feature_tensor, fit_ntcca, load_head, ntcca_project_all, objective, predict_attributes,
    save_head, train_generalization_head, GeneralizationHead, Grouping, HeadConfig, NtccaOptions,
    StopReason,
};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Gaussian features labelled by three random hyperplanes through the
/// origin, with a margin band removed so the classes are separable.
fn separable(n: usize, d: usize, seed: u64) -> (Mat, Mat) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planes: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..d).map(|_| normal(&mut rng)).collect())
        .collect();
    let mut z = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n * 3);
    while y.len() < n * 3 {
        let x: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
        let s: Vec<f64> = planes
            .iter()
            .map(|p| p.iter().zip(&x).map(|(a, b)| a * b).sum())
            .collect();
        if s.iter().any(|v: &f64| v.abs() < 0.3) {
            continue;
        }
        z.extend(&x);
        y.extend(s.iter().map(|&v| (v > 0.0) as u8 as f64));
    }
    (
        Matrix::from_vec(n, d, z).unwrap(),
        Matrix::from_vec(n, 3, y).unwrap(),
    )
}

fn accuracy(head: &GeneralizationHead, z: &Mat, y: &Mat) -> f64 {
    let p = head.probabilities(z).unwrap();
    let hits = p
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .filter(|(&p, &y)| (p >= 0.5) == (y == 1.0))
        .count();
    hits as f64 / y.as_slice().len() as f64
}

#[test]
fn heavy_regularization_keeps_weights_at_zero() {
    let (z, _) = separable(60, 4, 1);
    // Balanced labels: the optimal bias is 0.
    let y = Matrix::from_fn(60, 3, |i, j| ((i + j) % 2) as f64);
    let cfg = HeadConfig {
        gamma: 1e6,
        max_iterations: 200,
        ..HeadConfig::default()
    };
    let rep = train_generalization_head(&z, &y, &cfg).unwrap();
    assert!(
        rep.head.weights.as_slice().iter().all(|w| w.abs() < 1e-6),
        "{:?}",
        rep.head.weights
    );
    let p = rep.head.probabilities(&z).unwrap();
    assert!(p.as_slice().iter().all(|&v| (v - 0.5).abs() < 1e-6));
}

#[test]
fn separable_features_are_fit() {
    let (z, y) = separable(300, 6, 2);
    let cfg = HeadConfig {
        learning_rate: 0.1,
        max_iterations: 5000,
        gamma: 0.0,
        ..HeadConfig::default()
    };
    let rep = train_generalization_head(&z, &y, &cfg).unwrap();
    assert!(rep.iterations <= 5000);
    let acc = accuracy(&rep.head, &z, &y);
    assert!(acc >= 0.99, "training accuracy {acc}");
}

#[test]
fn loss_never_exceeds_initial_and_iterations_are_bounded() {
    for seed in 0..5 {
        let (z, y) = separable(50, 3, 10 + seed);
        for max_iterations in [0, 1, 7, 300] {
            let cfg = HeadConfig {
                learning_rate: 5.0,
                max_iterations,
                ..HeadConfig::default()
            };
            let rep = train_generalization_head(&z, &y, &cfg).unwrap();
            assert!(rep.final_loss <= rep.initial_loss);
            assert!(rep.iterations <= max_iterations);
            let direct = objective(&z, &y, &rep.head.weights, &rep.head.bias, cfg.gamma).unwrap();
            assert!((direct - rep.final_loss).abs() < 1e-12);
        }
    }
}

#[test]
fn reaching_the_minimum_loss_stops_early() {
    let (z, y) = separable(40, 2, 3);
    let cfg = HeadConfig {
        min_loss: Some(1.5),
        gamma: 0.0,
        ..HeadConfig::default()
    };
    let rep = train_generalization_head(&z, &y, &cfg).unwrap();
    assert_eq!(rep.stop, StopReason::LossBelowMinimum);
    assert!(rep.final_loss <= 1.5);
    assert!(rep.iterations < cfg.max_iterations);
}

#[test]
fn zero_head_ties_to_positive() {
    let head = GeneralizationHead {
        weights: Matrix::zeros(4, 3),
        bias: vec![0.0; 3],
        config: HeadConfig::default(),
    };
    assert_eq!(
        predict_attributes(&[0.3, -2.0, 5.0, 1.0], &head, 0.5).unwrap(),
        vec![true; 3]
    );
}

#[test]
fn selecting_head_flips_at_the_threshold() {
    // Attribute 0 reads coordinate 1; its probability is 0.5 at z₁ = 0.
    let head = GeneralizationHead {
        weights: Matrix::from_vec(3, 1, vec![0.0, 1.0, 0.0]).unwrap(),
        bias: vec![0.0],
        config: HeadConfig::default(),
    };
    assert_eq!(
        predict_attributes(&[9.0, -1e-9, 9.0], &head, 0.5).unwrap(),
        vec![false]
    );
    assert_eq!(
        predict_attributes(&[-9.0, 0.0, -9.0], &head, 0.5).unwrap(),
        vec![true]
    );
    // Threshold 0.75 sits at z₁ = ln 3.
    let t = 3f64.ln();
    assert_eq!(
        predict_attributes(&[0.0, t - 1e-9, 0.0], &head, 0.75).unwrap(),
        vec![false]
    );
    assert_eq!(
        predict_attributes(&[0.0, t + 1e-9, 0.0], &head, 0.75).unwrap(),
        vec![true]
    );
}

#[test]
fn random_head_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (d, k) = (7, 5);
    let head = GeneralizationHead {
        weights: Matrix::from_fn(d, k, |_, _| normal(&mut rng)),
        bias: (0..k).map(|_| normal(&mut rng)).collect(),
        config: HeadConfig::default(),
    };
    for _ in 0..20 {
        let z: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
        let t = rng.random_range(0.1..0.9);
        let got = predict_attributes(&z, &head, t).unwrap();
        for c in 0..k {
            let mut s = head.bias[c];
            for j in 0..d {
                s += z[j] * head.weights[(j, c)];
            }
            assert_eq!(got[c], 1.0 / (1.0 + (-s).exp()) >= t);
        }
    }
}

#[test]
fn head_training_leaves_the_network_untouched() {
    let arch = ArchitectureSpec::toy();
    let state = NetworkState::init(&arch, InitScheme::He, 5).unwrap();
    let before = state.checksum();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 12;
    let (h, w, c) = (arch.input_height, arch.input_width, arch.input_channels);
    let data: Vec<f64> = (0..n * h * w * c).map(|_| rng.random::<f64>()).collect();
    let images = Images::new(n, h, w, c, data).unwrap();
    let feats: Vec<_> = extract_c9_batch(&state, &arch, &images)
        .unwrap()
        .iter()
        .map(|maps| build_feature_tensor(maps).unwrap())
        .collect();
    let g = Grouping::by_subnetwork(arch.subnetworks, feats[0].maps());
    let basis = fit_ntcca(&feats, &g, &NtccaOptions::default()).unwrap();
    let z = ntcca_project_all(&feats, &basis).unwrap();
    let y = Matrix::from_fn(n, arch.subnetworks, |i, j| ((i + j) % 2) as f64);
    let rep = train_generalization_head(
        &z,
        &y,
        &HeadConfig {
            max_iterations: 50,
            ..HeadConfig::default()
        },
    )
    .unwrap();
    assert_eq!(rep.head.input_dim(), basis.dim());
    assert_eq!(state.checksum(), before);
}

#[test]
fn head_round_trips_through_disk() {
    let (z, y) = separable(30, 3, 7);
    let rep = train_generalization_head(
        &z,
        &y,
        &HeadConfig {
            max_iterations: 20,
            standardize: true,
            ..HeadConfig::default()
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_head(dir.path(), &rep.head).unwrap();
    assert_eq!(load_head(dir.path()).unwrap(), rep.head);
}

#[test]
fn invalid_inputs_are_rejected() {
    let cfg = HeadConfig::default();
    let empty = Matrix::zeros(0, 3);
    assert!(train_generalization_head(&empty, &Matrix::zeros(0, 2), &cfg).is_err());
    let z = Matrix::from_fn(4, 2, |i, j| (i + j) as f64);
    assert!(train_generalization_head(&z, &Matrix::zeros(3, 2), &cfg).is_err());
    assert!(train_generalization_head(&z, &Matrix::from_fn(4, 1, |_, _| 0.5), &cfg).is_err());
    let mut bad = z.clone();
    bad.as_mut_slice()[0] = f64::NAN;
    assert!(train_generalization_head(&bad, &Matrix::zeros(4, 1), &cfg).is_err());
    let neg = HeadConfig {
        gamma: -1.0,
        ..HeadConfig::default()
    };
    assert!(train_generalization_head(&z, &Matrix::zeros(4, 1), &neg).is_err());
    let head = GeneralizationHead {
        weights: Matrix::zeros(2, 1),
        bias: vec![0.0],
        config: cfg,
    };
    assert!(predict_attributes(&[1.0, 2.0, 3.0], &head, 0.5).is_err());
}
