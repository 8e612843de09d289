use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tenscorr_core::matrix::norm2;
use tenscorr_core::{
    cp_als, outer_product, rank1_best, CpOptions, DenseTensor, Rank1Options, Tensor,
};

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = norm2(&v);
    v.into_iter().map(|x| x / n).collect()
}

fn gaussian_unit(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    unit((0..d).map(|_| StandardNormal.sample(rng)).collect())
}

fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
    let mut d = a.clone();
    d.add_scaled(-1.0, b).unwrap();
    d.frobenius_norm() / a.frobenius_norm()
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    DenseTensor::from_fn(shape, |_| StandardNormal.sample(rng)).unwrap()
}

/// Independent higher-order power iteration: plain loops over an order-3
/// tensor, Gaussian starts only.
fn hopm_oracle(x: &Tensor, restarts: usize, seed: u64) -> f64 {
    let s = x.shape();
    assert_eq!(s.len(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..restarts {
        let mut a: Vec<f64>;
        let mut b = gaussian_unit(s[1], &mut rng);
        let mut c = gaussian_unit(s[2], &mut rng);
        let mut rho = 0.0;
        for _ in 0..5000 {
            let mut na = vec![0.0; s[0]];
            for i in 0..s[0] {
                for j in 0..s[1] {
                    for k in 0..s[2] {
                        na[i] += x.get(&[i, j, k]) * b[j] * c[k];
                    }
                }
            }
            a = unit(na);
            let mut nb = vec![0.0; s[1]];
            for i in 0..s[0] {
                for j in 0..s[1] {
                    for k in 0..s[2] {
                        nb[j] += x.get(&[i, j, k]) * a[i] * c[k];
                    }
                }
            }
            b = unit(nb);
            let mut nc = vec![0.0; s[2]];
            for i in 0..s[0] {
                for j in 0..s[1] {
                    for k in 0..s[2] {
                        nc[k] += x.get(&[i, j, k]) * a[i] * b[j];
                    }
                }
            }
            let r = norm2(&nc);
            c = unit(nc);
            let done = (r - rho).abs() < 1e-15;
            rho = r;
            if done {
                break;
            }
        }
        best = best.max(rho);
    }
    best
}

#[test]
fn scaled_rank_one_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let a = gaussian_unit(4, &mut rng);
    let b = gaussian_unit(3, &mut rng);
    let c = gaussian_unit(5, &mut rng);
    let mut x = outer_product(&[&a[..], &b[..], &c[..]]).unwrap();
    x.scale(5.0);
    let rep = cp_als(&x, &CpOptions::rank(1)).unwrap();
    let f = &rep.factors;
    assert!((f.weights()[0] - 5.0).abs() < 1e-10);
    for (fac, want) in f.factors().iter().zip([&a, &b, &c]) {
        let got = fac.col(0);
        let dot: f64 = got.iter().zip(want.iter()).map(|(p, q)| p * q).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-10);
    }
    assert!(rel_err(&x, &f.reconstruct().unwrap()) < 1e-10);
}

#[test]
fn three_separated_components_are_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let shape = [6, 5, 4];
    let weights = [10.0, 5.0, 2.0];
    let mut x = DenseTensor::zeros(&shape).unwrap();
    for &w in &weights {
        let vs: Vec<Vec<f64>> = shape.iter().map(|&d| gaussian_unit(d, &mut rng)).collect();
        let refs: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
        x.add_scaled(w, &outer_product(&refs).unwrap()).unwrap();
    }
    let rep = cp_als(&x, &CpOptions::rank(3)).unwrap();
    let err = rel_err(&x, &rep.factors.reconstruct().unwrap());
    assert!(err < 1e-6, "relative error {err}, sweeps {}", rep.sweeps);
}

#[test]
fn full_rank_matrix_is_fit_exactly() {
    let x: Tensor = DenseTensor::new(vec![2, 2], vec![3.0, -1.0, 0.5, 2.0]).unwrap();
    let rep = cp_als(&x, &CpOptions::rank(4)).unwrap();
    assert!((rep.fit() - 1.0).abs() < 1e-10, "fit {}", rep.fit());
}

#[test]
fn tiny_tensor_full_rank_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let x = random_tensor(&[2, 2, 2], &mut rng);
    let opts = CpOptions {
        rank: 3,
        tol: 1e-14,
        max_sweeps: 5000,
        ..CpOptions::default()
    };
    let rep = cp_als(&x, &opts).unwrap();
    assert!(rel_err(&x, &rep.factors.reconstruct().unwrap()) < 1e-4);
}

#[test]
fn fit_is_monotone_over_sweeps() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = random_tensor(&[5, 4, 3], &mut rng);
        let opts = CpOptions {
            rank: 3,
            tol: 0.0,
            max_sweeps: 200,
            seed,
            ..CpOptions::default()
        };
        let rep = cp_als(&x, &opts).unwrap();
        for w in rep.fit_history.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "seed {seed}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn deterministic_given_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let x = random_tensor(&[3, 3, 3], &mut rng);
    let opts = CpOptions {
        rank: 5,
        seed: 9,
        ..CpOptions::default()
    };
    let a = cp_als(&x, &opts).unwrap();
    let b = cp_als(&x, &opts).unwrap();
    assert_eq!(a.factors, b.factors);
}

#[test]
fn greedy_deflation_recovers_orthogonal_terms() {
    // Orthogonal components: deflation is exact.
    let e = |d: usize, k: usize| {
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        v
    };
    let mut x: Tensor = DenseTensor::zeros(&[3, 3, 3]).unwrap();
    for (k, w) in [4.0, 2.0].into_iter().enumerate() {
        let (a, b, c) = (e(3, k), e(3, k), e(3, k));
        x.add_scaled(w, &outer_product(&[&a[..], &b[..], &c[..]]).unwrap())
            .unwrap();
    }
    let opts = CpOptions {
        rank: 2,
        greedy_deflation: true,
        ..CpOptions::default()
    };
    let rep = cp_als(&x, &opts).unwrap();
    assert!((rep.factors.weights()[0] - 4.0).abs() < 1e-10);
    assert!((rep.factors.weights()[1] - 2.0).abs() < 1e-10);
    assert!(rel_err(&x, &rep.factors.reconstruct().unwrap()) < 1e-10);
}

#[test]
fn rank1_of_rank_one_input_is_its_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let vs: Vec<Vec<f64>> = [3, 4, 2]
        .iter()
        .map(|&d| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let refs: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
    let x = outer_product(&refs).unwrap();
    let r = rank1_best(&x, &Rank1Options::default()).unwrap();
    assert!((r.rho - x.frobenius_norm()).abs() < 1e-10);
    for v in &r.vectors {
        assert!((norm2(v) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn rank1_of_matrix_is_top_singular_value() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(30 + seed);
        let x = random_tensor(&[5, 4], &mut rng);
        let nm = nalgebra::DMatrix::from_row_slice(5, 4, x.data());
        let top = nm.singular_values().iter().copied().fold(0.0, f64::max);
        let r = rank1_best(&x, &Rank1Options::default()).unwrap();
        assert!((r.rho - top).abs() < 1e-8, "{} vs {top}", r.rho);
    }
}

#[test]
fn rank1_matches_many_restart_power_iteration() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(40 + seed);
        let x = random_tensor(&[3, 3, 3], &mut rng);
        let want = hopm_oracle(&x, 100, 1000 + seed);
        let r = rank1_best(&x, &Rank1Options::default()).unwrap();
        assert!(
            (r.rho - want).abs() < 1e-6,
            "seed {seed}: {} vs {want}",
            r.rho
        );
        let refs: Vec<&[f64]> = r.vectors.iter().map(|v| v.as_slice()).collect();
        assert!((x.contract_all(&refs).unwrap() - r.rho).abs() < 1e-12);
    }
}

#[test]
fn rank1_dominates_random_probes() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let x = random_tensor(&[4, 3, 3], &mut rng);
    let r = rank1_best(&x, &Rank1Options::default()).unwrap();
    for _ in 0..100 {
        let vs: Vec<Vec<f64>> = x
            .shape()
            .iter()
            .map(|&d| gaussian_unit(d, &mut rng))
            .collect();
        let refs: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
        assert!(r.rho >= x.contract_all(&refs).unwrap().abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sign_flips_leave_reconstruction_unchanged(seed in any::<u64>(), flips in prop::collection::vec((0usize..3, 0usize..3), 1..6)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(&[3, 4, 2], &mut rng);
        let rep = cp_als(&x, &CpOptions { rank: 3, max_sweeps: 20, ..CpOptions::default() }).unwrap();
        let before = rep.factors.reconstruct().unwrap();
        let mut f = rep.factors.clone();
        for (k, mode) in flips {
            f.flip_into_weight(k, mode);
        }
        let after = f.reconstruct().unwrap();
        for (a, b) in before.data().iter().zip(after.data()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
