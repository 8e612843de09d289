use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tenscorr_core::Matrix;
use tenscorr_mtcn::{
    backward, forward, gradcheck, loss_and_gradients, ArchitectureSpec, Batch, FusionLayer,
    GradcheckOptions, Images, InitScheme, Mode, NetworkState,
};

fn random_batch(arch: &ArchitectureSpec, n: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per = arch.input_height * arch.input_width * arch.input_channels;
    let data = (0..n * per).map(|_| rng.random::<f64>()).collect();
    let labels = Matrix::from_fn(n, arch.subnetworks, |_, _| f64::from(rng.random::<bool>()));
    let images = Images::new(
        n,
        arch.input_height,
        arch.input_width,
        arch.input_channels,
        data,
    )
    .unwrap();
    Batch::new(images, labels).unwrap()
}

/// He-initialized weights with small random biases, so that no unit sits
/// exactly on a ReLU kink.
fn toy_state(arch: &ArchitectureSpec, seed: u64) -> NetworkState {
    let mut s = NetworkState::init(arch, InitScheme::He, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    for (_, p) in s.params_mut() {
        for b in &mut p.b {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    s
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let arch = ArchitectureSpec::toy();
    let state = toy_state(&arch, 7);
    let batch = random_batch(&arch, 3, 8);
    let report = gradcheck(&state, &arch, &batch, &GradcheckOptions::default()).unwrap();
    assert_eq!(report.tensors.len(), 2 * state.params().len());
    for t in &report.tensors {
        assert!(t.checked > 0);
        assert!(
            t.max_rel_error < 1e-4,
            "{}: relative error {:.3e} (abs {:.3e})",
            t.name,
            t.max_rel_error,
            t.max_abs_error
        );
    }
    assert!(report.passed());
}

#[test]
fn gradients_match_without_fusion_and_with_single_fusion() {
    for fusion in [vec![], vec![FusionLayer::C7], vec![FusionLayer::C9]] {
        let mut arch = ArchitectureSpec::toy();
        arch.fusion = fusion.clone();
        let state = toy_state(&arch, 17);
        let batch = random_batch(&arch, 2, 18);
        let opts = GradcheckOptions {
            max_entries: Some(40),
            ..GradcheckOptions::default()
        };
        let report = gradcheck(&state, &arch, &batch, &opts).unwrap();
        assert!(
            report.passed(),
            "fusion {fusion:?}: worst {:.3e}",
            report.worst()
        );
    }
}

#[test]
fn zero_output_gradient_gives_zero_parameter_gradients() {
    let arch = ArchitectureSpec::toy();
    let state = toy_state(&arch, 3);
    let batch = random_batch(&arch, 2, 4);
    let fwd = forward(&state, &arch, &batch.images, Mode::Eval).unwrap();
    // Labels equal to the probabilities make every ∂C/∂logit vanish.
    let g = backward(&state, &arch, &fwd, &fwd.probabilities, None).unwrap();
    assert_eq!(g.max_abs(), 0.0);
}

#[test]
fn shared_trunk_gradient_is_sum_of_per_attribute_gradients() {
    let mut arch = ArchitectureSpec::toy();
    arch.dropout = 0.5;
    let state = toy_state(&arch, 5);
    let batch = random_batch(&arch, 5, 6);
    let mode = Mode::Train { seed: 99 };
    let (_, joint) = loss_and_gradients(&state, &arch, &batch, mode, None).unwrap();
    let mut summed = state.zeros_like();
    for i in 0..arch.subnetworks {
        let mut w = vec![0.0; arch.subnetworks];
        w[i] = 1.0;
        let (_, gi) = loss_and_gradients(&state, &arch, &batch, mode, Some(&w)).unwrap();
        summed.add_scaled(1.0, &gi);
    }
    for (name, a, b) in [("c1", &joint.c1, &summed.c1), ("c3", &joint.c3, &summed.c3)] {
        let scale = a.w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(scale > 0.0, "{name} gradient vanished");
        for (x, y) in a.w.iter().chain(&a.b).zip(b.w.iter().chain(&b.b)) {
            assert!((x - y).abs() <= 1e-10, "{name}: {x} vs {y}");
        }
    }
}

#[test]
fn a_single_loss_reaches_other_subnetworks_only_through_fusion() {
    let batch_arch = ArchitectureSpec::toy();
    let batch = random_batch(&batch_arch, 3, 21);
    let w = [1.0, 0.0, 0.0];
    // Without fusion, loss 0 never touches subnetwork 1.
    let mut plain = ArchitectureSpec::toy();
    plain.fusion.clear();
    let s = toy_state(&plain, 22);
    let (_, g) = loss_and_gradients(&s, &plain, &batch, Mode::Eval, Some(&w)).unwrap();
    assert_eq!(
        g.subnets[1].c5.w.iter().fold(0.0f64, |m, x| m.max(x.abs())),
        0.0
    );
    // With C9 fusion it reaches subnetwork 1's C7 and C5 but not its head.
    let mut fused = ArchitectureSpec::toy();
    fused.fusion = vec![FusionLayer::C9];
    let s = toy_state(&fused, 22);
    let (_, g) = loss_and_gradients(&s, &fused, &batch, Mode::Eval, Some(&w)).unwrap();
    assert!(g.subnets[1].c7.w.iter().any(|x| *x != 0.0));
    assert!(g.subnets[1].c5.w.iter().any(|x| *x != 0.0));
    assert!(g.subnets[1].c9.w.iter().all(|x| *x == 0.0));
    assert!(g.subnets[1].f10.w.iter().all(|x| *x == 0.0));
}

#[test]
fn saturated_outputs_still_check() {
    // Large output weights push sigmoids to 0 or 1, where a clamped
    // probability loss would go flat while p − y does not.
    let arch = ArchitectureSpec::toy();
    let mut state = toy_state(&arch, 31);
    for sub in &mut state.subnets {
        for w in &mut sub.out.w {
            *w *= 30.0;
        }
    }
    let batch = random_batch(&arch, 3, 32);
    let p = tenscorr_mtcn::predict(&state, &arch, &batch.images).unwrap();
    assert!(
        p.as_slice().iter().any(|&v| v < 1e-12 || v > 1.0 - 1e-12),
        "{p:?}"
    );
    let opts = GradcheckOptions {
        max_entries: Some(30),
        ..GradcheckOptions::default()
    };
    let report = gradcheck(&state, &arch, &batch, &opts).unwrap();
    assert!(report.passed(), "worst {:.3e}", report.worst());
}
