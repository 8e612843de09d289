use tenscorr_harness::{
    generate_synthetic, save_dataset, AttributeRule, RenderSpec, Split, SynthSpec,
};

fn rule(name: &str, weights: &[f64], threshold: f64) -> AttributeRule {
    AttributeRule {
        name: name.into(),
        weights: weights.to_vec(),
        threshold,
    }
}

fn small_render() -> RenderSpec {
    RenderSpec {
        height: 8,
        width: 8,
        channels: 1,
        pixel_noise: 0.0,
    }
}

fn column(labels: &tenscorr_core::Mat, j: usize) -> Vec<f64> {
    (0..labels.rows()).map(|i| labels[(i, j)]).collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn identical_noiseless_rules_give_identical_labels() {
    let spec = SynthSpec {
        latent_dim: 1,
        attributes: vec![rule("a", &[1.0], 0.2), rule("b", &[1.0], 0.2)],
        label_noise: 0.0,
        render: small_render(),
        train_fraction: 0.5,
        seed: 4,
    };
    let ds = generate_synthetic(&spec, 500).unwrap();
    let (a, b) = (column(&ds.labels, 0), column(&ds.labels, 1));
    assert_eq!(a, b);
    assert!((pearson(&a, &b) - 1.0).abs() < 1e-12);
}

#[test]
fn fixed_seed_gives_byte_identical_files() {
    let spec = SynthSpec::default();
    let a = generate_synthetic(&spec, 40).unwrap();
    let b = generate_synthetic(&spec, 40).unwrap();
    assert_eq!(a, b);
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    save_dataset(da.path(), &a).unwrap();
    save_dataset(db.path(), &b).unwrap();
    for f in ["labels.txt", "split.txt", "images/s00", "images/s39"] {
        assert_eq!(
            std::fs::read(da.path().join(f)).unwrap(),
            std::fs::read(db.path().join(f)).unwrap()
        );
    }
    let other = generate_synthetic(&SynthSpec { seed: 2, ..spec }, 40).unwrap();
    assert_ne!(a.labels, other.labels);
}

/// With zero thresholds, `uᵢ = wᵢᵀz + σεᵢ` are jointly Gaussian and the
/// indicator correlation is `(2/π)·asin(ρᵢⱼ)` with
/// `ρᵢⱼ = wᵢᵀwⱼ / √((‖wᵢ‖² + σ²)(‖wⱼ‖² + σ²))`.
#[test]
fn attribute_correlations_match_the_latent_model() {
    let sigma = 0.4;
    let rules = vec![
        rule("a", &[1.0, 0.0, 0.0], 0.0),
        rule("b", &[0.8, 0.6, 0.0], 0.0),
        rule("c", &[0.0, 1.0, -0.5], 0.0),
        rule("d", &[0.3, 0.0, 1.0], 0.0),
    ];
    let spec = SynthSpec {
        latent_dim: 3,
        attributes: rules.clone(),
        label_noise: sigma,
        render: small_render(),
        train_fraction: 1.0,
        seed: 8,
    };
    let ds = generate_synthetic(&spec, 10_000).unwrap();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    for i in 0..rules.len() {
        for j in i + 1..rules.len() {
            let (wi, wj) = (&rules[i].weights, &rules[j].weights);
            let rho = dot(wi, wj)
                / ((dot(wi, wi) + sigma * sigma) * (dot(wj, wj) + sigma * sigma)).sqrt();
            let want = 2.0 / std::f64::consts::PI * rho.asin();
            let got = pearson(&column(&ds.labels, i), &column(&ds.labels, j));
            assert!((got - want).abs() < 0.05, "({i}, {j}): {got} vs {want}");
        }
    }
}

#[test]
fn images_encode_latents_and_stay_in_range() {
    let spec = SynthSpec::default();
    let ds = generate_synthetic(&spec, 200).unwrap();
    assert_eq!(ds.images.dims(), [32, 32, 3]);
    assert!(ds.images.data().iter().all(|v| (0.0..=1.0).contains(v)));
    // Brightness of the first disc's cell tracks attribute a0, which
    // thresholds the first latent.
    let mean_cell = |i: usize| {
        let img = ds.images.image(i);
        let mut s = 0.0;
        for y in 0..16 {
            for x in 0..16 {
                s += img[(y * 32 + x) * 3];
            }
        }
        s
    };
    let (mut on, mut off, mut n_on, mut n_off) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..ds.len() {
        if ds.labels[(i, 0)] == 1.0 {
            on += mean_cell(i);
            n_on += 1.0;
        } else {
            off += mean_cell(i);
            n_off += 1.0;
        }
    }
    assert!(on / n_on > 1.5 * off / n_off);
}

#[test]
fn splits_follow_the_train_fraction() {
    let ds = generate_synthetic(&SynthSpec::default(), 100).unwrap();
    assert_eq!(ds.indices(Split::Train), (0..70).collect::<Vec<_>>());
    assert_eq!(ds.indices(Split::Test), (70..100).collect::<Vec<_>>());
    assert!(ds.indices(Split::Val).is_empty());
}

#[test]
fn invalid_specs_are_rejected() {
    let base = SynthSpec::default();
    assert!(generate_synthetic(&base, 0).is_err());
    let mut s = base.clone();
    s.attributes.truncate(1);
    assert!(generate_synthetic(&s, 10).is_err());
    let mut s = base.clone();
    s.attributes[0].weights.pop();
    assert!(generate_synthetic(&s, 10).is_err());
    // No shared latent anywhere.
    let s = SynthSpec {
        latent_dim: 2,
        attributes: vec![rule("a", &[1.0, 0.0], 0.0), rule("b", &[0.0, 1.0], 0.0)],
        ..base.clone()
    };
    assert!(generate_synthetic(&s, 10).is_err());
    let mut s = base;
    s.label_noise = -1.0;
    assert!(generate_synthetic(&s, 10).is_err());
}
