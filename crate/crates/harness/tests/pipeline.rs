use std::collections::BTreeSet;

use tenscorr_harness::config::Config;
use tenscorr_harness::pipeline::{training_subset, STAGE_FIT};
use tenscorr_harness::{
    generate_synthetic, run_pipeline, AttributeDataset, AttributeRule, RenderSpec, SynthSpec,
};

fn micro() -> (Config, AttributeDataset) {
    let mut cfg = Config::default();
    cfg.model.preset = "toy".into();
    cfg.train.epochs = 2;
    cfg.train.batch_size = 8;
    cfg.head.max_iterations = 300;
    let spec = SynthSpec {
        latent_dim: 2,
        attributes: vec![
            AttributeRule {
                name: "p".into(),
                weights: vec![1.0, 0.0],
                threshold: 0.0,
            },
            AttributeRule {
                name: "q".into(),
                weights: vec![1.0, 1.0],
                threshold: 0.5,
            },
            AttributeRule {
                name: "r".into(),
                weights: vec![0.0, 1.0],
                threshold: -0.3,
            },
        ],
        label_noise: 0.1,
        render: RenderSpec {
            height: 16,
            width: 16,
            channels: 3,
            pixel_noise: 0.02,
        },
        train_fraction: 0.75,
        seed: 3,
    };
    let ds = generate_synthetic(&spec, 64).unwrap();
    (cfg, ds)
}

#[test]
fn micro_run_reports_both_variants_on_the_same_test_samples() {
    let (cfg, ds) = micro();
    let o = run_pipeline(&cfg, &ds).unwrap();
    assert_eq!(o.epochs.len(), 2);
    assert_eq!(o.test_indices.len(), 16);
    for r in [&o.without_ntcca, &o.with_ntcca, &o.majority] {
        assert_eq!(r.names, ds.names);
        assert_eq!(r.accuracies.len(), 3);
        // Every accuracy is a multiple of 1/16 of the test split.
        for a in &r.accuracies {
            let hits = a * 16.0 / 100.0;
            assert!((hits - hits.round()).abs() < 1e-9);
        }
        let mean = r.accuracies.iter().sum::<f64>() / 3.0;
        assert!((r.mean - mean).abs() < 1e-9);
    }
    assert!(o.head.final_loss <= o.head.initial_loss);
}

#[test]
fn splits_never_leak_into_training() {
    let (cfg, ds) = micro();
    let o = run_pipeline(&cfg, &ds).unwrap();
    let train: BTreeSet<_> = o.train_indices.iter().collect();
    let test: BTreeSet<_> = o.test_indices.iter().collect();
    let subset: BTreeSet<_> = o.subset_indices.iter().collect();
    assert!(train.is_disjoint(&test));
    assert!(subset.is_subset(&train));
    assert_eq!(subset.len(), 16); // ceil(48 / 3)
    assert_eq!(train.len() + test.len(), ds.len());
}

#[test]
fn fixed_seeds_give_identical_reports() {
    let (cfg, ds) = micro();
    let a = run_pipeline(&cfg, &ds).unwrap();
    let b = run_pipeline(&cfg, &ds).unwrap();
    assert_eq!(a.without_ntcca, b.without_ntcca);
    assert_eq!(a.with_ntcca, b.with_ntcca);
    assert_eq!(a.network.checksum(), b.network.checksum());
    assert_eq!(a.basis, b.basis);
    assert_eq!(a.head.head, b.head.head);
}

#[test]
fn subset_is_a_uniform_third_independent_of_other_seeds() {
    let train: Vec<usize> = (0..300).collect();
    let a = training_subset(&train, 1.0 / 3.0, 1);
    assert_eq!(a.len(), 100);
    assert_eq!(a, training_subset(&train, 1.0 / 3.0, 1));
    assert_ne!(a, training_subset(&train, 1.0 / 3.0, 2));
    assert!(a.windows(2).all(|w| w[0] < w[1]));
    // Not simply the leading third.
    assert!(*a.last().unwrap() > 150);
}

#[test]
fn failures_name_their_stage() {
    let (mut cfg, ds) = micro();
    cfg.ntcca.groups = Some(vec![vec![0], vec![999]]);
    let e = run_pipeline(&cfg, &ds).unwrap_err();
    assert!(e.to_string().starts_with(STAGE_FIT), "{e}");
}

#[test]
fn mismatched_dataset_is_a_validation_error() {
    let (cfg, ds) = micro();
    let mut desk = cfg.clone();
    desk.model.preset = "desk".into();
    let e = run_pipeline(&desk, &ds).unwrap_err();
    assert!(e.is_validation());
    let mut bad = cfg;
    bad.model.preset = "huge".into();
    assert!(run_pipeline(&bad, &ds).unwrap_err().is_validation());
}

#[test]
fn config_round_trips_and_seeds_propagate() {
    let cfg = Config::from_toml("seed = 9\n[train]\nepochs = 3\n").unwrap();
    assert_eq!(cfg.train.epochs, 3);
    assert_eq!(
        cfg.train.learning_rate,
        Config::default().train.learning_rate
    );
    assert_eq!(cfg.train.seed, 9);
    assert_eq!(cfg.synth.spec.seed, 9);
    let pinned = Config::from_toml("seed = 9\n[train]\nseed = 4\n").unwrap();
    assert_eq!(pinned.train.seed, 4);
    assert_eq!(pinned.synth.spec.seed, 9);
    assert_eq!(Config::from_toml(&cfg.to_toml()).unwrap(), cfg);
    assert!(Config::from_toml("[train]\nepoch = 3\n").is_err());
}
