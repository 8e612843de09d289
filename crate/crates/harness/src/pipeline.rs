//! The three-step procedure: train the network, fit the correlation basis
//! and output head on a third of the training split with the network
//! frozen, then evaluate both predictors on the test split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tenscorr_core::{Mat, Matrix};
use tenscorr_mtcn::{
    extract_c9_batch, predict, train, ArchitectureSpec, EpochStats, Images, NetworkState,
};
use tenscorr_ntcca::{
    build_feature_tensor, fit_ntcca, ntcca_project_all, train_generalization_head, FeatureTensor,
    GeneralizationHead, HeadReport, NtccaBasis,
};

use crate::config::Config;
use crate::dataset::{AttributeDataset, Split};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

pub const STAGE_TRAIN: &str = "step 1 (network training)";
pub const STAGE_FIT: &str = "step 2 (basis and head fitting)";
pub const STAGE_EVAL: &str = "step 3 (evaluation)";

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    /// The network's own sigmoid outputs, thresholded.
    pub without_ntcca: MetricsReport,
    /// The head on projected C9 features.
    pub with_ntcca: MetricsReport,
    /// Always predicting each attribute's more frequent test value.
    pub majority: MetricsReport,
    pub train_indices: Vec<usize>,
    pub subset_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub epochs: Vec<EpochStats>,
    pub arch: ArchitectureSpec,
    pub network: NetworkState,
    pub basis: NtccaBasis,
    pub head: HeadReport,
}

/// Checks that `ds` fits `arch`: image dimensions and one attribute per
/// subnetwork.
pub fn check_dataset(ds: &AttributeDataset, arch: &ArchitectureSpec) -> Result<()> {
    let want = [arch.input_height, arch.input_width, arch.input_channels];
    if ds.images.dims() != want {
        return Err(Error::Invalid(format!(
            "dataset images are {:?} but the architecture expects {want:?}",
            ds.images.dims()
        )));
    }
    if ds.attributes() != arch.subnetworks {
        return Err(Error::Invalid(format!(
            "dataset has {} attributes but the architecture has {} subnetworks",
            ds.attributes(),
            arch.subnetworks
        )));
    }
    Ok(())
}

/// `ceil(fraction · |train|)` training indices drawn uniformly with `seed`,
/// ascending.
pub fn training_subset(train: &[usize], fraction: f64, seed: u64) -> Vec<usize> {
    let take = ((fraction * train.len() as f64).ceil() as usize).clamp(1, train.len());
    let mut pool = train.to_vec();
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut s = pool[..take].to_vec();
    s.sort_unstable();
    s
}

pub fn feature_tensors(
    state: &NetworkState,
    arch: &ArchitectureSpec,
    images: &Images,
) -> Result<Vec<FeatureTensor>> {
    extract_c9_batch(state, arch, images)?
        .iter()
        .map(|maps| Ok(build_feature_tensor(maps)?))
        .collect()
}

pub fn threshold(p: &Mat, t: f64) -> Mat {
    Matrix::from_fn(p.rows(), p.cols(), |i, j| (p[(i, j)] >= t) as u8 as f64)
}

/// Step 2 on already-trained network: returns the basis and head.
pub fn fit_head(
    cfg: &Config,
    ds: &AttributeDataset,
    arch: &ArchitectureSpec,
    state: &NetworkState,
    subset: &[usize],
) -> Result<(NtccaBasis, HeadReport)> {
    let images = ds.images.select(subset)?;
    let feats = feature_tensors(state, arch, &images)?;
    let grouping = cfg.grouping(feats[0].subnetworks(), feats[0].maps());
    let basis = fit_ntcca(&feats, &grouping, &cfg.ntcca_options())?;
    let z = ntcca_project_all(&feats, &basis)?;
    let labels = ds.batch(subset)?.labels;
    let head = train_generalization_head(&z, &labels, &cfg.head)?;
    Ok((basis, head))
}

/// Thresholded head predictions for `images`.
pub fn predict_with_head(
    state: &NetworkState,
    arch: &ArchitectureSpec,
    basis: &NtccaBasis,
    head: &GeneralizationHead,
    images: &Images,
    t: f64,
) -> Result<Mat> {
    let feats = feature_tensors(state, arch, images)?;
    let z = ntcca_project_all(&feats, basis)?;
    Ok(threshold(&head.probabilities(&z)?, t))
}

pub fn run_pipeline(cfg: &Config, ds: &AttributeDataset) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let arch = cfg.architecture()?;
    check_dataset(ds, &arch)?;
    let train_idx = ds.indices(Split::Train);
    let test_idx = ds.indices(Split::Test);
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::Invalid(format!(
            "need both train and test samples, found {} and {}",
            train_idx.len(),
            test_idx.len()
        )));
    }

    let (network, epochs) = (|| -> Result<_> {
        let mut state = NetworkState::init(&arch, cfg.train.init, cfg.train.seed)?;
        let data = ds.batch(&train_idx)?;
        let epochs = train(
            &mut state,
            &arch,
            &data,
            &cfg.train.to_train_config(),
            |_| {},
        )?;
        Ok((state, epochs))
    })()
    .map_err(Error::in_stage(STAGE_TRAIN))?;

    let subset = training_subset(&train_idx, cfg.ntcca.subset_fraction, cfg.ntcca.subset_seed);
    let frozen = network.checksum();
    let (basis, head) =
        fit_head(cfg, ds, &arch, &network, &subset).map_err(Error::in_stage(STAGE_FIT))?;
    debug_assert_eq!(network.checksum(), frozen);

    let (without_ntcca, with_ntcca, majority) = (|| -> Result<_> {
        let test = ds.batch(&test_idx)?;
        let t = cfg.predict.threshold;
        let plain = threshold(&predict(&network, &arch, &test.images)?, t);
        let with = predict_with_head(&network, &arch, &basis, &head.head, &test.images, t)?;
        Ok((
            MetricsReport::from_predictions(ds.names.clone(), &plain, &test.labels)?,
            MetricsReport::from_predictions(ds.names.clone(), &with, &test.labels)?,
            MetricsReport::majority_baseline(ds.names.clone(), &test.labels)?,
        ))
    })()
    .map_err(Error::in_stage(STAGE_EVAL))?;

    Ok(PipelineOutcome {
        without_ntcca,
        with_ntcca,
        majority,
        train_indices: train_idx,
        subset_indices: subset,
        test_indices: test_idx,
        epochs,
        arch,
        network,
        basis,
        head,
    })
}
