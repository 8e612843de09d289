//! Shared canonical basis over grouped feature maps.
//!
//! The covariance statistics of every image are averaged before solving,
//! which for raw moments is the same as treating the `κ` columns of every
//! image as one pooled sample set. One basis then serves all images.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tenscorr_core::io::{read_matrix, read_tensor, write_matrix, write_tensor};
use tenscorr_core::{
    canonical_correlation, project, tcca_fit, Basis, CanonicalBasis, CpOptions, DenseTensor, Mat,
    Matrix, Projected, TccaOptions, ViewSet, Whitening, WhiteningStats,
};

use crate::error::{Error, Result};
use crate::features::{FeatureTensor, Grouping};

#[derive(Clone, Debug)]
pub struct NtccaOptions {
    pub rank: usize,
    pub epsilon: f64,
    pub center: bool,
    pub cp: CpOptions,
}

impl Default for NtccaOptions {
    fn default() -> Self {
        NtccaOptions {
            rank: 2,
            epsilon: 1e-4,
            center: false,
            cp: CpOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NtccaBasis {
    pub subnetworks: usize,
    pub maps: usize,
    pub kappa: usize,
    pub grouping: Grouping,
    pub stats: Whitening,
    pub basis: Basis,
}

impl NtccaBasis {
    /// Length `G·r·κ` of every projected vector.
    pub fn dim(&self) -> usize {
        self.grouping.len() * self.basis.rank() * self.kappa
    }

    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    pub fn correlations(&self) -> &[f64] {
        &self.basis.correlations
    }

    /// Assembles a basis from explicit whitened directions `U_g`.
    pub fn from_parts(
        like: &FeatureTensor,
        grouping: Grouping,
        stats: Whitening,
        correlations: Vec<f64>,
        whitened: Vec<Mat>,
    ) -> Result<Self> {
        grouping.validate(like.subnetworks() * like.maps())?;
        let basis = CanonicalBasis::from_whitened(&stats, correlations, whitened)?;
        Ok(NtccaBasis {
            subnetworks: like.subnetworks(),
            maps: like.maps(),
            kappa: like.kappa(),
            grouping,
            stats,
            basis,
        })
    }

    fn check(&self, f: &FeatureTensor) -> Result<()> {
        if (f.subnetworks(), f.maps(), f.kappa()) != (self.subnetworks, self.maps, self.kappa) {
            return Err(Error::Shape(format!(
                "feature tensor (K={}, L={}, κ={}) does not match basis (K={}, L={}, κ={})",
                f.subnetworks(),
                f.maps(),
                f.kappa(),
                self.subnetworks,
                self.maps,
                self.kappa
            )));
        }
        Ok(())
    }
}

fn same_layout(features: &[FeatureTensor]) -> Result<&FeatureTensor> {
    let first = features
        .first()
        .ok_or_else(|| Error::InvalidArgument("no feature tensors to fit".into()))?;
    let key = |f: &FeatureTensor| (f.subnetworks(), f.maps(), f.kappa());
    if let Some(i) = features.iter().position(|f| key(f) != key(first)) {
        return Err(Error::Shape(format!(
            "feature tensor {i} differs in shape from tensor 0"
        )));
    }
    Ok(first)
}

/// Views pooled over images: view `g` is `κ × (n·κ)`, image after image.
pub fn pooled_views(features: &[FeatureTensor], grouping: &Grouping) -> Result<ViewSet<f64>> {
    let first = same_layout(features)?;
    let kappa = first.kappa();
    let g = grouping.len();
    let n = features.len();
    let mut views: Vec<Mat> = vec![Matrix::zeros(kappa, n * kappa); g];
    for (i, f) in features.iter().enumerate() {
        for (v, x) in views.iter_mut().zip(grouping.views(f)?) {
            for a in 0..kappa {
                for j in 0..kappa {
                    v.as_mut_slice()[a * n * kappa + i * kappa + j] = x[(a, j)];
                }
            }
        }
    }
    Ok(ViewSet::new(views)?)
}

/// Fits one canonical basis over all `features`.
pub fn fit_ntcca(
    features: &[FeatureTensor],
    grouping: &Grouping,
    opts: &NtccaOptions,
) -> Result<NtccaBasis> {
    let first = same_layout(features)?;
    if first.kappa() < 2 {
        return Err(Error::InvalidArgument(format!(
            "feature maps of side {} give fewer than two samples per image",
            first.kappa()
        )));
    }
    grouping.validate(first.subnetworks() * first.maps())?;
    let views = pooled_views(features, grouping)?;
    let fit = tcca_fit(
        &views,
        &TccaOptions {
            rank: opts.rank,
            epsilon: opts.epsilon,
            center: opts.center,
            cp: opts.cp.clone(),
        },
    )?;
    Ok(NtccaBasis {
        subnetworks: first.subnetworks(),
        maps: first.maps(),
        kappa: first.kappa(),
        grouping: grouping.clone(),
        stats: fit.stats,
        basis: fit.basis,
    })
}

/// Per-view blocks `Z_g = (X_g − μ_g)ᵀ H_g`, each `κ × r`.
pub fn project_blocks(f: &FeatureTensor, b: &NtccaBasis) -> Result<Projected> {
    b.check(f)?;
    let views = ViewSet::new(b.grouping.views(f)?)?;
    Ok(project(&views, &b.basis, &b.stats)?)
}

/// The blocks of [`project_blocks`] flattened row by row and concatenated
/// in view order; always `G·r·κ` long.
pub fn ntcca_project(f: &FeatureTensor, b: &NtccaBasis) -> Result<Vec<f64>> {
    let z = project_blocks(f, b)?;
    Ok(z.blocks
        .iter()
        .flat_map(|m| m.as_slice().iter().copied())
        .collect())
}

/// [`ntcca_project`] for every image, one row each.
pub fn ntcca_project_all(features: &[FeatureTensor], b: &NtccaBasis) -> Result<Mat> {
    let mut data = Vec::with_capacity(features.len() * b.dim());
    for f in features {
        data.extend(ntcca_project(f, b)?);
    }
    Ok(Matrix::from_vec(features.len(), b.dim(), data)?)
}

/// Canonical correlation of component `k` over the pooled projections of
/// `features`.
pub fn pooled_correlation(
    features: &[FeatureTensor],
    b: &NtccaBasis,
    component: usize,
) -> Result<f64> {
    let views = pooled_views(features, &b.grouping)?;
    let z = project(&views, &b.basis, &b.stats)?;
    Ok(canonical_correlation(&z, component)?)
}

pub const BASIS_VERSION: &str = "tenscorr-ntcca-basis 1";

#[derive(Serialize, Deserialize)]
struct BasisMeta {
    version: String,
    subnetworks: usize,
    maps: usize,
    kappa: usize,
    epsilon: f64,
    groups: Vec<Vec<usize>>,
}

/// Writes `meta.toml` plus one tensor file per matrix into `dir`.
pub fn save_basis(dir: impl AsRef<Path>, b: &NtccaBasis) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let meta = BasisMeta {
        version: BASIS_VERSION.into(),
        subnetworks: b.subnetworks,
        maps: b.maps,
        kappa: b.kappa,
        epsilon: b.stats.epsilon,
        groups: b.grouping.groups.clone(),
    };
    let text = toml::to_string(&meta).map_err(|e| Error::Persist {
        path: dir.display().to_string(),
        reason: e.to_string(),
    })?;
    fs::write(dir.join("meta.toml"), text)?;
    write_tensor(
        dir.join("correlations"),
        &DenseTensor::new(vec![b.rank()], b.basis.correlations.clone())?,
    )?;
    for g in 0..b.grouping.len() {
        write_tensor(
            dir.join(format!("mean{g}")),
            &DenseTensor::new(vec![b.kappa], b.stats.means[g].clone())?,
        )?;
        write_matrix(dir.join(format!("cov{g}")), &b.stats.covariances[g])?;
        write_matrix(dir.join(format!("whitener{g}")), &b.stats.whiteners[g])?;
        write_matrix(dir.join(format!("u{g}")), &b.basis.whitened[g])?;
    }
    Ok(())
}

pub fn load_basis(dir: impl AsRef<Path>) -> Result<NtccaBasis> {
    let dir = dir.as_ref();
    let bad = |reason: String| Error::Persist {
        path: dir.display().to_string(),
        reason,
    };
    let meta: BasisMeta = toml::from_str(&fs::read_to_string(dir.join("meta.toml"))?)
        .map_err(|e| bad(e.to_string()))?;
    if meta.version != BASIS_VERSION {
        return Err(bad(format!("unsupported version `{}`", meta.version)));
    }
    let grouping = Grouping {
        groups: meta.groups,
    };
    grouping.validate(meta.subnetworks * meta.maps)?;
    let correlations = read_tensor::<f64>(dir.join("correlations"))?.into_data();
    let g = grouping.len();
    let mut means = Vec::with_capacity(g);
    let mut covariances = Vec::with_capacity(g);
    let mut whiteners = Vec::with_capacity(g);
    let mut whitened = Vec::with_capacity(g);
    for i in 0..g {
        means.push(read_tensor::<f64>(dir.join(format!("mean{i}")))?.into_data());
        covariances.push(read_matrix(dir.join(format!("cov{i}")))?);
        whiteners.push(read_matrix(dir.join(format!("whitener{i}")))?);
        whitened.push(read_matrix::<f64>(dir.join(format!("u{i}")))?);
    }
    let k = meta.kappa;
    let r = correlations.len();
    let ok = means.iter().all(|m| m.len() == k)
        && covariances
            .iter()
            .chain(&whiteners)
            .all(|m| m.shape() == [k, k])
        && whitened.iter().all(|m| m.shape() == [k, r]);
    if !ok {
        return Err(bad("stored matrices disagree with κ and rank".into()));
    }
    let stats = WhiteningStats {
        means,
        covariances,
        epsilon: meta.epsilon,
        whiteners,
    };
    let basis = CanonicalBasis::from_whitened(&stats, correlations, whitened)?;
    Ok(NtccaBasis {
        subnetworks: meta.subnetworks,
        maps: meta.maps,
        kappa: k,
        grouping,
        stats,
        basis,
    })
}
