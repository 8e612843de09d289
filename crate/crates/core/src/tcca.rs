//! Multi-view covariance statistics, whitening and tensor canonical
//! correlation analysis.
//!
//! Views are `d_p × N` matrices whose columns are samples. Second moments are
//! raw (no mean subtraction) unless centering is requested.
//!
//! The whitened covariance tensor is
//! `M = C ×₁ W̃₁ ×₂ W̃₂ … ×_m W̃_m` with `W̃_p = (C_pp + εI)^{-1/2}`; its rank-`r`
//! CP decomposition gives the canonical correlations (weights) and the
//! whitened canonical directions `U_p` (factor matrices).
//!
//! Projected data are stored samples-as-rows: `Z_p` is `N × r` and the
//! concatenation is `N × (m·r)`.

use crate::cp::{cp_als, CpOptions, CpReport};
use crate::error::{Error, Result};
use crate::matrix::{sym_inv_sqrt, Matrix};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

/// Upper bound on the element count of a covariance tensor.
pub const COVARIANCE_TENSOR_LIMIT: u128 = 100_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ViewSet<T> {
    views: Vec<Matrix<T>>,
}

impl<T: Scalar> ViewSet<T> {
    pub fn new(views: Vec<Matrix<T>>) -> Result<Self> {
        let n = views.first().ok_or(Error::Empty("ViewSet"))?.cols();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "views need at least 2 samples, got {n}"
            )));
        }
        if let Some(v) = views.iter().find(|v| v.cols() != n) {
            return Err(Error::DimensionMismatch {
                op: "ViewSet::new",
                left: vec![n],
                right: v.shape().to_vec(),
            });
        }
        if views.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ViewSet"));
        }
        Ok(Self { views })
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn samples(&self) -> usize {
        self.views[0].cols()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.rows()).collect()
    }

    pub fn views(&self) -> &[Matrix<T>] {
        &self.views
    }

    /// Copy with each view's sample mean removed.
    pub fn centered(&self) -> Self {
        let views = self
            .views
            .iter()
            .map(|v| {
                let mu = row_means(v);
                Matrix::from_fn(v.rows(), v.cols(), |i, j| v[(i, j)] - mu[i])
            })
            .collect();
        Self { views }
    }
}

fn row_means<T: Scalar>(v: &Matrix<T>) -> Vec<T> {
    let n = T::count(v.cols());
    (0..v.rows())
        .map(|i| v.row(i).iter().copied().sum::<T>() / n)
        .collect()
}

/// Per-view covariance and whitening transform.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningStats<T> {
    /// Subtracted before every covariance and projection; all zeros when
    /// not centering.
    pub means: Vec<Vec<T>>,
    pub covariances: Vec<Matrix<T>>,
    pub epsilon: T,
    /// `(C_pp + εI)^{-1/2}` per view.
    pub whiteners: Vec<Matrix<T>>,
}

impl<T: Scalar> WhiteningStats<T> {
    pub fn views(&self) -> usize {
        self.whiteners.len()
    }

    pub fn regularized(&self, p: usize) -> Matrix<T> {
        let mut c = self.covariances[p].clone();
        for i in 0..c.rows() {
            c[(i, i)] += self.epsilon;
        }
        c
    }
}

/// `(1/N) A Bᵀ`, accumulated sample by sample in the same order as
/// [`covariance_tensor`] so the two agree bit for bit at order 2.
pub fn cross_covariance<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            op: "cross_covariance",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let (da, db, n) = (a.rows(), b.rows(), a.cols());
    let mut out = Matrix::zeros(da, db);
    for s in 0..n {
        for i in 0..da {
            let x = a[(i, s)];
            for j in 0..db {
                out[(i, j)] += x * b[(j, s)];
            }
        }
    }
    let nn = T::count(n);
    out.as_mut_slice().iter_mut().for_each(|x| *x = *x / nn);
    Ok(out)
}

/// Per-view covariances `C_pp = (1/N) X_p X_pᵀ` and their regularized
/// inverse square roots.
pub fn covariances<T: Scalar>(
    v: &ViewSet<T>,
    epsilon: T,
    center: bool,
) -> Result<WhiteningStats<T>> {
    if !(epsilon >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be >= 0, got {epsilon}"
        )));
    }
    let means: Vec<Vec<T>> = if center {
        v.views.iter().map(row_means).collect()
    } else {
        v.views.iter().map(|x| vec![T::zero(); x.rows()]).collect()
    };
    let data = if center { v.centered() } else { v.clone() };
    let mut covs = Vec::with_capacity(v.len());
    let mut whiteners = Vec::with_capacity(v.len());
    for x in &data.views {
        let c = cross_covariance(x, x)?;
        let mut reg = c.clone();
        for i in 0..reg.rows() {
            reg[(i, i)] += epsilon;
        }
        whiteners.push(sym_inv_sqrt(&reg)?);
        covs.push(c);
    }
    Ok(WhiteningStats {
        means,
        covariances: covs,
        epsilon,
        whiteners,
    })
}

/// Covariance tensor `(1/N) Σ_n x_{1n} ∘ x_{2n} ∘ … ∘ x_{mn}` of shape
/// `(d_1, …, d_m)`.
pub fn covariance_tensor<T: Scalar>(v: &ViewSet<T>) -> Result<DenseTensor<T>> {
    if v.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "covariance tensor needs at least 2 views, got {}",
            v.len()
        )));
    }
    let dims = v.dims();
    let elements = dims
        .iter()
        .fold(1u128, |acc, &d| acc.saturating_mul(d as u128));
    if elements > COVARIANCE_TENSOR_LIMIT {
        return Err(Error::SizeLimit {
            what: "covariance tensor",
            elements,
            limit: COVARIANCE_TENSOR_LIMIT,
        });
    }
    let mut out = DenseTensor::zeros(&dims)?;
    let m = dims.len();
    let n = v.samples();
    let mut idx = vec![0usize; m];
    // prefix[p] = ∏_{q<p} x_q[idx_q, s]; only the suffix that changed is
    // recomputed as the multi-index advances.
    let mut prefix = vec![T::one(); m + 1];
    for s in 0..n {
        idx.iter_mut().for_each(|i| *i = 0);
        for p in 0..m {
            prefix[p + 1] = prefix[p] * v.views[p][(0, s)];
        }
        for slot in out.data_mut().iter_mut() {
            *slot += prefix[m];
            let mut d = m;
            while d > 0 {
                d -= 1;
                idx[d] += 1;
                if idx[d] < dims[d] {
                    break;
                }
                idx[d] = 0;
            }
            for p in d..m {
                prefix[p + 1] = prefix[p] * v.views[p][(idx[p], s)];
            }
        }
    }
    let nn = T::count(n);
    out.data_mut().iter_mut().for_each(|x| *x = *x / nn);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TccaOptions {
    pub rank: usize,
    pub epsilon: f64,
    pub center: bool,
    pub cp: CpOptions,
}

impl Default for TccaOptions {
    fn default() -> Self {
        Self {
            rank: 1,
            epsilon: 1e-4,
            center: false,
            cp: CpOptions::default(),
        }
    }
}

/// Canonical directions per view.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalBasis<T> {
    /// Canonical correlations `ρ_1 ≥ ρ_2 ≥ …` (CP weights of the whitened tensor).
    pub correlations: Vec<T>,
    /// `U_p`, `d_p × r`, unit-norm columns, whitened coordinates.
    pub whitened: Vec<Matrix<T>>,
    /// `H_p = W̃_p U_p`, canonical vectors in the original coordinates.
    pub vectors: Vec<Matrix<T>>,
}

impl<T: Scalar> CanonicalBasis<T> {
    pub fn rank(&self) -> usize {
        self.correlations.len()
    }

    pub fn from_whitened(
        stats: &WhiteningStats<T>,
        correlations: Vec<T>,
        whitened: Vec<Matrix<T>>,
    ) -> Result<Self> {
        if whitened.len() != stats.views() {
            return Err(Error::DimensionMismatch {
                op: "CanonicalBasis",
                left: vec![stats.views()],
                right: vec![whitened.len()],
            });
        }
        let vectors = stats
            .whiteners
            .iter()
            .zip(&whitened)
            .map(|(w, u)| w.matmul(u))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            correlations,
            whitened,
            vectors,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TccaFit<T> {
    pub stats: WhiteningStats<T>,
    pub basis: CanonicalBasis<T>,
    pub cp: CpReport<T>,
}

/// The whitened covariance tensor `M`.
pub fn whitened_covariance_tensor<T: Scalar>(
    v: &ViewSet<T>,
    stats: &WhiteningStats<T>,
    center: bool,
) -> Result<DenseTensor<T>> {
    let c = if center {
        covariance_tensor(&v.centered())?
    } else {
        covariance_tensor(v)?
    };
    let ops: Vec<(&Matrix<T>, usize)> = stats
        .whiteners
        .iter()
        .enumerate()
        .map(|(p, w)| (w, p + 1))
        .collect();
    c.multi_mode_product(&ops)
}

pub fn tcca_fit<T: Scalar>(v: &ViewSet<T>, opts: &TccaOptions) -> Result<TccaFit<T>> {
    if opts.rank == 0 {
        return Err(Error::InvalidArgument("TCCA rank must be >= 1".into()));
    }
    let stats = covariances(v, T::lit(opts.epsilon), opts.center)?;
    let m = whitened_covariance_tensor(v, &stats, opts.center)?;
    let cp_opts = CpOptions {
        rank: opts.rank,
        ..opts.cp.clone()
    };
    let cp = cp_als(&m, &cp_opts)?;
    let basis = CanonicalBasis::from_whitened(
        &stats,
        cp.factors.weights().to_vec(),
        cp.factors.factors().to_vec(),
    )?;
    Ok(TccaFit { stats, basis, cp })
}

/// Per-view projections `Z_p = (X_p - μ_p)ᵀ W̃_p U_p`, each `N × r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedViews<T> {
    pub blocks: Vec<Matrix<T>>,
}

impl<T: Scalar> ProjectedViews<T> {
    pub fn samples(&self) -> usize {
        self.blocks[0].rows()
    }

    pub fn rank(&self) -> usize {
        self.blocks[0].cols()
    }

    /// Column-wise concatenation in view order, `N × (m·r)`.
    pub fn concatenated(&self) -> Matrix<T> {
        let r = self.rank();
        let m = self.blocks.len();
        Matrix::from_fn(self.samples(), m * r, |i, j| self.blocks[j / r][(i, j % r)])
    }
}

pub fn project<T: Scalar>(
    v: &ViewSet<T>,
    basis: &CanonicalBasis<T>,
    stats: &WhiteningStats<T>,
) -> Result<ProjectedViews<T>> {
    if v.len() != basis.vectors.len() || v.len() != stats.views() {
        return Err(Error::DimensionMismatch {
            op: "project",
            left: vec![v.len()],
            right: vec![basis.vectors.len(), stats.views()],
        });
    }
    let blocks = v
        .views
        .iter()
        .zip(&basis.vectors)
        .zip(&stats.means)
        .map(|((x, h), mu)| {
            if x.rows() != h.rows() || mu.len() != x.rows() {
                return Err(Error::DimensionMismatch {
                    op: "project",
                    left: x.shape().to_vec(),
                    right: h.shape().to_vec(),
                });
            }
            let xc = Matrix::from_fn(x.cols(), x.rows(), |s, i| x[(i, s)] - mu[i]);
            xc.matmul(h)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProjectedViews { blocks })
}

/// `(1/N)(z₁ ⊙ z₂ ⊙ … ⊙ z_m)ᵀ e` over column `component` (0-based) of
/// every block, `e` the all-ones vector. Each column is first rescaled so
/// that `zᵀz / N = 1`, the empirical form of the constraint
/// `hᵀ C_pp h = 1`; for the fitting data and small `ε` this reproduces the
/// fitted correlation for any number of views. A zero column gives 0.
pub fn canonical_correlation<T: Scalar>(z: &ProjectedViews<T>, component: usize) -> Result<T> {
    if component >= z.rank() {
        return Err(Error::InvalidArgument(format!(
            "component {component} out of range for rank {}",
            z.rank()
        )));
    }
    let n = T::count(z.samples());
    let cols: Vec<Vec<T>> = z.blocks.iter().map(|b| b.col(component)).collect();
    let mut scale = T::one();
    for c in &cols {
        let rms = crate::matrix::norm2(c) / n.sqrt();
        if rms == T::zero() {
            return Ok(T::zero());
        }
        scale *= rms;
    }
    let mut sum = T::zero();
    for s in 0..z.samples() {
        sum += cols.iter().fold(T::one(), |acc, c| acc * c[s]);
    }
    Ok(sum / n / scale)
}
