//! Dense tensor algebra, CP decomposition by alternating least squares and
//! tensor canonical correlation analysis (TCCA).
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, which is what the rest of the
//! workspace uses.

pub mod cp;
pub mod error;
pub mod io;
pub mod matrix;
pub mod scalar;
pub mod tcca;
pub mod tensor;

pub use cp::{cp_als, rank1_best, CpFactors, CpOptions, CpReport, Rank1, Rank1Options};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;
pub use tcca::{
    canonical_correlation, covariance_tensor, covariances, project, tcca_fit, CanonicalBasis,
    ProjectedViews, TccaFit, TccaOptions, ViewSet, WhiteningStats,
};
pub use tensor::{outer_product, DenseTensor};

pub type Tensor = DenseTensor<f64>;
pub type Mat = Matrix<f64>;
pub type Factors = CpFactors<f64>;
pub type Views = ViewSet<f64>;
pub type Whitening = WhiteningStats<f64>;
pub type Basis = CanonicalBasis<f64>;
pub type Projected = ProjectedViews<f64>;
