//! Correlation analysis over the C9 feature maps of a trained multi-task
//! network, and a linear head that predicts every attribute jointly from
//! the projected features.
//!
//! # Views
//!
//! An image yields `K·L` maps of `κ × κ`. Treating each map as its own view
//! would need a covariance tensor of order `K·L`, far beyond what can be
//! stored, so maps are grouped: a view is the average of its member maps,
//! and by default each subnetwork forms one view (`G = K`). At most
//! [`MAX_GROUPS`] views are allowed. The `κ` columns of a view matrix are
//! its samples.
//!
//! # Projection
//!
//! For view `g`, `Z_g = X_gᵀ H_g` is `κ × r`. The per-image vector fed to
//! the head concatenates the row-major flattening of `Z_1, …, Z_G`, so its
//! length is `G·r·κ` for every image.

pub mod basis;
pub mod error;
pub mod features;
pub mod head;

pub use basis::{
    fit_ntcca, load_basis, ntcca_project, ntcca_project_all, pooled_correlation, pooled_views,
    project_blocks, save_basis, NtccaBasis, NtccaOptions,
};
pub use error::{Error, Result};
pub use features::{build_feature_tensor, FeatureTensor, Grouping, MAX_GROUPS};
pub use head::{
    load_head, objective, predict_attributes, save_head, train_generalization_head,
    GeneralizationHead, HeadConfig, HeadReport, Regularizer, StopReason,
};
