//! A multi-task convolutional network for binary attributes.
//!
//! A shared trunk (C1, S2, C3, S4) feeds `K` subnetworks, one per
//! attribute. Subnetworks exchange information at fusion layers: the input
//! of subnetwork `i`'s C7 (or C9) convolution is the sum of every
//! subnetwork's preceding maps, convolved with `i`'s own kernels. Each
//! subnetwork ends in one sigmoid unit trained with binary cross-entropy.
//!
//! Gradients are written out by hand; [`gradcheck`] compares them with
//! central finite differences.

pub mod arch;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
mod layers;
pub mod net;
pub mod state;
pub mod train;

pub use arch::{ArchitectureSpec, ConvSpec, FusionLayer, LrnSpec, PoolSpec, Shapes};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use error::{Error, Result};
pub use gradcheck::{gradcheck, GradcheckOptions, GradcheckReport, GRADCHECK_TOLERANCE};
pub use net::{
    backward, extract_c9_batch, extract_c9_features, forward, loss, loss_and_gradients,
    loss_from_logits, predict, predict_logits, sgd_step, Batch, Forward, Images, LossReport, Mode,
};
pub use state::{Gradients, InitScheme, NetworkState, Param, SubnetParams};
pub use train::{train, EpochStats, TrainConfig};
