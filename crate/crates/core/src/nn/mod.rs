//! Feed-forward network engine with analytic gradients for dense, ReLU,
//! sigmoid, inverted-dropout and batch-norm layers.

mod backward;
mod forward;
mod gradcheck;
mod layer;
mod loss;
mod network;
mod serialize;

pub use backward::{Gradients, LayerGrads};
pub use forward::{sigmoid, BatchNormCache, ForwardTrace, LayerTrace, Mode};
pub use gradcheck::{finite_diff_check, finite_diff_report, GradCheckReport};
pub use layer::LayerSpec;
pub use loss::{bce_loss, PROB_CLAMP};
pub use network::{LayerParams, NetworkState, BN_EPSILON, BN_MOMENTUM};
pub use serialize::{WEIGHT_FORMAT, WEIGHT_FORMAT_VERSION};

use crate::error::Result;

/// The stacking meta-learner for `input_dim` base models.
pub fn make_meta_network(input_dim: usize, seed: u64) -> Result<NetworkState> {
    NetworkState::meta_network(input_dim, seed)
}

/// The per-backbone classification head over `feature_dim` features.
pub fn make_head_network(feature_dim: usize, seed: u64) -> Result<NetworkState> {
    NetworkState::head_network(feature_dim, seed)
}
