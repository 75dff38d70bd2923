//! Observables, parameters, losses and gradients.

pub mod grad;
pub mod loss;
pub mod types;

pub use grad::{grad_block, Block, BlockGradient};
pub use loss::{
    composite_breakdown, composite_loss, loss_lr, loss_rel, loss_sim, loss_vmf, vmf_posterior, LossBreakdown,
    VmfPosterior,
};
pub use types::{
    Channel, CompositeWeights, FeatureUniverse, LabeledPair, ModelState, PriorMatrix, RelationalPairSet, SourceSet,
};
