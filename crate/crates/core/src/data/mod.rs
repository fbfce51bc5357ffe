//! Sample registry, stratified splits, prediction tables and the synthetic
//! base-learner generator.

mod predictions;
mod registry;
mod split;
mod synth;

pub use predictions::PredictionTable;
pub use registry::{Registry, SampleRecord, NORMAL, POSITIVE};
pub use split::{stratified_split, subdivide_validation, SplitAssignment, SplitRatios};
pub use synth::{
    accuracy_for_noise, noise_for_accuracy, synth_base_learners, BayesCombiner, SynthConfig,
    SynthModel,
};
