//! Adam, reduce-on-plateau scheduling, best-loss checkpointing and the epoch loop.

mod adam;
mod checkpoint;
mod history;
mod plateau;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::CheckpointState;
pub use history::{EpochRecord, TrainHistory, HISTORY_COLUMNS};
pub use plateau::{PlateauConfig, PlateauState};
pub use train::{evaluate, train, Evaluation, LabeledSet, TrainConfig, TrainOutcome};
