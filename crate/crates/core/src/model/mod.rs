//! The TransDOA estimator: SCM embedding, a pre-norm transformer encoder,
//! a linear DOA head on the aggregated token, and PIT training.

mod checkpoint;
mod config;
mod forward;
mod params;
mod pit;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint};
pub use config::{ModelConfig, OutputMode};
pub use forward::{embed_scm, feature_extract, forward, forward_batch, mhsa, predict, Estimate, ForwardOutput};
pub(crate) use forward::{encode, leaves};
pub use params::{LayerParams, Net, TransDoaParams};
pub use pit::{pit_assignment, pit_loss_1d, pit_loss_2d, pit_targets};
pub use train::{evaluate_loss, loss_gradient, train, train_subset, EpochRecord, TrainConfig, TrainOutcome};
