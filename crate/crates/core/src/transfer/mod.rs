//! Transfer-learning calibration: paired ideal/imperfect data, feature
//! alignment losses and the alignment training loop, plus the fine-tune and
//! train-from-scratch comparison arms.

mod losses;
mod pairs;
mod train;

pub use losses::{loss_cos, loss_mse, loss_total};
pub use pairs::{decode_pairs, encode_pairs, make_pairs, read_pairs, write_pairs, PairedDataset, PairedSample};
pub use train::{
    direct_train_baseline, finetune_baseline, head_mask, transfer_train, HeadPolicy, TransferConfig, TransferEpoch,
    TransferOutcome,
};
