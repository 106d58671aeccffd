//! Corpus ingestion, degradation, augmentation and the training stages.

mod corpus;
mod resample;
mod train;
mod validate;

pub use corpus::{augment, lr_cache_dir, sample_batch, Augmentation, Corpus, DatasetIndex, ImagePair, Split};
pub use resample::{bicubic_downsample, bicubic_resize, bicubic_upsample, cubic_kernel};
pub use train::{
    accumulate_gradients, compute_ic_targets, objective, targets_from_outputs, train, train_base,
    train_joint, train_multiexit, IcTargets, Objective, StepLog, TrainConfig, TrainReport,
};
pub use validate::{validate, ValidationReport};

#[cfg(test)]
mod tests;
