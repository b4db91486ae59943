//! Predictors and their training objectives.

pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
pub mod predictor;
pub mod train;

pub use checkpoint::{Checkpoint, CheckpointMeta, Link};
pub use gradcheck::finite_diff_check;
pub use loss::{
    assign_boundary, assign_chunks, distill_loss, logloss, ltr_target, ranknet_loss, ChunkScheme,
    LtrTarget,
};
pub use predictor::{nested_mask, Predictor, Workspace};
pub use train::{
    dataset_gradient, dataset_loss, train, Dataset, FeatureTable, Group, LossKind, Sample,
    TrainConfig, TrainOutcome,
};
