//! Optimization loop, early stopping and run artifacts.

mod early_stop;
mod trainer;

pub use crate::models::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use early_stop::{best_epoch, early_stop_check, EarlyStop};
pub use trainer::{
    clip_config_for, create_run_dir, train, EpochRecord, RunArtifacts, TrainConfig, TrainHistory, TrainOutcome,
    CHECKPOINT_FILE, HISTORY_FILE, TRAIN_CONFIG_FILE,
};
