//! Pre-training loops, learning-rate schedule and checkpoints.

mod checkpoint;
mod config;
mod trainer;

pub use checkpoint::{Checkpoint, UCKP_MAGIC, UCKP_VERSION};
pub use config::{lr_at_epoch, TrainConfig, TrainMode};
pub use trainer::{
    intra_components, pretrain_baseline, pretrain_umurl, trace_series, trace_to_csv, TraceRecord, TrainOutcome,
    Trainer,
};
