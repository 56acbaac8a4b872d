//! Optimization loop, optimizer state and checkpointing.

pub mod adam;
pub mod checkpoint;
pub mod fit;

pub use adam::{adam_step, AdamParams, AdamState};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, TrainProgress, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use fit::{
    transcribe, validation_cer, EarlyStopper, EpochRecord, FitSession, TrainConfig, TrainReport,
    WeightPolicy,
};
