//! Framework-free handwritten-text-line recognition engine.
//!
//! A line image becomes a width-major sequence of pixel-column frames, runs
//! through a stack of 1D convolution blocks with dense residual connections
//! and squeeze-and-excitation gating, and is trained end to end with CTC.
//! Decoding is greedy; evaluation is case-sensitive character error rate.
//!
//! The numeric core is self-contained: forward passes and hand-written
//! vector-Jacobian products over plain `f32` tensors, no tensor framework.
//! Everything stochastic is seeded, and identical seeds reproduce runs bit
//! for bit on the same build.

pub mod augment;
pub mod ctc;
pub mod data;
pub mod error;
pub mod eval;
pub mod image;
pub mod layers;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod tensor;
pub mod train;

pub use augment::{taco, CorruptionKind, TacoConfig, TacoOrientation};
pub use ctc::{batch_ctc, ctc_brute_force, ctc_loss, greedy_decode, CtcTable};
pub use data::{
    few_shot_subset, load_manifest, make_batch, preprocess, synth_long_lines, Batch, Sample,
    SampleSource, Vocabulary,
};
pub use error::{Error, Result};
pub use eval::{bucketed_cer, corpus_cer, levenshtein, BucketedReport, CerReport, EditOps};
pub use image::GrayImage;
pub use layers::{GradStore, NormKind, SeParams};
pub use model::{build, BlockSpec, BlockType, Model, ModelConfig, ResidualMode};
pub use numerics::Mode;
pub use tensor::Tensor;
pub use train::{
    load_checkpoint, save_checkpoint, transcribe, AdamParams, AdamState, FitSession, TrainConfig,
    TrainProgress, TrainReport, WeightPolicy,
};
