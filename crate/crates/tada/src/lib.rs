//! Task-agnostic dialect adapters at desk scale.
//!
//! The pipeline: generate an SAE template corpus, translate it into a
//! pseudo-dialect with a small morphosyntactic rule engine, pretrain a tiny
//! transformer encoder on the SAE side, then train bottleneck alignment
//! adapters that pull dialect representations onto the frozen SAE
//! representation space (sequence-level contrastive loss plus an adversarial
//! critic). Alignment adapters compose with task adapters trained on SAE
//! data, without any task-specific dialect supervision.

pub mod align;
pub mod config;
pub mod dialect;
pub mod encoder;
pub mod fsutil;
pub mod manifest;
pub mod optim;
pub mod rng;
pub mod tasks;
pub mod tensor;
pub mod textproc;

pub use tensor::{Tape, Tensor, TensorError};
