//! Toy task suite and evaluation harness.
//!
//! Three tasks stand in for the benchmark families: POLARITY (binary
//! sentiment over adjective lexicons, accuracy), ACCEPTABILITY (template
//! sentences vs word-order shuffles, Matthews correlation), and SIMILARITY
//! (sentence pairs labeled by content-word Jaccard overlap, mean of Pearson
//! and Spearman). Labels are defined on the SAE side and carried unchanged
//! to dialect-transformed inputs, so dialect deltas measure representation
//! robustness rather than label noise.

mod data;
mod metrics;
mod report;
mod train;

pub use data::{
    dialect_split, gen_tasks, Example, TaskDataset, TaskKind, TaskMetric, TaskName, TaskSizes,
    TaskSpec,
};
pub use metrics::{accuracy, matthews, pearson, pearson_spearman_mean, spearman, MetricError};
pub use report::{
    reference_ablation, reference_rows, render_ablation, render_text, run_ablation,
    run_experiment, AblationReport, CellStat, DialectSection, EvalReport, ExperimentConfig,
    ParamAccounting, ReferenceAblation, ReferenceRow, SeedRun, VariantRow, DEFAULT_SEEDS,
    REFERENCE_SAE_MEAN,
};
pub use train::{
    compose, evaluate, train_task_adapter, Score, TaskEpochStats, TaskHead, TaskTrainConfig,
    TaskTrainOutcome,
};

use thiserror::Error;

use crate::align::AlignError;
use crate::dialect::DialectError;
use crate::encoder::EncoderError;
use crate::tensor::TensorError;
use crate::textproc::TextError;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("split sizes (train {train}, dev {dev}, test {test}) below the floor (200/50/100)")]
    SizesTooSmall {
        train: usize,
        dev: usize,
        test: usize,
    },
    #[error("ran out of distinct {task} examples after {got} of {need}")]
    CapacityExceeded {
        task: &'static str,
        need: usize,
        got: usize,
    },
    #[error("backbone must be frozen before task training")]
    BackboneNotFrozen,
    #[error("cannot compose: alignment adapter dims {tada:?} vs task adapter dims {task:?}")]
    ComposeMismatch {
        tada: (usize, usize, usize),
        task: (usize, usize, usize),
    },
    #[error("{stage} training aborted on a non-finite loss (seed {seed})")]
    TrainingAborted { stage: String, seed: u64 },
    #[error("invalid task config: {0}")]
    Config(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Dialect(#[from] DialectError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
