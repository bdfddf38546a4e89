//! Mini transformer encoder: frozen backbone, bottleneck adapters, and
//! masked-language-model pretraining.
//!
//! Post-LN blocks: x = LN1(x + attention(x)); x = LN2(x + ffn(x)); adapters
//! apply after LN2, each stack member in order, all with residual adds.
//! Sequences forward one at a time (no padding enters attention); batch
//! losses are averaged on the tape.

mod adapter;
mod mlm;
mod model;

pub use adapter::{AdapterModule, AdapterRole, AdapterStack};
pub use mlm::{pretrain_mlm, unigram_entropy, MlmConfig, MlmOutcome};
pub use model::{EncoderModel, ForwardArtifacts};
pub(crate) use model::transformer_layer;

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::{NodeId, Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error("sequence of {len} tokens exceeds max length {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token id {id} outside vocab of size {vocab}")]
    IdOutOfRange { id: usize, vocab: usize },
    #[error("adapter dims (layers {layers}, dim {dim}, bottleneck {bottleneck}) do not match encoder config")]
    AdapterMismatch {
        layers: usize,
        dim: usize,
        bottleneck: usize,
    },
    #[error("adapter stack must order alignment adapters before task adapters")]
    StackOrder,
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize, partial: Vec<f64> },
    #[error("checkpoint {path} is not a {kind} checkpoint")]
    WrongCheckpoint { path: PathBuf, kind: &'static str },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Dimensions of the backbone and its adapters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub max_seq: usize,
    pub vocab_size: usize,
    pub bottleneck: usize,
}

impl EncoderConfig {
    pub fn with_vocab(vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            layers: 4,
            dim: 64,
            heads: 4,
            ffn_dim: 256,
            max_seq: 32,
            vocab_size,
            bottleneck: 8,
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let positive = [
            ("layers", self.layers),
            ("dim", self.dim),
            ("heads", self.heads),
            ("ffn_dim", self.ffn_dim),
            ("max_seq", self.max_seq),
            ("vocab_size", self.vocab_size),
            ("bottleneck", self.bottleneck),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(EncoderError::Config(format!("{name} must be positive")));
            }
        }
        if self.dim % self.heads != 0 {
            return Err(EncoderError::Config(format!(
                "dim {} not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if self.bottleneck >= self.dim {
            return Err(EncoderError::Config(format!(
                "bottleneck {} must be smaller than dim {}",
                self.bottleneck, self.dim
            )));
        }
        if self.vocab_size <= crate::textproc::RESERVED.len() {
            return Err(EncoderError::Config(format!(
                "vocab size {} leaves no room beyond reserved tokens",
                self.vocab_size
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

/// Once-per-tape registration of named parameters, so a batch of forwards
/// accumulates gradients into a single leaf per parameter.
#[derive(Default)]
pub struct TapeBinding {
    ids: BTreeMap<String, NodeId>,
}

impl TapeBinding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, tape: &mut Tape, name: &str, t: &Tensor) -> NodeId {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = tape.leaf(t);
        self.ids.insert(name.to_string(), id);
        id
    }

    /// Bind as a gradient-free constant, detaching the parameter from the
    /// tape even if it is trainable elsewhere.
    pub fn bind_const(&mut self, tape: &mut Tape, name: &str, t: &Tensor) -> NodeId {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = tape
            .constant(t.data.clone(), t.shape.clone())
            .expect("stored tensors are internally consistent");
        self.ids.insert(name.to_string(), id);
        id
    }

    pub fn node(&self, name: &str) -> Option<NodeId> {
        self.ids.get(name).copied()
    }

    /// Copy accumulated tape gradients back into matching parameters.
    pub fn export_grads(&self, tape: &Tape, params: &mut BTreeMap<String, Tensor>) {
        for (name, t) in params.iter_mut() {
            if !t.requires_grad {
                continue;
            }
            if let Some(&id) = self.ids.get(name) {
                tape.export_grad(id, t);
            }
        }
    }
}

/// Mean of scalar nodes, built on the tape.
pub fn mean_of(tape: &mut Tape, scalars: &[NodeId]) -> Result<NodeId, TensorError> {
    assert!(!scalars.is_empty());
    let mut acc = scalars[0];
    for &s in &scalars[1..] {
        acc = tape.add(acc, s)?;
    }
    Ok(tape.scale(acc, 1.0 / scalars.len() as f64))
}
