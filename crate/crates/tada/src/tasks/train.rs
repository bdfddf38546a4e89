//! Task adapter and head training on the frozen backbone, evaluation, and
//! composition with alignment adapters.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::{Example, TaskDataset, TaskKind, TaskMetric, TaskSpec};
use super::{metrics, TaskError};
use crate::encoder::{AdapterModule, AdapterRole, AdapterStack, EncoderError, EncoderModel, TapeBinding};
use crate::optim::{warmup_lr, Adam};
use crate::rng::{derive_seed, derived};
use crate::tensor::{checkpoint, Tape, Tensor};

/// Linear layer on the CLS row: two logits for classification, one
/// sigmoid-squashed scalar for regression.
#[derive(Debug, Clone)]
pub struct TaskHead {
    dim: usize,
    out_dim: usize,
    params: BTreeMap<String, Tensor>,
}

impl TaskHead {
    /// Zero init: at the pinned learning rate the head cannot train its way
    /// out of a random initial boundary, so it starts on the decision
    /// surface instead and the first consistent gradients set the signs.
    pub fn init(dim: usize, out_dim: usize) -> TaskHead {
        let mut params = BTreeMap::new();
        params.insert("head.w".to_string(), Tensor::zeros_param(vec![dim, out_dim]));
        params.insert("head.b".to_string(), Tensor::zeros_param(vec![out_dim]));
        TaskHead { dim, out_dim, params }
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(|t| t.data.len()).sum()
    }

    pub fn named_params(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub(crate) fn params_mut(&mut self) -> &mut BTreeMap<String, Tensor> {
        &mut self.params
    }

    pub fn checksum(&self) -> String {
        let mut bytes = Vec::new();
        for (name, t) in &self.params {
            bytes.extend_from_slice(name.as_bytes());
            for v in &t.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        crate::fsutil::sha256_hex(&bytes)
    }

    /// Raw output row for a CLS vector: logits, not probabilities.
    pub fn apply(&self, cls: &Tensor) -> Vec<f64> {
        let w = &self.params["head.w"];
        let b = &self.params["head.b"];
        (0..self.out_dim)
            .map(|j| {
                let dot: f64 = (0..self.dim)
                    .map(|i| cls.data[i] * w.data[i * self.out_dim + j])
                    .sum();
                dot + b.data[j]
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), EncoderError> {
        let meta = Tensor::vector(vec![self.dim as f64, self.out_dim as f64]);
        let mut arrays: Vec<(String, &Tensor)> = vec![("meta.head".to_string(), &meta)];
        arrays.extend(self.params.iter().map(|(n, t)| (n.clone(), t)));
        checkpoint::save(path, &arrays)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TaskHead, EncoderError> {
        let arrays = checkpoint::load(path)?;
        let mut meta = None;
        let mut params = BTreeMap::new();
        for (name, tensor) in arrays {
            if name == "meta.head" {
                meta = Some(tensor);
            } else {
                params.insert(name, tensor);
            }
        }
        let wrong = || EncoderError::WrongCheckpoint {
            path: path.to_path_buf(),
            kind: "head",
        };
        let meta = meta.ok_or_else(wrong)?;
        if meta.data.len() != 2 || !params.contains_key("head.w") || !params.contains_key("head.b")
        {
            return Err(wrong());
        }
        for t in params.values_mut() {
            t.requires_grad = true;
        }
        Ok(TaskHead {
            dim: meta.data[0] as usize,
            out_dim: meta.data[1] as usize,
            params,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Fraction of total steps spent in linear learning-rate warmup.
    pub warmup_frac: f64,
}

impl Default for TaskTrainConfig {
    fn default() -> Self {
        TaskTrainConfig {
            epochs: 20,
            batch_size: 16,
            lr: 1e-4,
            warmup_frac: 0.06,
        }
    }
}

impl TaskTrainConfig {
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TaskError::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(TaskError::Config(format!("lr {} must be positive", self.lr)));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(TaskError::Config(format!(
                "warmup_frac {} outside [0, 1)",
                self.warmup_frac
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEpochStats {
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub dev_metric: f64,
}

#[derive(Debug)]
pub struct TaskTrainOutcome {
    pub adapter: AdapterModule,
    pub head: TaskHead,
    pub log: Vec<TaskEpochStats>,
    pub best_epoch: usize,
    pub best_dev: f64,
    pub aborted: bool,
}

/// A metric score plus an optional evaluation caveat.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub value: f64,
    pub note: Option<String>,
}

fn predictions(
    model: &EncoderModel,
    stack: &AdapterStack,
    head: &TaskHead,
    examples: &[Example],
) -> Result<Vec<Vec<f64>>, TaskError> {
    examples
        .iter()
        .map(|ex| {
            let (_, cls) = model.forward_nograd(&ex.ids, stack)?;
            Ok(head.apply(&cls))
        })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Score a task split. A zero-variance prediction vector on the correlation
/// metric scores 0 with a note instead of failing: a collapsed model has no
/// correlation to report.
pub fn evaluate(
    model: &EncoderModel,
    stack: &AdapterStack,
    head: &TaskHead,
    spec: &TaskSpec,
    examples: &[Example],
) -> Result<Score, TaskError> {
    let outputs = predictions(model, stack, head, examples)?;
    match spec.metric {
        TaskMetric::Accuracy | TaskMetric::Matthews => {
            let preds: Vec<usize> = outputs
                .iter()
                .map(|row| usize::from(row[1] > row[0]))
                .collect();
            let labels: Vec<usize> = examples.iter().map(|e| e.label as usize).collect();
            let value = match spec.metric {
                TaskMetric::Accuracy => metrics::accuracy(&preds, &labels)?,
                _ => metrics::matthews(&preds, &labels)?,
            };
            Ok(Score { value, note: None })
        }
        TaskMetric::PearsonSpearmanMean => {
            let preds: Vec<f64> = outputs.iter().map(|row| sigmoid(row[0])).collect();
            let labels: Vec<f64> = examples.iter().map(|e| e.label).collect();
            match metrics::pearson_spearman_mean(&preds, &labels) {
                Ok(value) => Ok(Score { value, note: None }),
                Err(metrics::MetricError::ZeroVariance { side: "prediction" }) => Ok(Score {
                    value: 0.0,
                    note: Some(format!(
                        "{}: zero-variance predictions scored 0.0",
                        spec.name
                    )),
                }),
                Err(e) => Err(e.into()),
            }
        }
    }
}

/// Train a task adapter plus head on the SAE train split of one dataset.
/// The backbone stays frozen; the returned pair is the dev-metric argmax
/// over epochs 0..=epochs (ties to the earliest).
pub fn train_task_adapter(
    model: &EncoderModel,
    data: &TaskDataset,
    cfg: &TaskTrainConfig,
    seed: u64,
) -> Result<TaskTrainOutcome, TaskError> {
    cfg.validate()?;
    if !model.is_frozen() {
        return Err(TaskError::BackboneNotFrozen);
    }
    let task = data.spec.name;
    let out_dim = match data.spec.kind {
        TaskKind::Classification => 2,
        TaskKind::Regression => 1,
    };
    let mut adapter = AdapterModule::init(
        AdapterRole::Task,
        task.as_str(),
        model.cfg(),
        derive_seed(seed, "task/adapter", 0),
    );
    let mut head = TaskHead::init(model.cfg().dim, out_dim);

    let batches_per_epoch = data.train.len().div_ceil(cfg.batch_size);
    let total_steps = (cfg.epochs * batches_per_epoch) as u64;
    let warmup_steps = (total_steps as f64 * cfg.warmup_frac).round() as u64;
    let mut opt = Adam::new(cfg.lr);

    let eval_dev = |adapter: &AdapterModule, head: &TaskHead| -> Result<f64, TaskError> {
        let stack = AdapterStack::single(adapter.clone());
        Ok(evaluate(model, &stack, head, &data.spec, &data.dev)?.value)
    };

    let init_dev = eval_dev(&adapter, &head)?;
    let mut log = vec![TaskEpochStats { epoch: 0, train_loss: None, dev_metric: init_dev }];
    let mut best = (0, init_dev, adapter.clone(), head.clone());
    let mut aborted = false;

    let mut order: Vec<usize> = (0..data.train.len()).collect();
    'epochs: for epoch in 1..=cfg.epochs {
        let mut rng = derived(seed, "task/shuffle", epoch as u64);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let stack = AdapterStack::single(adapter.clone());
            let mut tape = Tape::new();
            let mut binding = TapeBinding::new();
            let mut example_losses = Vec::with_capacity(chunk.len());
            for &ix in chunk {
                let ex = &data.train[ix];
                let (_, cls) = model.forward_seq(&mut tape, &mut binding, &ex.ids, &stack)?;
                let w = binding.bind(&mut tape, "head.w", &head.params["head.w"]);
                let b = binding.bind(&mut tape, "head.b", &head.params["head.b"]);
                let logits = tape.matmul(cls, w)?;
                let logits = tape.add_bias(logits, b)?;
                let loss = match data.spec.kind {
                    TaskKind::Classification => {
                        tape.cross_entropy(logits, &[ex.label as usize])?
                    }
                    TaskKind::Regression => {
                        let p = tape.sigmoid(logits);
                        let d = tape.add_scalar(p, -ex.label);
                        let sq = tape.mul(d, d)?;
                        tape.sum(sq)
                    }
                };
                example_losses.push(loss);
            }
            let batch_loss = crate::encoder::mean_of(&mut tape, &example_losses)?;
            let loss_value = tape.item(batch_loss);
            if !loss_value.is_finite() {
                aborted = true;
                break 'epochs;
            }
            epoch_loss += loss_value * chunk.len() as f64;
            tape.backward(batch_loss)?;
            binding.export_grads(&tape, adapter.params_mut());
            binding.export_grads(&tape, head.params_mut());
            opt.lr = warmup_lr(cfg.lr, opt.step_count(), warmup_steps);
            let mut refs: Vec<(String, &mut Tensor)> = adapter
                .params_mut()
                .iter_mut()
                .chain(head.params_mut().iter_mut())
                .map(|(n, t)| (n.clone(), t))
                .collect();
            opt.step(&mut refs);
        }
        let train_loss = epoch_loss / data.train.len() as f64;
        let dev = eval_dev(&adapter, &head)?;
        if !dev.is_finite() {
            aborted = true;
            break;
        }
        log.push(TaskEpochStats { epoch, train_loss: Some(train_loss), dev_metric: dev });
        if dev > best.1 {
            best = (epoch, dev, adapter.clone(), head.clone());
        }
    }

    let (best_epoch, best_dev, adapter, head) = best;
    Ok(TaskTrainOutcome { adapter, head, log, best_epoch, best_dev, aborted })
}

/// Stack an alignment adapter in front of a task adapter, without touching
/// either's parameters.
pub fn compose(tada: &AdapterModule, task: &AdapterModule) -> Result<AdapterStack, TaskError> {
    if tada.dims() != task.dims() {
        return Err(TaskError::ComposeMismatch {
            tada: tada.dims(),
            task: task.dims(),
        });
    }
    Ok(AdapterStack::new(vec![tada.clone(), task.clone()])?)
}
