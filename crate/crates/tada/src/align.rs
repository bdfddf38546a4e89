//! Alignment-adapter training: pull dialect CLS representations onto the
//! frozen SAE encoder's, while a morphosyntactic critic pushes the adapter
//! to erase surface cues the critic could score on.
//!
//! Generator loss: l_tada = l_seq + l_ms with l_seq the mean CLS l2
//! distance over the batch and l_ms = -D(dial). The critic ascends
//! D(dial) - D(sae) on detached activations, k steps per generator step.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialect::ParallelPair;
use crate::encoder::{
    mean_of, transformer_layer, AdapterModule, AdapterRole, AdapterStack, EncoderConfig,
    EncoderError, EncoderModel, TapeBinding,
};
use crate::fsutil;
use crate::optim::Adam;
use crate::rng::{derive_seed, derived, Rng};
use crate::tensor::{NodeId, Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("backbone must be frozen before alignment training")]
    BackboneNotFrozen,
    #[error("{have} pairs cannot cover a held-out split of {heldout}")]
    TooFewPairs { have: usize, heldout: usize },
    #[error("invalid alignment config: {0}")]
    Config(String),
    #[error("log io for {path}: {source}")]
    LogIo {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed epoch log: {0}")]
    LogFormat(#[from] serde_json::Error),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Which terms enter the generator loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    Full,
    NoMs,
    NoSeq,
}

impl LossMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::Full => "full",
            LossMode::NoMs => "no_ms",
            LossMode::NoSeq => "no_seq",
        }
    }
}

impl std::str::FromStr for LossMode {
    type Err = String;

    fn from_str(s: &str) -> Result<LossMode, String> {
        match s {
            "full" => Ok(LossMode::Full),
            "no_ms" => Ok(LossMode::NoMs),
            "no_seq" => Ok(LossMode::NoSeq),
            other => Err(format!("unknown loss mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub critic_lr: f64,
    /// Critic ascent steps per generator step.
    pub critic_steps: usize,
    /// Pairs held out from training for checkpoint selection.
    pub heldout: usize,
    /// Parallel pairs to generate when none are supplied on disk.
    pub pairs: usize,
}

impl Default for AlignTrainConfig {
    fn default() -> Self {
        AlignTrainConfig {
            epochs: 30,
            batch_size: 16,
            lr: 5e-4,
            critic_lr: 5e-4,
            critic_steps: 1,
            heldout: 100,
            pairs: 1000,
        }
    }
}

impl AlignTrainConfig {
    pub fn validate(&self) -> Result<(), AlignError> {
        for (name, v) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("critic_steps", self.critic_steps),
            ("heldout", self.heldout),
        ] {
            if v == 0 {
                return Err(AlignError::Config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [("lr", self.lr), ("critic_lr", self.critic_lr)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(AlignError::Config(format!("{name} must be a positive number")));
            }
        }
        Ok(())
    }
}

/// Morphosyntactic critic: one transformer block over the encoder's top
/// hidden states, scored from its CLS row through a d -> d/2 -> 1 MLP.
#[derive(Debug)]
pub struct Critic {
    heads: usize,
    params: std::collections::BTreeMap<String, Tensor>,
}

impl Critic {
    pub fn init(cfg: &EncoderConfig, seed: u64) -> Result<Critic, AlignError> {
        cfg.validate().map_err(AlignError::Encoder)?;
        if cfg.dim < 2 {
            return Err(AlignError::Config(
                "critic head needs dim >= 2".to_string(),
            ));
        }
        let mut params = std::collections::BTreeMap::new();
        let scale = 1.0 / (cfg.dim as f64).sqrt();
        let mut slot = 0u64;
        let mut rng_for = |tag: &str| -> Rng {
            slot += 1;
            derived(seed, tag, slot)
        };
        let mut rand = |params: &mut std::collections::BTreeMap<String, Tensor>,
                        name: &str,
                        shape: Vec<usize>| {
            let mut rng = rng_for(name);
            params.insert(name.to_string(), Tensor::rand_uniform(shape, scale, &mut rng));
        };
        let zeros = |params: &mut std::collections::BTreeMap<String, Tensor>,
                     name: &str,
                     shape: Vec<usize>| {
            params.insert(name.to_string(), Tensor::zeros_param(shape));
        };
        let ones = |params: &mut std::collections::BTreeMap<String, Tensor>,
                    name: &str,
                    n: usize| {
            let mut t = Tensor::vector(vec![1.0; n]);
            t.requires_grad = true;
            params.insert(name.to_string(), t);
        };

        let dk = cfg.head_dim();
        for h in 0..cfg.heads {
            for proj in ["q", "k", "v"] {
                rand(&mut params, &format!("critic.attn.{proj}{h}.w"), vec![cfg.dim, dk]);
                zeros(&mut params, &format!("critic.attn.{proj}{h}.b"), vec![dk]);
            }
        }
        rand(&mut params, "critic.attn.out.w", vec![cfg.dim, cfg.dim]);
        zeros(&mut params, "critic.attn.out.b", vec![cfg.dim]);
        ones(&mut params, "critic.ln1.gamma", cfg.dim);
        zeros(&mut params, "critic.ln1.beta", vec![cfg.dim]);
        rand(&mut params, "critic.ffn.w1", vec![cfg.dim, cfg.ffn_dim]);
        zeros(&mut params, "critic.ffn.b1", vec![cfg.ffn_dim]);
        rand(&mut params, "critic.ffn.w2", vec![cfg.ffn_dim, cfg.dim]);
        zeros(&mut params, "critic.ffn.b2", vec![cfg.dim]);
        ones(&mut params, "critic.ln2.gamma", cfg.dim);
        zeros(&mut params, "critic.ln2.beta", vec![cfg.dim]);
        let half = cfg.dim / 2;
        rand(&mut params, "critic.head.w1", vec![cfg.dim, half]);
        zeros(&mut params, "critic.head.b1", vec![half]);
        rand(&mut params, "critic.head.w2", vec![half, 1]);
        zeros(&mut params, "critic.head.b2", vec![1]);

        Ok(Critic {
            heads: cfg.heads,
            params,
        })
    }

    pub fn named_params(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub(crate) fn params_mut(&mut self) -> &mut std::collections::BTreeMap<String, Tensor> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn checksum(&self) -> String {
        let mut bytes = Vec::new();
        for (name, t) in &self.params {
            bytes.extend_from_slice(name.as_bytes());
            for v in &t.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fsutil::sha256_hex(&bytes)
    }

    /// Score a `[n, d]` hidden matrix. With `trainable` false the critic's
    /// parameters enter the tape as constants, so no gradient can reach
    /// them from this score.
    pub fn score(
        &self,
        tape: &mut Tape,
        binding: &mut TapeBinding,
        hidden: NodeId,
        trainable: bool,
    ) -> Result<NodeId, TensorError> {
        let params = &self.params;
        let mut bind = |t: &mut Tape, name: &str| -> NodeId {
            if trainable {
                binding.bind(t, name, &params[name])
            } else {
                binding.bind_const(t, name, &params[name])
            }
        };
        let y = transformer_layer(tape, &mut bind, "critic", hidden, self.heads, None)?;
        let cls = tape.slice_rows(y, 0, 1)?;
        let w1 = bind(tape, "critic.head.w1");
        let b1 = bind(tape, "critic.head.b1");
        let w2 = bind(tape, "critic.head.w2");
        let b2 = bind(tape, "critic.head.b2");
        let h = tape.matmul(cls, w1)?;
        let h = tape.add_bias(h, b1)?;
        let h = tape.relu(h);
        let out = tape.matmul(h, w2)?;
        let out = tape.add_bias(out, b2)?;
        Ok(tape.sum(out))
    }
}

/// Mean over the batch of ||cls_sae - cls_dial||2.
pub fn seq_loss(tape: &mut Tape, pairs: &[(NodeId, NodeId)]) -> Result<NodeId, TensorError> {
    let mut per = Vec::with_capacity(pairs.len());
    for &(sae, dial) in pairs {
        let diff = tape.sub(sae, dial)?;
        per.push(tape.l2_norm(diff));
    }
    mean_of(tape, &per)
}

/// -mean critic score of the dialect batch: low when the critic rates
/// dialect representations highly.
pub fn ms_loss(tape: &mut Tape, dial_scores: &[NodeId]) -> Result<NodeId, TensorError> {
    let mean = mean_of(tape, dial_scores)?;
    Ok(tape.scale(mean, -1.0))
}

/// D(dial) - D(sae): the objective the critic ascends.
pub fn adv_objective(
    tape: &mut Tape,
    dial_scores: &[NodeId],
    sae_scores: &[NodeId],
) -> Result<NodeId, TensorError> {
    let d = mean_of(tape, dial_scores)?;
    let s = mean_of(tape, sae_scores)?;
    tape.sub(d, s)
}

/// One ascent step on D(dial) - D(sae) over detached hidden states.
/// Returns the objective value before the step.
pub fn critic_update(
    critic: &mut Critic,
    opt: &mut Adam,
    dial_hidden: &[Tensor],
    sae_hidden: &[Tensor],
) -> Result<f64, TensorError> {
    let mut tape = Tape::new();
    let mut binding = TapeBinding::new();
    let score_all = |tape: &mut Tape,
                         binding: &mut TapeBinding,
                         critic: &Critic,
                         batch: &[Tensor]|
     -> Result<Vec<NodeId>, TensorError> {
        batch
            .iter()
            .map(|h| {
                let node = tape.constant(h.data.clone(), h.shape.clone())?;
                critic.score(tape, binding, node, true)
            })
            .collect()
    };
    let dial_scores = score_all(&mut tape, &mut binding, critic, dial_hidden)?;
    let sae_scores = score_all(&mut tape, &mut binding, critic, sae_hidden)?;
    let objective = adv_objective(&mut tape, &dial_scores, &sae_scores)?;
    let value = tape.item(objective);
    let loss = tape.scale(objective, -1.0);
    tape.backward(loss)?;
    binding.export_grads(&tape, critic.params_mut());
    let mut refs: Vec<(String, &mut Tensor)> = critic
        .params_mut()
        .iter_mut()
        .map(|(n, t)| (n.clone(), t))
        .collect();
    opt.step(&mut refs);
    Ok(value)
}

/// One line of the training log. Epoch 0 is the untrained adapter: only
/// its held-out loss exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_l_seq: Option<f64>,
    pub train_l_ms: Option<f64>,
    pub train_l_adv: Option<f64>,
    pub heldout_l_seq: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Adapter at the selected epoch.
    pub adapter: AdapterModule,
    pub critic: Critic,
    pub log: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_heldout: f64,
    pub init_heldout: f64,
    /// True when training stopped early on a non-finite loss.
    pub aborted: bool,
}

fn cls_distance(a: &Tensor, b: &Tensor) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Train an alignment adapter against a frozen backbone on parallel pairs.
/// The last `heldout` pairs are never trained on; the returned adapter is
/// the held-out l_seq argmin over epochs 0..=epochs (ties to the earliest),
/// except in NoSeq mode, where l_seq is untrained and the final epoch is
/// kept. A non-finite loss aborts with the partial log and `aborted` set.
pub fn train_tada(
    model: &EncoderModel,
    pairs: &[ParallelPair],
    cfg: &AlignTrainConfig,
    mode: LossMode,
    seed: u64,
) -> Result<TrainOutcome, AlignError> {
    cfg.validate()?;
    if !model.is_frozen() {
        return Err(AlignError::BackboneNotFrozen);
    }
    if pairs.len() <= cfg.heldout {
        return Err(AlignError::TooFewPairs {
            have: pairs.len(),
            heldout: cfg.heldout,
        });
    }
    let split = pairs.len() - cfg.heldout;
    let bare = AdapterStack::empty();

    // The SAE side never changes: cache its top hidden states and CLS rows.
    let mut sae_hidden = Vec::with_capacity(pairs.len());
    let mut sae_cls = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let (hidden, cls) = model.forward_nograd(pair.sae.ids(), &bare)?;
        sae_hidden.push(hidden);
        sae_cls.push(cls);
    }

    let mut adapter = AdapterModule::init(
        AdapterRole::Alignment,
        "tada",
        model.cfg(),
        derive_seed(seed, "align/adapter", 0),
    );
    let mut critic = Critic::init(model.cfg(), derive_seed(seed, "align/critic", 0))?;
    let mut gen_opt = Adam::new(cfg.lr);
    let mut critic_opt = Adam::new(cfg.critic_lr);

    let eval_heldout = |adapter: &AdapterModule| -> Result<f64, EncoderError> {
        let stack = AdapterStack::single(adapter.clone());
        let mut total = 0.0;
        for (pair, target) in pairs[split..].iter().zip(&sae_cls[split..]) {
            let (_, cls) = model.forward_nograd(pair.dialect.ids(), &stack)?;
            total += cls_distance(&cls, target);
        }
        Ok(total / cfg.heldout as f64)
    };

    let init_heldout = eval_heldout(&adapter)?;
    let mut log = vec![EpochStats {
        epoch: 0,
        train_l_seq: None,
        train_l_ms: None,
        train_l_adv: None,
        heldout_l_seq: init_heldout,
    }];
    let mut best_adapter = adapter.clone();
    let mut best_epoch = 0usize;
    let mut best_heldout = init_heldout;
    let mut aborted = !init_heldout.is_finite();

    'training: for epoch in 1..=cfg.epochs {
        if aborted {
            break;
        }
        let mut order: Vec<usize> = (0..split).collect();
        order.shuffle(&mut derived(seed, "align/shuffle", epoch as u64));
        let (mut sum_seq, mut sum_ms, mut sum_adv) = (0.0, 0.0, 0.0);
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let stack = AdapterStack::single(adapter.clone());

            // critic steps see current activations, detached
            let mut dial_hidden = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (hidden, _) = model.forward_nograd(pairs[i].dialect.ids(), &stack)?;
                dial_hidden.push(hidden);
            }
            let sae_batch: Vec<Tensor> =
                chunk.iter().map(|&i| sae_hidden[i].clone()).collect();
            let mut l_adv = 0.0;
            for _ in 0..cfg.critic_steps {
                l_adv = critic_update(&mut critic, &mut critic_opt, &dial_hidden, &sae_batch)?;
            }

            // generator step
            let mut tape = Tape::new();
            let mut binding = TapeBinding::new();
            let mut cls_pairs = Vec::with_capacity(chunk.len());
            let mut scores = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (hidden, cls) =
                    model.forward_seq(&mut tape, &mut binding, pairs[i].dialect.ids(), &stack)?;
                let target = &sae_cls[i];
                let sae_node = tape.constant(target.data.clone(), target.shape.clone())?;
                cls_pairs.push((sae_node, cls));
                scores.push(critic.score(&mut tape, &mut binding, hidden, false)?);
            }
            let l_seq = seq_loss(&mut tape, &cls_pairs)?;
            let l_ms = ms_loss(&mut tape, &scores)?;
            let l_tada = match mode {
                LossMode::Full => tape.add(l_seq, l_ms)?,
                LossMode::NoMs => l_seq,
                LossMode::NoSeq => l_ms,
            };
            let (v_seq, v_ms) = (tape.item(l_seq), tape.item(l_ms));
            if !(v_seq.is_finite() && v_ms.is_finite() && l_adv.is_finite()) {
                aborted = true;
                break 'training;
            }
            tape.backward(l_tada)?;
            binding.export_grads(&tape, adapter.params_mut());
            let mut refs: Vec<(String, &mut Tensor)> = adapter
                .params_mut()
                .iter_mut()
                .map(|(n, t)| (n.clone(), t))
                .collect();
            gen_opt.step(&mut refs);

            sum_seq += v_seq;
            sum_ms += v_ms;
            sum_adv += l_adv;
            batches += 1;
        }

        let heldout = eval_heldout(&adapter)?;
        if !heldout.is_finite() {
            aborted = true;
            break;
        }
        log.push(EpochStats {
            epoch,
            train_l_seq: Some(sum_seq / batches as f64),
            train_l_ms: Some(sum_ms / batches as f64),
            train_l_adv: Some(sum_adv / batches as f64),
            heldout_l_seq: heldout,
        });
        let keep = match mode {
            // l_seq never trains in NoSeq, so its argmin would just pick
            // the least-collapsed epoch; keep the final state instead.
            LossMode::NoSeq => true,
            _ => heldout < best_heldout,
        };
        if keep {
            best_adapter = adapter.clone();
            best_epoch = epoch;
            best_heldout = heldout;
        }
    }

    Ok(TrainOutcome {
        adapter: best_adapter,
        critic,
        log,
        best_epoch,
        best_heldout,
        init_heldout,
        aborted,
    })
}

pub fn write_epoch_log(path: &Path, log: &[EpochStats]) -> Result<(), AlignError> {
    let mut buf = Vec::new();
    for row in log {
        serde_json::to_writer(&mut buf, row)?;
        buf.push(b'\n');
    }
    fsutil::atomic_write(path, &buf).map_err(|source| AlignError::LogIo {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_epoch_log(path: &Path) -> Result<Vec<EpochStats>, AlignError> {
    let text = std::fs::read_to_string(path).map_err(|source| AlignError::LogIo {
        path: path.display().to_string(),
        source,
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(AlignError::LogFormat))
        .collect()
}

pub const GRID_BATCH_SIZES: [usize; 3] = [8, 16, 32];
pub const GRID_LRS: [f64; 3] = [5e-3, 5e-4, 5e-5];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    pub batch_size: usize,
    pub lr: f64,
    pub heldout_l_seq: f64,
    pub best_epoch: usize,
    pub stable: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSearchOutcome {
    pub cells: Vec<GridCell>,
    /// Index into `cells` of the winner, if any cell was stable.
    pub best: Option<usize>,
}

/// Train every (batch size, lr) cell from the same seed and pick the best
/// held-out l_seq. Unstable cells are kept in the table but never win.
pub fn grid_search(
    model: &EncoderModel,
    pairs: &[ParallelPair],
    base: &AlignTrainConfig,
    mode: LossMode,
    seed: u64,
) -> Result<GridSearchOutcome, AlignError> {
    use rayon::prelude::*;
    let combos: Vec<(usize, f64)> = GRID_BATCH_SIZES
        .iter()
        .flat_map(|&bs| GRID_LRS.iter().map(move |&lr| (bs, lr)))
        .collect();
    let cells = combos
        .par_iter()
        .map(|&(batch_size, lr)| {
            let cfg = AlignTrainConfig {
                batch_size,
                lr,
                ..base.clone()
            };
            let out = train_tada(model, pairs, &cfg, mode, seed)?;
            Ok(GridCell {
                batch_size,
                lr,
                heldout_l_seq: out.best_heldout,
                best_epoch: out.best_epoch,
                stable: !out.aborted,
            })
        })
        .collect::<Result<Vec<GridCell>, AlignError>>()?;
    let best = select_best(&cells);
    Ok(GridSearchOutcome { cells, best })
}

/// Lowest held-out l_seq among stable cells; ties break to the lower
/// learning rate, then the smaller batch.
pub fn select_best(cells: &[GridCell]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, cell) in cells.iter().enumerate() {
        if !cell.stable || !cell.heldout_l_seq.is_finite() {
            continue;
        }
        best = Some(match best {
            None => i,
            Some(j) => {
                let cur = &cells[j];
                let wins = cell.heldout_l_seq < cur.heldout_l_seq
                    || (cell.heldout_l_seq == cur.heldout_l_seq
                        && (cell.lr < cur.lr
                            || (cell.lr == cur.lr && cell.batch_size < cur.batch_size)));
                if wins {
                    i
                } else {
                    j
                }
            }
        });
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialect::{gen_parallel, RuleProfile};
    use crate::textproc::{gen_template_corpus, lexicon, Vocab};

    fn tiny_cfg(vocab: usize) -> EncoderConfig {
        EncoderConfig {
            layers: 1,
            dim: 8,
            heads: 2,
            ffn_dim: 16,
            max_seq: 16,
            vocab_size: vocab,
            bottleneck: 2,
        }
    }

    fn fixture(n: usize, profile: &RuleProfile) -> (EncoderModel, Vec<ParallelPair>) {
        let corpus = gen_template_corpus(n, 5).unwrap();
        let extras = lexicon::vocab_extras();
        let vocab = Vocab::build_with_extras(&corpus, 1, &extras);
        let pairs = gen_parallel(&corpus, profile, &vocab, n, 17).unwrap();
        let mut model = EncoderModel::init(tiny_cfg(vocab.len()), 23).unwrap();
        model.freeze();
        (model, pairs)
    }

    fn small_train_cfg() -> AlignTrainConfig {
        AlignTrainConfig {
            epochs: 2,
            batch_size: 8,
            lr: 5e-4,
            critic_lr: 5e-4,
            critic_steps: 1,
            heldout: 8,
            pairs: 24,
        }
    }

    #[test]
    fn seq_loss_of_identical_representations_is_zero() {
        let mut tape = Tape::new();
        let a = tape.constant(vec![1.5, -2.0, 0.25], vec![1, 3]).unwrap();
        let loss = seq_loss(&mut tape, &[(a, a)]).unwrap();
        assert_eq!(tape.item(loss), 0.0);
    }

    #[test]
    fn seq_loss_is_the_euclidean_distance() {
        let mut tape = Tape::new();
        let sae = tape.constant(vec![3.0, 4.0], vec![1, 2]).unwrap();
        let dial = tape.constant(vec![0.0, 0.0], vec![1, 2]).unwrap();
        let loss = seq_loss(&mut tape, &[(sae, dial)]).unwrap();
        assert_eq!(tape.item(loss), 5.0);
    }

    #[test]
    fn seq_loss_matches_a_scalar_reimplementation() {
        let mut rng = derived(31, "align-test/seq", 0);
        use rand::Rng as _;
        let mut tape = Tape::new();
        let mut nodes = Vec::new();
        let mut expected = 0.0;
        let n = 8;
        for _ in 0..n {
            let a: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            expected += a
                .iter()
                .zip(&b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            let an = tape.constant(a, vec![1, 6]).unwrap();
            let bn = tape.constant(b, vec![1, 6]).unwrap();
            nodes.push((an, bn));
        }
        expected /= n as f64;
        let loss = seq_loss(&mut tape, &nodes).unwrap();
        assert!((tape.item(loss) - expected).abs() <= 1e-12);
    }

    #[test]
    fn ms_loss_negates_the_mean_score() {
        let mut tape = Tape::new();
        let s = tape.scalar_const(0.7);
        let loss = ms_loss(&mut tape, &[s]).unwrap();
        assert_eq!(tape.item(loss), -0.7);
        let t = tape.scalar_const(0.1);
        let both = ms_loss(&mut tape, &[s, t]).unwrap();
        assert!((tape.item(both) + 0.4).abs() <= 1e-15);
    }

    #[test]
    fn tada_loss_decomposes_exactly() {
        let mut tape = Tape::new();
        let sae = tape.constant(vec![3.0, 4.0], vec![1, 2]).unwrap();
        let dial = tape.constant(vec![0.0, 0.0], vec![1, 2]).unwrap();
        let l_seq = seq_loss(&mut tape, &[(sae, dial)]).unwrap();
        let score = tape.scalar_const(0.7);
        let l_ms = ms_loss(&mut tape, &[score]).unwrap();
        let l_tada = tape.add(l_seq, l_ms).unwrap();
        assert_eq!(tape.item(l_tada), tape.item(l_seq) + tape.item(l_ms));
        assert_eq!(tape.item(l_tada), 5.0 - 0.7);
    }

    #[test]
    fn critic_mostly_ascends_on_separable_batches() {
        let cfg = tiny_cfg(16);
        let mut critic = Critic::init(&cfg, 3).unwrap();
        let mut opt = Adam::new(5e-3);
        let make = |sign: f64, salt: usize| -> Vec<Tensor> {
            (0..3)
                .map(|i| {
                    let data: Vec<f64> = (0..4 * cfg.dim)
                        .map(|j| sign * (0.6 + 0.05 * ((i + j + salt) % 7) as f64))
                        .collect();
                    Tensor::new(vec![4, cfg.dim], data).unwrap()
                })
                .collect()
        };
        let dial = make(1.0, 0);
        let sae = make(-1.0, 3);
        let mut values = Vec::new();
        for _ in 0..50 {
            values.push(critic_update(&mut critic, &mut opt, &dial, &sae).unwrap());
        }
        let ups = values
            .windows(2)
            .filter(|w| w[1] > w[0])
            .count();
        assert!(
            ups as f64 >= 0.9 * (values.len() - 1) as f64,
            "only {ups}/{} ascending steps",
            values.len() - 1
        );
        assert!(values.last().unwrap() > values.first().unwrap());
    }

    #[test]
    fn detached_critic_gets_no_gradient_from_ms_loss() {
        let cfg = tiny_cfg(16);
        let mut critic = Critic::init(&cfg, 9).unwrap();
        let before = critic.checksum();
        let mut hidden = Tensor::new(
            vec![3, cfg.dim],
            (0..3 * cfg.dim).map(|i| 0.1 * (i as f64) - 1.0).collect(),
        )
        .unwrap();
        hidden.requires_grad = true;
        let mut tape = Tape::new();
        let mut binding = TapeBinding::new();
        let node = tape.leaf(&hidden);
        let score = critic.score(&mut tape, &mut binding, node, false).unwrap();
        let loss = ms_loss(&mut tape, &[score]).unwrap();
        tape.backward(loss).unwrap();
        binding.export_grads(&tape, critic.params_mut());
        assert!(critic.named_params().all(|(_, t)| t.grad.is_none()));
        assert_eq!(critic.checksum(), before);
        // the non-critic side of the graph still learns
        tape.export_grad(node, &mut hidden);
        let g = hidden.grad.expect("input gradient");
        assert!(g.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn zero_density_pairs_select_the_identity_adapter() {
        let (model, pairs) = fixture(24, &RuleProfile::none());
        let out = train_tada(&model, &pairs, &small_train_cfg(), LossMode::Full, 7).unwrap();
        assert_eq!(out.init_heldout, 0.0);
        assert_eq!(out.best_epoch, 0);
        assert!(!out.aborted);
        let stack = AdapterStack::single(out.adapter);
        for pair in &pairs[..4] {
            let (_, bare) = model
                .forward_nograd(pair.dialect.ids(), &AdapterStack::empty())
                .unwrap();
            let (_, composed) = model.forward_nograd(pair.dialect.ids(), &stack).unwrap();
            let dist = cls_distance(&bare, &composed);
            assert!(dist <= 1e-9, "adapter is not an identity: {dist}");
        }
    }

    #[test]
    fn training_leaves_the_backbone_untouched() {
        let (model, pairs) = fixture(24, &RuleProfile::aae());
        let before = model.checksum();
        let out = train_tada(&model, &pairs, &small_train_cfg(), LossMode::Full, 7).unwrap();
        assert_eq!(model.checksum(), before);
        assert_eq!(out.log.len(), 3);
        assert!(out.log[1].train_l_seq.is_some());
        let fresh = Critic::init(model.cfg(), derive_seed(7, "align/critic", 0)).unwrap();
        assert_ne!(out.critic.checksum(), fresh.checksum());
    }

    #[test]
    fn alignment_reduces_heldout_distance_on_dialect_pairs() {
        // Density 1.0 keeps the rule rewrites consistent across pairs, which is
        // what a bottleneck adapter this small can actually exploit; a lightly
        // pretrained backbone leaves the gap dominated by per-sentence noise.
        let corpus = gen_template_corpus(60, 5).unwrap();
        let vocab = Vocab::build_with_extras(&corpus, 1, &lexicon::vocab_extras());
        let dense = RuleProfile::new(
            "dense",
            crate::dialect::RULE_ORDER.iter().map(|&r| (r, 1.0)).collect(),
        )
        .unwrap();
        let pairs = gen_parallel(&corpus, &dense, &vocab, 60, 17).unwrap();
        let mut model = EncoderModel::init(tiny_cfg(vocab.len()), 23).unwrap();
        crate::encoder::pretrain_mlm(
            &mut model,
            &corpus,
            &vocab,
            &crate::encoder::MlmConfig { epochs: 80, lr: 1e-3, batch_size: 16, seed: 2 },
        )
        .unwrap();
        model.freeze();
        let cfg = AlignTrainConfig {
            epochs: 24,
            batch_size: 8,
            lr: 5e-4,
            critic_lr: 5e-4,
            critic_steps: 1,
            heldout: 15,
            pairs: 60,
        };
        let out = train_tada(&model, &pairs, &cfg, LossMode::Full, 41).unwrap();
        for e in &out.log {
            eprintln!("epoch {} heldout {:?} seq {:?}", e.epoch, e.heldout_l_seq, e.train_l_seq);
        }
        assert!(!out.aborted);
        assert_eq!(out.log.len(), cfg.epochs + 1);
        assert!(out.best_epoch > 0, "identity adapter was never beaten");
        assert!(
            out.best_heldout < out.init_heldout,
            "no improvement: best {} vs init {}",
            out.best_heldout,
            out.init_heldout
        );
    }

    #[test]
    fn unfrozen_backbone_is_rejected() {
        let (mut model, pairs) = fixture(12, &RuleProfile::aae());
        // rebuild unfrozen
        model = EncoderModel::init(*model.cfg(), 23).unwrap();
        let err = train_tada(&model, &pairs, &small_train_cfg(), LossMode::Full, 7).unwrap_err();
        assert!(matches!(err, AlignError::BackboneNotFrozen));
    }

    #[test]
    fn heldout_larger_than_dataset_is_rejected() {
        let (model, pairs) = fixture(12, &RuleProfile::aae());
        let mut cfg = small_train_cfg();
        cfg.heldout = 12;
        let err = train_tada(&model, &pairs[..12], &cfg, LossMode::Full, 7).unwrap_err();
        assert!(matches!(
            err,
            AlignError::TooFewPairs {
                have: 12,
                heldout: 12
            }
        ));
    }

    #[test]
    fn non_finite_loss_aborts_with_partial_log() {
        let (mut model, pairs) = fixture(24, &RuleProfile::aae());
        // position 0 feeds every sequence's CLS slot
        model.params_mut().get_mut("emb.pos").unwrap().data[0] = f64::NAN;
        let out = train_tada(&model, &pairs, &small_train_cfg(), LossMode::Full, 7).unwrap();
        assert!(out.aborted);
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn epoch_log_roundtrips_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let log = vec![
            EpochStats {
                epoch: 0,
                train_l_seq: None,
                train_l_ms: None,
                train_l_adv: None,
                heldout_l_seq: 0.42,
            },
            EpochStats {
                epoch: 1,
                train_l_seq: Some(0.31),
                train_l_ms: Some(-0.11),
                train_l_adv: Some(0.05),
                heldout_l_seq: 0.37,
            },
        ];
        write_epoch_log(&path, &log).unwrap();
        assert_eq!(read_epoch_log(&path).unwrap(), log);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().contains("\"train_l_seq\":null"));
    }

    #[test]
    fn select_best_breaks_ties_toward_lower_lr_then_smaller_batch() {
        let cell = |batch_size: usize, lr: f64, heldout: f64, stable: bool| GridCell {
            batch_size,
            lr,
            heldout_l_seq: heldout,
            best_epoch: 1,
            stable,
        };
        let cells = vec![
            cell(32, 5e-3, 0.2, true),
            cell(16, 5e-4, 0.2, true),
            cell(8, 5e-4, 0.2, true),
            cell(8, 5e-5, 0.5, true),
        ];
        assert_eq!(select_best(&cells), Some(2));
        let cells = vec![
            cell(32, 5e-3, 0.1, false),
            cell(16, 5e-4, 0.2, true),
        ];
        assert_eq!(select_best(&cells), Some(1));
        let cells = vec![cell(8, 5e-3, f64::NAN, true), cell(8, 5e-4, 0.3, false)];
        assert_eq!(select_best(&cells), None);
        assert_eq!(select_best(&[]), None);
    }

    #[test]
    fn grid_search_covers_every_cell_once() {
        let (model, pairs) = fixture(20, &RuleProfile::aae());
        let base = AlignTrainConfig {
            epochs: 1,
            heldout: 6,
            ..AlignTrainConfig::default()
        };
        let out = grid_search(&model, &pairs, &base, LossMode::Full, 13).unwrap();
        assert_eq!(out.cells.len(), 9);
        let mut seen: Vec<(usize, u64)> = out
            .cells
            .iter()
            .map(|c| (c.batch_size, c.lr.to_bits()))
            .collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 9);
        let best = out.best.expect("stable cells exist");
        assert!(out.cells[best].stable);
    }
}
