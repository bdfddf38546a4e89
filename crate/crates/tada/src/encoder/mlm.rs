//! Masked-language-model pretraining for the backbone.

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{mean_of, AdapterStack, EncoderError, EncoderModel, TapeBinding};
use crate::optim::Adam;
use crate::rng::derived;
use crate::tensor::{Tape, Tensor};
use crate::textproc::{tokenize, Corpus, Vocab, MASK_ID, RESERVED};

#[derive(Debug, Clone)]
pub struct MlmConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlmConfig {
    fn default() -> Self {
        MlmConfig {
            epochs: 10,
            lr: 1e-3,
            batch_size: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlmOutcome {
    /// Mean training loss per epoch, in nats.
    pub loss_curve: Vec<f64>,
    pub final_loss: f64,
    /// Unigram entropy of the corpus tokens: the loss of the best
    /// context-free predictor, used as the pretraining sanity baseline.
    pub unigram_entropy: f64,
}

/// Entropy (nats) of the interior-token unigram distribution.
pub fn unigram_entropy(sequences: &[Vec<usize>]) -> f64 {
    let mut counts = std::collections::HashMap::new();
    let mut total = 0usize;
    for ids in sequences {
        for &id in &ids[1..ids.len() - 1] {
            *counts.entry(id).or_insert(0usize) += 1;
            total += 1;
        }
    }
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}

struct MaskedExample {
    input_ids: Vec<usize>,
    positions: Vec<usize>,
    targets: Vec<usize>,
}

/// BERT-style corruption: 15% of interior tokens (at least one), of which
/// 80% become MASK, 10% a random non-reserved id, 10% stay unchanged.
fn mask_sentence(ids: &[usize], vocab_size: usize, rng: &mut crate::rng::Rng) -> MaskedExample {
    let interior: Vec<usize> = (1..ids.len() - 1).collect();
    let k = ((interior.len() as f64) * 0.15).round().max(1.0) as usize;
    let mut positions: Vec<usize> = interior
        .choose_multiple(rng, k.min(interior.len()))
        .copied()
        .collect();
    positions.sort_unstable();
    let mut input_ids = ids.to_vec();
    let mut targets = Vec::with_capacity(positions.len());
    for &pos in &positions {
        targets.push(ids[pos]);
        let r: f64 = rng.gen();
        if r < 0.8 {
            input_ids[pos] = MASK_ID;
        } else if r < 0.9 {
            input_ids[pos] = rng.gen_range(RESERVED.len()..vocab_size);
        }
    }
    MaskedExample {
        input_ids,
        positions,
        targets,
    }
}

/// Train the backbone (all parameters, MLM head included) on an SAE corpus.
/// Aborts with the partial loss curve if the loss goes non-finite.
pub fn pretrain_mlm(
    model: &mut EncoderModel,
    corpus: &Corpus,
    vocab: &Vocab,
    cfg: &MlmConfig,
) -> Result<MlmOutcome, EncoderError> {
    let sequences: Vec<Vec<usize>> = corpus
        .sentences()
        .iter()
        .map(|s| {
            tokenize(s, vocab)
                .expect("corpus sentences are non-empty")
                .ids()
                .to_vec()
        })
        .collect();
    let entropy = unigram_entropy(&sequences);
    let vocab_size = model.cfg().vocab_size;
    let stack = AdapterStack::empty();
    let mut opt = Adam::new(cfg.lr);
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..sequences.len()).collect();
        order.shuffle(&mut derived(cfg.seed, "mlm/shuffle", epoch as u64));
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let mut binding = TapeBinding::new();
            let mut losses = Vec::with_capacity(chunk.len());
            for &si in chunk {
                let mut rng = derived(
                    cfg.seed,
                    "mlm/mask",
                    (epoch * sequences.len() + si) as u64,
                );
                let example = mask_sentence(&sequences[si], vocab_size, &mut rng);
                let (hidden, _) =
                    model.forward_seq(&mut tape, &mut binding, &example.input_ids, &stack)?;
                let logits = model.mlm_logits(&mut tape, &mut binding, hidden, &example.positions)?;
                losses.push(tape.cross_entropy(logits, &example.targets)?);
            }
            let loss = mean_of(&mut tape, &losses)?;
            let loss_value = tape.item(loss);
            if !loss_value.is_finite() {
                return Err(EncoderError::Diverged {
                    epoch,
                    partial: curve,
                });
            }
            tape.backward(loss)?;
            binding.export_grads(&tape, model.params_mut());
            let mut refs: Vec<(String, &mut Tensor)> = Vec::new();
            for (name, t) in model.params_mut().iter_mut() {
                refs.push((name.clone(), t));
            }
            opt.step(&mut refs);
            epoch_loss += loss_value;
            batches += 1;
        }
        curve.push(epoch_loss / batches as f64);
    }
    let final_loss = *curve.last().expect("at least one epoch");
    Ok(MlmOutcome {
        loss_curve: curve,
        final_loss,
        unigram_entropy: entropy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{EncoderConfig, EncoderModel};
    use crate::textproc::{gen_template_corpus, Provenance, CLS_ID, SEP_ID};

    fn cfg(vocab: usize) -> EncoderConfig {
        EncoderConfig {
            layers: 2,
            dim: 32,
            heads: 4,
            ffn_dim: 64,
            max_seq: 16,
            vocab_size: vocab,
            bottleneck: 4,
        }
    }

    #[test]
    fn masking_respects_sentinels_and_records_targets() {
        let ids = vec![CLS_ID, 6, 7, 8, 9, 10, SEP_ID];
        for seed in 0..60 {
            let mut rng = crate::rng::derived(seed, "test/mask", 0);
            let ex = mask_sentence(&ids, 24, &mut rng);
            assert_eq!(ex.positions.len(), 1); // round(0.15 * 5) < 1 -> min 1
            let pos = ex.positions[0];
            assert!((1..ids.len() - 1).contains(&pos));
            assert_eq!(ex.targets, vec![ids[pos]]);
            for (i, (&inp, &orig)) in ex.input_ids.iter().zip(&ids).enumerate() {
                if i != pos {
                    assert_eq!(inp, orig);
                }
            }
            if ex.input_ids[pos] != ids[pos] {
                assert!(ex.input_ids[pos] == MASK_ID || ex.input_ids[pos] >= RESERVED.len());
            }
        }
    }

    #[test]
    fn unigram_entropy_of_uniform_tokens() {
        // 4 equally frequent interior tokens: H = ln 4
        let seqs = vec![vec![CLS_ID, 5, 6, SEP_ID], vec![CLS_ID, 7, 8, SEP_ID]];
        let h = unigram_entropy(&seqs);
        assert!((h - (4.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn memorizes_a_single_sentence() {
        let corpus = Corpus::from_sentences(
            vec!["the dog chased the cat .".into()],
            Provenance::Generated,
        )
        .unwrap();
        let vocab = Vocab::build(&corpus, 1);
        let mut model = EncoderModel::init(cfg(vocab.len()), 40).unwrap();
        let out = pretrain_mlm(
            &mut model,
            &corpus,
            &vocab,
            &MlmConfig {
                epochs: 200,
                lr: 1e-3,
                batch_size: 4,
                seed: 8,
            },
        )
        .unwrap();
        assert!(
            out.final_loss < 0.1,
            "final loss {} after {:?}",
            out.final_loss,
            &out.loss_curve[out.loss_curve.len().min(5) - 1..]
        );
    }

    #[test]
    fn beats_the_unigram_baseline_and_is_reproducible() {
        let corpus = gen_template_corpus(64, 3).unwrap();
        let vocab = Vocab::build(&corpus, 1);
        let mlm_cfg = MlmConfig {
            epochs: 20,
            lr: 1e-3,
            batch_size: 16,
            seed: 21,
        };
        let mut model = EncoderModel::init(cfg(vocab.len()), 40).unwrap();
        let out = pretrain_mlm(&mut model, &corpus, &vocab, &mlm_cfg).unwrap();
        assert!(
            out.final_loss < out.unigram_entropy,
            "loss {} vs entropy {}",
            out.final_loss,
            out.unigram_entropy
        );
        let mut again = EncoderModel::init(cfg(vocab.len()), 40).unwrap();
        let out2 = pretrain_mlm(&mut again, &corpus, &vocab, &mlm_cfg).unwrap();
        assert_eq!(out.loss_curve, out2.loss_curve);
        assert_eq!(model.checksum(), again.checksum());
    }
}
