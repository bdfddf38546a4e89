//! Bottleneck adapters and the per-layer adapter stack.

use std::collections::BTreeMap;
use std::path::Path;

use super::{EncoderConfig, EncoderError, TapeBinding};
use crate::fsutil;
use crate::rng::{derived, Rng};
use crate::tensor::{checkpoint, NodeId, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdapterRole {
    Alignment,
    Task,
}

/// One bottleneck adapter per encoder layer: down-project to `b`, ReLU,
/// up-project back to `d`, residual add. Up-projection weights and bias
/// start at exactly zero, so an untrained adapter is a bit-exact identity.
#[derive(Clone, Debug)]
pub struct AdapterModule {
    pub role: AdapterRole,
    name: String,
    layers: usize,
    dim: usize,
    bottleneck: usize,
    params: BTreeMap<String, Tensor>,
}

impl AdapterModule {
    pub fn init(role: AdapterRole, name: &str, cfg: &EncoderConfig, seed: u64) -> AdapterModule {
        let scale = 1.0 / (cfg.dim as f64).sqrt();
        let mut params = BTreeMap::new();
        for l in 0..cfg.layers {
            let mut rng: Rng = derived(seed, &format!("adapter/{name}/down"), l as u64);
            params.insert(
                format!("{name}.layer{l}.down.w"),
                Tensor::rand_uniform(vec![cfg.dim, cfg.bottleneck], scale, &mut rng),
            );
            params.insert(
                format!("{name}.layer{l}.down.b"),
                Tensor::zeros_param(vec![cfg.bottleneck]),
            );
            params.insert(
                format!("{name}.layer{l}.up.w"),
                Tensor::zeros_param(vec![cfg.bottleneck, cfg.dim]),
            );
            params.insert(
                format!("{name}.layer{l}.up.b"),
                Tensor::zeros_param(vec![cfg.dim]),
            );
        }
        AdapterModule {
            role,
            name: name.to_string(),
            layers: cfg.layers,
            dim: cfg.dim,
            bottleneck: cfg.bottleneck,
            params,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn role(&self) -> AdapterRole {
        self.role
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.layers, self.dim, self.bottleneck)
    }

    /// Trainable parameter count: layers * (2*d*b + d + b).
    pub fn param_count(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn named_params(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub(crate) fn params_mut(&mut self) -> &mut BTreeMap<String, Tensor> {
        &mut self.params
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        for t in self.params.values_mut() {
            t.requires_grad = trainable;
            if !trainable {
                t.zero_grad();
            }
        }
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

    pub fn forward_layer(
        &self,
        tape: &mut Tape,
        binding: &mut TapeBinding,
        layer: usize,
        x: NodeId,
    ) -> Result<NodeId, EncoderError> {
        let p = |binding: &mut TapeBinding, tape: &mut Tape, suffix: &str| -> NodeId {
            let name = format!("{}.layer{layer}.{suffix}", self.name);
            binding.bind(tape, &name, &self.params[&name])
        };
        let dw = p(binding, tape, "down.w");
        let db = p(binding, tape, "down.b");
        let uw = p(binding, tape, "up.w");
        let ub = p(binding, tape, "up.b");
        let h = tape.matmul(x, dw)?;
        let h = tape.add_bias(h, db)?;
        let h = tape.relu(h);
        let up = tape.matmul(h, uw)?;
        let up = tape.add_bias(up, ub)?;
        Ok(tape.add(x, up)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), EncoderError> {
        let meta = Tensor::vector(vec![
            match self.role {
                AdapterRole::Alignment => 0.0,
                AdapterRole::Task => 1.0,
            },
            self.layers as f64,
            self.dim as f64,
            self.bottleneck as f64,
        ]);
        let mut arrays: Vec<(String, &Tensor)> = vec![("meta.adapter".to_string(), &meta)];
        arrays.extend(self.params.iter().map(|(n, t)| (n.clone(), t)));
        checkpoint::save(path, &arrays)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<AdapterModule, EncoderError> {
        let arrays = checkpoint::load(path)?;
        let mut meta = None;
        let mut params: BTreeMap<String, Tensor> = BTreeMap::new();
        for (name, tensor) in arrays {
            if name == "meta.adapter" {
                meta = Some(tensor);
            } else {
                params.insert(name, tensor);
            }
        }
        let meta = meta.ok_or(EncoderError::WrongCheckpoint {
            path: path.to_path_buf(),
            kind: "adapter",
        })?;
        if meta.data.len() != 4 {
            return Err(EncoderError::WrongCheckpoint {
                path: path.to_path_buf(),
                kind: "adapter",
            });
        }
        let role = if meta.data[0] == 0.0 {
            AdapterRole::Alignment
        } else {
            AdapterRole::Task
        };
        let name = params
            .keys()
            .next()
            .and_then(|k| k.split(".layer").next())
            .ok_or(EncoderError::WrongCheckpoint {
                path: path.to_path_buf(),
                kind: "adapter",
            })?
            .to_string();
        for t in params.values_mut() {
            t.requires_grad = true;
        }
        Ok(AdapterModule {
            role,
            name,
            layers: meta.data[1] as usize,
            dim: meta.data[2] as usize,
            bottleneck: meta.data[3] as usize,
            params,
        })
    }
}

/// Ordered adapters applied at every insertion site: alignment adapters
/// first, then task adapters.
#[derive(Clone, Debug, Default)]
pub struct AdapterStack {
    modules: Vec<AdapterModule>,
}

impl AdapterStack {
    pub fn empty() -> AdapterStack {
        AdapterStack::default()
    }

    pub fn single(module: AdapterModule) -> AdapterStack {
        AdapterStack {
            modules: vec![module],
        }
    }

    /// Build a stack, enforcing the alignment-before-task order.
    pub fn new(modules: Vec<AdapterModule>) -> Result<AdapterStack, EncoderError> {
        let mut seen_task = false;
        for m in &modules {
            match m.role {
                AdapterRole::Task => seen_task = true,
                AdapterRole::Alignment if seen_task => return Err(EncoderError::StackOrder),
                AdapterRole::Alignment => {}
            }
        }
        Ok(AdapterStack { modules })
    }

    pub fn modules(&self) -> &[AdapterModule] {
        &self.modules
    }

    pub fn modules_mut(&mut self) -> &mut [AdapterModule] {
        &mut self.modules
    }

    pub fn param_count(&self) -> usize {
        self.modules.iter().map(AdapterModule::param_count).sum()
    }

    pub(crate) fn check_against(&self, cfg: &EncoderConfig) -> Result<(), EncoderError> {
        for m in &self.modules {
            let (layers, dim, bottleneck) = m.dims();
            if layers != cfg.layers || dim != cfg.dim || bottleneck != cfg.bottleneck {
                return Err(EncoderError::AdapterMismatch {
                    layers,
                    dim,
                    bottleneck,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{EncoderConfig, EncoderModel};

    fn cfg(layers: usize, dim: usize, bottleneck: usize) -> EncoderConfig {
        EncoderConfig {
            layers,
            dim,
            heads: if dim >= 4 { 2 } else { 1 },
            ffn_dim: dim * 2,
            max_seq: 8,
            vocab_size: 16,
            bottleneck,
        }
    }

    #[test]
    fn parameter_counts() {
        // per layer: d*b down weights + b down bias + b*d up weights + d up bias
        let small = AdapterModule::init(AdapterRole::Alignment, "a", &cfg(1, 2, 1), 0);
        assert_eq!(small.param_count(), 7);
        let full = AdapterModule::init(
            AdapterRole::Alignment,
            "a",
            &EncoderConfig {
                layers: 4,
                dim: 64,
                heads: 4,
                ffn_dim: 256,
                max_seq: 32,
                vocab_size: 100,
                bottleneck: 8,
            },
            0,
        );
        assert_eq!(full.param_count(), 4384);
    }

    #[test]
    fn fresh_adapters_are_a_bit_exact_identity() {
        let c = cfg(2, 8, 2);
        let model = EncoderModel::init(c, 15).unwrap();
        let ids = [2usize, 6, 11, 7, 3];
        let (_, bare) = model.forward_nograd(&ids, &AdapterStack::empty()).unwrap();
        let align = AdapterModule::init(AdapterRole::Alignment, "align", &c, 30);
        let task = AdapterModule::init(AdapterRole::Task, "task", &c, 31);
        let stack = AdapterStack::new(vec![align, task]).unwrap();
        let (_, adapted) = model.forward_nograd(&ids, &stack).unwrap();
        assert_eq!(bare.data, adapted.data);
    }

    #[test]
    fn stack_rejects_task_before_alignment() {
        let c = cfg(1, 4, 2);
        let align = AdapterModule::init(AdapterRole::Alignment, "align", &c, 1);
        let task = AdapterModule::init(AdapterRole::Task, "task", &c, 2);
        let err = AdapterStack::new(vec![task, align]).unwrap_err();
        assert!(matches!(err, EncoderError::StackOrder));
    }

    #[test]
    fn stack_checks_dimensions_against_the_encoder() {
        let c = cfg(2, 8, 2);
        let other = cfg(2, 4, 2);
        let model = EncoderModel::init(c, 1).unwrap();
        let wrong = AdapterModule::init(AdapterRole::Alignment, "align", &other, 2);
        let err = model
            .forward_nograd(&[2, 5, 3], &AdapterStack::single(wrong))
            .unwrap_err();
        assert!(matches!(err, EncoderError::AdapterMismatch { dim: 4, .. }));
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("task.ckpt");
        let c = cfg(2, 8, 2);
        let mut adapter = AdapterModule::init(AdapterRole::Task, "polarity", &c, 9);
        adapter.set_trainable(false);
        adapter.save(&path).unwrap();
        let loaded = AdapterModule::load(&path).unwrap();
        assert_eq!(loaded.role, AdapterRole::Task);
        assert_eq!(loaded.name(), "polarity");
        assert_eq!(loaded.dims(), adapter.dims());
        assert_eq!(loaded.checksum(), adapter.checksum());
    }

    #[test]
    fn encoder_checkpoint_is_not_an_adapter() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.ckpt");
        let c = cfg(1, 4, 2);
        EncoderModel::init(c, 3).unwrap().save(&path).unwrap();
        assert!(matches!(
            AdapterModule::load(&path),
            Err(EncoderError::WrongCheckpoint { kind: "adapter", .. })
        ));
    }

    #[test]
    fn set_trainable_toggles_every_parameter() {
        let c = cfg(2, 4, 2);
        let mut adapter = AdapterModule::init(AdapterRole::Alignment, "a", &c, 1);
        assert!(adapter.named_params().all(|(_, t)| t.requires_grad));
        adapter.set_trainable(false);
        assert!(adapter.named_params().all(|(_, t)| !t.requires_grad));
    }
}
