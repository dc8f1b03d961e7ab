use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::DatasetFingerprint;
use crate::error::{Error, Result};
use crate::model::{Ablations, ModelOptions};
use crate::objective::{LossWeights, PoolMode};

/// Every hyperparameter of a run. Field names double as config-file keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Embedding size.
    pub dim: usize,
    /// Propagation layers per graph.
    pub layers: usize,
    /// Hyperedges per behavior and side.
    pub hyperedges: usize,
    pub lr: f64,
    /// L2 regularization coefficient.
    pub beta: f64,
    /// Weight of the combined contrastive loss.
    pub alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// InfoNCE temperature.
    pub tau: f64,
    /// BPR triples per behavior per step.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation HR@10 improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Multiplier on the Xavier draw of every parameter.
    pub init_scale: f64,
    pub ablations: Ablations,
    pub negative_pool: PoolMode,
    pub min_target_interactions: usize,
    /// Cutoffs reported on the test split.
    pub eval_ns: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            layers: 2,
            hyperedges: 32,
            lr: 5e-4,
            beta: 1e-3,
            alpha: 0.1,
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            tau: 0.1,
            batch_size: 1024,
            max_epochs: 200,
            patience: 10,
            seed: 2024,
            init_scale: 1.0,
            ablations: Ablations::none(),
            negative_pool: PoolMode::InBatch,
            min_target_interactions: 3,
            eval_ns: vec![10],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("layers", self.layers),
            ("hyperedges", self.hyperedges),
            ("batch_size", self.batch_size),
            ("patience", self.patience),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be finite and ≥ 0, got {}", self.lr)));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config(format!(
                "init_scale must be finite and > 0, got {}",
                self.init_scale
            )));
        }
        if self.eval_ns.iter().any(|&n| n == 0) {
            return Err(Error::Config("eval_ns entries must be positive".into()));
        }
        self.loss_weights().validate()
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            beta: self.beta,
            tau: self.tau,
        }
    }

    pub fn model_options(&self) -> ModelOptions {
        ModelOptions::new(self.layers, self.ablations.clone())
    }

    /// Digest of the config together with the dataset it runs on.
    pub fn config_hash(&self, data: &DatasetFingerprint) -> u64 {
        let payload = serde_json::to_vec(&(self, data)).expect("config serializes");
        let digest = Sha256::digest(&payload);
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }
}
