use std::path::Path;

use serde::{Deserialize, Serialize};

use super::OptimizerKind;
use crate::adversary::CriticConfig;
use crate::error::{Error, Result};
use crate::policy::{PolicyConfig, SocialFlags};
use crate::trajdata::T_FULL;

/// Hyperparameters of the KL-constrained policy update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrustRegionConfig {
    pub max_kl: f64,
    pub cg_iters: usize,
    pub cg_damping: f64,
    pub backtrack_ratio: f64,
    pub max_backtracks: usize,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self { max_kl: 0.01, cg_iters: 10, cg_damping: 0.1, backtrack_ratio: 0.8, max_backtracks: 10 }
    }
}

impl TrustRegionConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_kl > 0.0
            && self.cg_iters > 0
            && self.cg_damping > 0.0
            && self.backtrack_ratio > 0.0
            && self.backtrack_ratio < 1.0;
        if !ok {
            return Err(Error::Config(format!("invalid trust region settings {self:?}")));
        }
        Ok(())
    }
}

/// Settings of the supervised baseline trainer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupervisedConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_episodes: usize,
    pub optimizer: OptimizerKind,
    /// Validate every this many epochs; 0 disables validation.
    pub eval_every: usize,
    /// Validation evaluations without improvement before stopping; off when
    /// absent.
    pub early_stopping_patience: Option<usize>,
    /// Anneal the step size from `lr` toward 0 along a half cosine.
    pub cosine_decay: bool,
}

impl Default for SupervisedConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-2,
            batch_episodes: 32,
            optimizer: OptimizerKind::Sgd,
            eval_every: 1,
            early_stopping_patience: None,
            cosine_decay: false,
        }
    }
}

/// Full configuration of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Minimum episodes rolled out per iteration.
    pub batch_episodes: usize,
    /// Largest frame batch built from the dataset.
    pub max_batch_agents: usize,
    /// Window stride on training tracklets; validation and test windows never
    /// overlap.
    pub train_stride: usize,
    pub lambda: f64,
    /// Latent code dimension K; 0 disables intention inference.
    pub codes: usize,
    pub seed: u64,
    /// Write a checkpoint every this many iterations; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub d_lr: f64,
    pub q_lr: f64,
    pub critic_optimizer: OptimizerKind,
    /// Validate every this many iterations; 0 disables validation.
    pub eval_every: usize,
    pub early_stopping_patience: Option<usize>,
    /// Supervised epochs fitted before adversarial training, with the
    /// optimizer settings of `supervised`; 0 starts from the initialization.
    pub pretrain_epochs: usize,
    pub social: SocialFlags,
    pub policy: PolicyConfig,
    pub critic: CriticConfig,
    pub trust_region: TrustRegionConfig,
    pub supervised: SupervisedConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 300,
            batch_episodes: 32,
            max_batch_agents: 16,
            train_stride: T_FULL,
            lambda: 1.0,
            codes: 0,
            seed: 0,
            checkpoint_every: 0,
            d_lr: 1e-3,
            q_lr: 1e-3,
            critic_optimizer: OptimizerKind::Sgd,
            eval_every: 1,
            early_stopping_patience: None,
            pretrain_epochs: 0,
            social: SocialFlags { gate: true, vicinity: true },
            policy: PolicyConfig::default(),
            critic: CriticConfig::default(),
            trust_region: TrustRegionConfig::default(),
            supervised: SupervisedConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if ![0, 2, 3].contains(&self.codes) {
            return Err(Error::Config(format!("codes must be 0, 2 or 3, got {}", self.codes)));
        }
        if self.policy.code_dim != 0 && self.policy.code_dim != self.codes {
            return Err(Error::Config("policy.code_dim disagrees with codes".into()));
        }
        if self.batch_episodes == 0 || self.max_batch_agents == 0 || self.train_stride == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.d_lr > 0.0 && self.q_lr > 0.0) {
            return Err(Error::Config("lambda must be non-negative and learning rates positive".into()));
        }
        if self.policy.hidden == 0 || self.policy.fc_hidden == 0 || self.critic.hidden == 0 || self.policy.vicinity_cells == 0 {
            return Err(Error::Config("network widths must be positive".into()));
        }
        self.trust_region.validate()
    }

    /// Policy shape with the code dimension filled in.
    pub fn policy_config(&self) -> PolicyConfig {
        PolicyConfig { code_dim: self.codes, ..self.policy.clone() }
    }
}
