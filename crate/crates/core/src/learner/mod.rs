//! Replay, losses, ablation switches and the episodic training loop.

mod batch;
mod loss;
mod train;

pub use batch::{Episode, EpisodeBatch, EpisodeBuilder, ReplayBuffer};
pub use loss::{l1_loss, posterior_rows, target_values, td_loss, total_loss, LossGraph, LossParts, Networks};
pub use train::{evaluate, Actor, ActorView, EpisodeMetrics, EvalReport, Learner, StepLog, Trainer};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diversity::IntrinsicConfig;
use crate::error::{Error, Result};
use crate::mixer::MixerKind;
use crate::params::RmsPropConfig;

/// Variants that switch off one ingredient each.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// No intrinsic reward in the TD target.
    Raw,
    /// Identity scale set to zero.
    NoIdentity,
    /// Action-diversity scale set to zero.
    NoAction,
    /// Observation term dropped.
    NoObs,
    /// No individual heads or L1; agent id appended to the encoder input.
    AllShared,
    /// L1 weight set to zero.
    NoL1,
}

impl Ablation {
    pub const ALL: [Ablation; 7] = [
        Ablation::None,
        Ablation::Raw,
        Ablation::NoIdentity,
        Ablation::NoAction,
        Ablation::NoObs,
        Ablation::AllShared,
        Ablation::NoL1,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::Raw => "raw",
            Ablation::NoIdentity => "no_identity",
            Ablation::NoAction => "no_action",
            Ablation::NoObs => "no_obs",
            Ablation::AllShared => "all_shared",
            Ablation::NoL1 => "no_l1",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::UnknownAblation(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum L1Target {
    /// Mean absolute individual-head output over valid steps and actions.
    Outputs,
    /// Mean absolute individual-head weight.
    Weights,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub l1_target: L1Target,
    /// Learner steps between target-network copies.
    pub target_update_interval: u64,
    /// In episodes.
    pub buffer_capacity: usize,
    /// In episodes.
    pub batch_size: usize,
    pub optimizer: RmsPropConfig,
    pub mixer: MixerKind,
    /// Recompute intrinsic rewards on sampled batches instead of using the
    /// values stored at collection time.
    pub recompute_intrinsic: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.01,
            l1_target: L1Target::Outputs,
            target_update_interval: 200,
            buffer_capacity: 5000,
            batch_size: 32,
            optimizer: RmsPropConfig::default(),
            mixer: MixerKind::Dueling,
            recompute_intrinsic: false,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("learner.gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("learner.lambda must be >= 0, got {}", self.lambda)));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.target_update_interval == 0 {
            return Err(Error::Config(
                "learner.batch_size, learner.buffer_capacity and learner.target_update_interval must be positive".into(),
            ));
        }
        if self.batch_size > self.buffer_capacity {
            return Err(Error::Config(format!(
                "learner.batch_size ({}) exceeds learner.buffer_capacity ({})",
                self.batch_size, self.buffer_capacity
            )));
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0 && (0.0..1.0).contains(&o.alpha) && o.eps > 0.0) {
            return Err(Error::Config(format!("invalid optimizer settings {o:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub fc_dim: usize,
    pub hidden_dim: usize,
    pub posterior_hidden: usize,
    pub individual_heads: bool,
    pub identity_input: bool,
    /// Keep the Gaussian normalizing constant in observation log-densities.
    pub normalized_density: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            fc_dim: 64,
            hidden_dim: 64,
            posterior_hidden: 64,
            individual_heads: true,
            identity_input: false,
            normalized_density: false,
        }
    }
}

/// Everything that shapes one learner.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub intrinsic: IntrinsicConfig,
    pub learner: LearnerConfig,
    pub model: ModelConfig,
}

impl Settings {
    pub fn validate(&self) -> Result<()> {
        self.intrinsic.validate()?;
        self.learner.validate()?;
        let m = &self.model;
        if m.fc_dim == 0 || m.hidden_dim == 0 || m.posterior_hidden == 0 {
            return Err(Error::Config("model sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Settings with the ablation's switch applied.
pub fn apply_ablation(settings: &Settings, ablation: Ablation) -> Settings {
    let mut s = settings.clone();
    match ablation {
        Ablation::None => {}
        Ablation::Raw => s.intrinsic.beta = 0.0,
        Ablation::NoIdentity => s.intrinsic.beta1 = 0.0,
        Ablation::NoAction => s.intrinsic.beta2 = 0.0,
        Ablation::NoObs => s.intrinsic.obs_term = false,
        Ablation::AllShared => {
            s.model.individual_heads = false;
            s.model.identity_input = true;
            s.learner.lambda = 0.0;
        }
        Ablation::NoL1 => s.learner.lambda = 0.0,
    }
    s
}

#[cfg(test)]
mod tests;
