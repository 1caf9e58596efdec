//! Identity-aware intrinsic reward.
//!
//! For agent `i` at history `τ` taking action `a` and then observing `o′`:
//!
//! ```text
//! r_i = β2 · KL(SoftMax(β1·Q_i(·|τ)) ‖ p(·|τ))  +  obs_i
//! obs_i = β1 · log q_φ(o′|τ,a,i) − log q_φ2(o′|τ,a)        (forward)
//! obs_i = β1 · log q_η1(i|o′,τ,a) − log q_η2(i|τ,a)        (backward)
//! ```
//!
//! where `p(·|τ)` mixes the Boltzmann policies of every identity evaluated on
//! the same history. The per-step reward is the mean of `r_i` over agents.

mod oracle;
mod posterior;

pub use oracle::{
    action_bound, backward_bound, expectation, forward_bound, mc_mutual_information, JointTable, MutualInformation,
    TablePosteriors,
};
pub use posterior::{
    train_posteriors, PosteriorConfig, PosteriorKind, PosteriorLosses, PosteriorModel, PosteriorModels, PosteriorRows,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Matrix;
use crate::policy::{boltzmann_policy, QOutputs};
use crate::tape::{Tape, Var};

/// Lower clamp for every probability that enters a logarithm.
pub const PROB_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalMode {
    /// Equal weight on every identity.
    Uniform,
    /// Identity weights from the learned `q_ξ(id|τ)`.
    Variational,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsMode {
    /// Next-observation density models.
    Forward,
    /// Identity classifiers with and without the next observation.
    Backward,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicConfig {
    pub beta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub marginal: MarginalMode,
    pub obs_mode: ObsMode,
    /// Whether the observation term enters the reward at all.
    pub obs_term: bool,
    /// Replacement for log-densities that are non-finite or below this value.
    pub log_floor: f64,
}

impl Default for IntrinsicConfig {
    fn default() -> Self {
        Self {
            beta: 0.15,
            beta1: 2.0,
            beta2: 1.0,
            marginal: MarginalMode::Uniform,
            obs_mode: ObsMode::Forward,
            obs_term: true,
            log_floor: -1e4,
        }
    }
}

impl IntrinsicConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta", self.beta), ("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("intrinsic.{name} must be finite and >= 0, got {v}")));
            }
        }
        if !self.log_floor.is_finite() {
            return Err(Error::Config("intrinsic.log_floor must be finite".into()));
        }
        Ok(())
    }

    /// Posterior models the reward reads from under this configuration.
    pub fn required_models(&self) -> Vec<PosteriorKind> {
        let mut kinds = Vec::new();
        if self.obs_term {
            match self.obs_mode {
                ObsMode::Forward => kinds.extend([PosteriorKind::ObsGivenIdentity, PosteriorKind::Obs]),
                ObsMode::Backward => kinds.extend([PosteriorKind::IdentityGivenNext, PosteriorKind::IdentityPrior]),
            }
        }
        if self.marginal == MarginalMode::Variational {
            kinds.push(PosteriorKind::IdentityGivenTrajectory);
        }
        kinds
    }
}

/// Read access to the five posterior estimates, row by row.
///
/// Each method evaluates every row of `rows` and returns one value per row.
/// Log-probabilities may be non-finite; callers clamp them.
pub trait PosteriorEstimates {
    /// `log q_φ(o′|τ,a,id)`.
    fn log_obs_given_identity(&self, rows: &PosteriorRows) -> Vec<f64>;
    /// `log q_φ2(o′|τ,a)`.
    fn log_obs(&self, rows: &PosteriorRows) -> Vec<f64>;
    /// `log q_η1(id|o′,τ,a)`.
    fn log_identity_given_next(&self, rows: &PosteriorRows) -> Vec<f64>;
    /// `log q_η2(id|τ,a)`.
    fn log_identity_prior(&self, rows: &PosteriorRows) -> Vec<f64>;
    /// `q_ξ(·|τ)` as a full distribution over identities.
    fn identity_given_trajectory(&self, rows: &PosteriorRows) -> Vec<Vec<f64>>;
}

/// Mean of the given distributions.
pub fn marginal_policy(policies: &[Vec<f64>]) -> Vec<f64> {
    let weights = vec![1.0 / policies.len() as f64; policies.len()];
    weighted_marginal(policies, &weights)
}

/// `Σ_j w_j · policies[j]`.
pub fn weighted_marginal(policies: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let width = policies.first().map_or(0, Vec::len);
    let mut out = vec![0.0; width];
    for (p, &w) in policies.iter().zip(weights) {
        for (o, &x) in out.iter_mut().zip(p) {
            *o += w * x;
        }
    }
    out
}

/// `KL(p ‖ q)` with `q` clamped below at [`PROB_FLOOR`]; zero-mass entries of
/// `p` contribute nothing.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pk, _)| pk > 0.0)
        .map(|(&pk, &qk)| pk * (pk.ln() - qk.max(PROB_FLOOR).ln()))
        .sum()
}

pub fn action_diversity_reward(agent_policy: &[f64], marginal: &[f64], beta2: f64) -> f64 {
    beta2 * kl_divergence(agent_policy, marginal)
}

/// Diagonal unit-variance Gaussian log-density; the `-(d/2)·ln(2π)` term is
/// included only when `normalized`.
pub fn gaussian_log_density(x: &[f64], mean: &[f64], normalized: bool) -> f64 {
    let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    let mut out = -0.5 * sq;
    if normalized {
        out -= 0.5 * x.len() as f64 * (2.0 * std::f64::consts::PI).ln();
    }
    out
}

/// Log value after flooring; the flag reports whether the floor applied.
pub fn clamp_log(x: f64, floor: f64) -> (f64, bool) {
    if x.is_nan() || x < floor {
        (floor, true)
    } else {
        (x, false)
    }
}

/// One observation-term value and whether any of its logs were clamped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObsTerm {
    pub value: f64,
    pub clamped: usize,
}

/// `β1·log_num − log_den` after clamping both logs at `floor`.
pub fn combine_obs_logs(log_num: f64, log_den: f64, beta1: f64, floor: f64) -> ObsTerm {
    let (num, c1) = clamp_log(log_num, floor);
    let (den, c2) = clamp_log(log_den, floor);
    ObsTerm {
        value: beta1 * num - den,
        clamped: usize::from(c1) + usize::from(c2),
    }
}

fn single_row(o_next: &[f64], tau: &[f64], action: usize, identity: usize) -> PosteriorRows {
    PosteriorRows {
        hidden: Matrix::from_shape_vec((1, tau.len()), tau.to_vec()).expect("one row"),
        actions: vec![action],
        identities: vec![identity],
        next_obs: Matrix::from_shape_vec((1, o_next.len()), o_next.to_vec()).expect("one row"),
    }
}

pub fn forward_obs_reward(
    o_next: &[f64],
    tau: &[f64],
    action: usize,
    identity: usize,
    models: &impl PosteriorEstimates,
    cfg: &IntrinsicConfig,
) -> ObsTerm {
    let rows = single_row(o_next, tau, action, identity);
    obs_terms(&rows, models, cfg.beta1, ObsMode::Forward, cfg.log_floor)[0]
}

pub fn backward_obs_reward(
    o_next: &[f64],
    tau: &[f64],
    action: usize,
    identity: usize,
    models: &impl PosteriorEstimates,
    cfg: &IntrinsicConfig,
) -> ObsTerm {
    let rows = single_row(o_next, tau, action, identity);
    obs_terms(&rows, models, cfg.beta1, ObsMode::Backward, cfg.log_floor)[0]
}

/// Observation term for every row. Identity log-probabilities use the
/// probability floor; density logs use `log_floor`.
pub fn obs_terms(rows: &PosteriorRows, models: &impl PosteriorEstimates, beta1: f64, mode: ObsMode, log_floor: f64) -> Vec<ObsTerm> {
    let (num, den, floor) = match mode {
        ObsMode::Forward => (models.log_obs_given_identity(rows), models.log_obs(rows), log_floor),
        ObsMode::Backward => (
            models.log_identity_given_next(rows),
            models.log_identity_prior(rows),
            PROB_FLOOR.ln(),
        ),
    };
    num.iter()
        .zip(&den)
        .map(|(&n, &d)| combine_obs_logs(n, d, beta1, floor))
        .collect()
}

/// What one agent contributes to a step's intrinsic reward.
#[derive(Clone, Copy, Debug)]
pub struct AgentTransition<'a> {
    /// Recurrent summary of the agent's history before acting.
    pub hidden: &'a [f64],
    /// Local values of this history under every identity's head.
    pub q_by_identity: &'a [QOutputs],
    pub identity: usize,
    pub action: usize,
    pub next_obs: &'a [f64],
}

/// Per-agent components of one step's intrinsic reward.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IntrinsicBreakdown {
    /// `β2 · KL` per agent.
    pub action: Vec<f64>,
    /// Observation term per agent; zero when the term is disabled.
    pub obs: Vec<f64>,
    /// Mean over agents of `action + obs`.
    pub total: f64,
    /// Logs replaced by a floor while computing this step.
    pub clamped: usize,
}

impl IntrinsicBreakdown {
    pub fn action_mean(&self) -> f64 {
        mean(&self.action)
    }

    pub fn obs_mean(&self) -> f64 {
        mean(&self.obs)
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub fn intrinsic_reward(
    agents: &[AgentTransition<'_>],
    models: &impl PosteriorEstimates,
    cfg: &IntrinsicConfig,
) -> Result<IntrinsicBreakdown> {
    if agents.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = agents.len();
    let hidden_dim = agents[0].hidden.len();
    let obs_dim = agents[0].next_obs.len();
    for agent in agents {
        if agent.q_by_identity.len() != n {
            return Err(Error::Dimension {
                context: "values per identity",
                expected: n,
                actual: agent.q_by_identity.len(),
            });
        }
        if agent.identity >= n {
            return Err(Error::AgentIndex {
                index: agent.identity,
                n_agents: n,
            });
        }
        if agent.hidden.len() != hidden_dim || agent.next_obs.len() != obs_dim {
            return Err(Error::Dimension {
                context: "intrinsic reward inputs",
                expected: hidden_dim + obs_dim,
                actual: agent.hidden.len() + agent.next_obs.len(),
            });
        }
    }
    let rows = PosteriorRows {
        hidden: Matrix::from_shape_fn((n, hidden_dim), |(r, c)| agents[r].hidden[c]),
        actions: agents.iter().map(|a| a.action).collect(),
        identities: agents.iter().map(|a| a.identity).collect(),
        next_obs: Matrix::from_shape_fn((n, obs_dim), |(r, c)| agents[r].next_obs[c]),
    };

    let weights = match cfg.marginal {
        MarginalMode::Uniform => vec![vec![1.0 / n as f64; n]; n],
        MarginalMode::Variational => models.identity_given_trajectory(&rows),
    };
    let action: Vec<f64> = agents
        .iter()
        .zip(&weights)
        .map(|(agent, w)| {
            let policies = identity_policies(agent.q_by_identity, cfg.beta1);
            let marginal = weighted_marginal(&policies, w);
            action_diversity_reward(&policies[agent.identity], &marginal, cfg.beta2)
        })
        .collect();

    let (obs, clamped) = if cfg.obs_term {
        let terms = obs_terms(&rows, models, cfg.beta1, cfg.obs_mode, cfg.log_floor);
        (
            terms.iter().map(|t| t.value).collect(),
            terms.iter().map(|t| t.clamped).sum(),
        )
    } else {
        (vec![0.0; n], 0)
    };
    let total = action.iter().zip(&obs).map(|(a, o)| a + o).sum::<f64>() / n as f64;
    Ok(IntrinsicBreakdown {
        action,
        obs,
        total,
        clamped,
    })
}

/// Differentiable `KL(SoftMax(β1·q_own) ‖ mean_j SoftMax(β1·q_j))` per row.
///
/// `q_by_identity[j]` is `rows × n_actions`; returns `rows × 1`.
pub fn action_kl_var(tape: &mut Tape, q_by_identity: &[Var], own: usize, beta1: f64) -> Var {
    let n = q_by_identity.len() as f64;
    let log_probs: Vec<Var> = q_by_identity
        .iter()
        .map(|&q| {
            let scaled = tape.scale(q, beta1);
            tape.log_softmax(scaled)
        })
        .collect();
    let probs: Vec<Var> = log_probs.iter().map(|&lp| tape.exp(lp)).collect();
    let mut total = probs[0];
    for &p in &probs[1..] {
        total = tape.add(total, p);
    }
    let marginal = tape.scale(total, 1.0 / n);
    let log_marginal = tape.log_clamped(marginal, PROB_FLOOR);
    let diff = tape.sub(log_probs[own], log_marginal);
    let weighted = tape.mul(probs[own], diff);
    tape.row_sum(weighted)
}

/// Boltzmann policies of one history under every identity.
pub fn identity_policies(q_by_identity: &[QOutputs], beta1: f64) -> Vec<Vec<f64>> {
    q_by_identity.iter().map(|q| boltzmann_policy(&q.q_total_local, beta1)).collect()
}

#[cfg(test)]
mod tests;
