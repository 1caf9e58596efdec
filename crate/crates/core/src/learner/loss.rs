//! TD and L1 losses over padded episode batches.
//!
//! Batch rows are laid out time-major: row `t·R + b·n + i` holds agent `i` of
//! episode `b` at step `t`, with `R = B·n`.

use ndarray::s;

use super::{EpisodeBatch, L1Target, Settings};
use crate::diversity::PosteriorRows;
use crate::envsim::EnvSpec;
use crate::error::{Error, Result};
use crate::mixer::Mixer;
use crate::params::{Matrix, ParamSet};
use crate::policy::{AgentNet, AgentNetConfig, QVars};
use crate::rng::Rng;
use crate::tape::{Tape, Var};

/// Network structure; parameters live in a separate [`ParamSet`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Networks {
    pub agent: AgentNet,
    pub mixer: Mixer,
}

impl Networks {
    pub fn new(params: &mut ParamSet, spec: EnvSpec, settings: &Settings, rng: &mut Rng) -> Self {
        let agent = AgentNet::new(params, Self::agent_config(spec, settings), rng);
        let mixer = Mixer::new(params, settings.learner.mixer, spec.n_agents, spec.state_dim, rng);
        Self { agent, mixer }
    }

    pub fn agent_config(spec: EnvSpec, settings: &Settings) -> AgentNetConfig {
        let m = &settings.model;
        AgentNetConfig {
            obs_dim: spec.obs_dim,
            n_actions: spec.n_actions,
            n_agents: spec.n_agents,
            fc_dim: m.fc_dim,
            hidden_dim: m.hidden_dim,
            individual_heads: m.individual_heads,
            identity_input: m.identity_input,
        }
    }

    /// Encoder inputs for steps `0..=T`, with every row's identity replaced
    /// by `identity` when given.
    pub fn batch_inputs(&self, batch: &EpisodeBatch, identity: Option<usize>) -> Matrix {
        let (b_n, t_max) = (batch.episodes(), batch.max_len());
        let n = batch.spec.n_agents;
        let rows = b_n * n;
        let mut x = Matrix::zeros(((t_max + 1) * rows, self.agent.config.input_dim()));
        for t in 0..=t_max {
            for b in 0..b_n {
                let valid_prev = t > 0 && batch.filled_mask[[b, t - 1]] > 0.0;
                for i in 0..n {
                    let r = t * rows + b * n + i;
                    let obs = batch.observations.slice(s![b, t, i, ..]);
                    let prev = valid_prev.then(|| batch.actions[[b, t - 1, i]]);
                    let mut row = x.row_mut(r);
                    let row = row.as_slice_mut().expect("contiguous row");
                    self.agent
                        .write_input(row, obs.as_slice().expect("contiguous obs"), prev, identity.unwrap_or(i));
                }
            }
        }
        x
    }

    /// Runs the encoder over all `T+1` steps and the heads over `steps`.
    fn unroll(&self, tape: &mut Tape, params: &ParamSet, x: Matrix, rows: usize, steps: usize) -> Vec<Var> {
        let x = tape.constant(x);
        let x = if steps * rows == tape.shape(x).0 {
            x
        } else {
            tape.slice_rows(x, 0, steps * rows)
        };
        let h0 = tape.constant(Matrix::zeros((rows, self.agent.config.hidden_dim)));
        self.agent.encode(tape, params, x, h0, steps)
    }
}

fn row_agents(rows: usize, n: usize) -> Vec<usize> {
    (0..rows).map(|r| r % n).collect()
}

/// Mixer inputs: states for steps `from..from+T`, one row per (step, episode).
fn states(batch: &EpisodeBatch, from: usize) -> Matrix {
    let (b_n, t_max) = (batch.episodes(), batch.max_len());
    let mut out = Matrix::zeros((t_max * b_n, batch.spec.state_dim));
    for t in 0..t_max {
        for b in 0..b_n {
            out.row_mut(t * b_n + b).assign(&batch.global_state.slice(s![b, from + t, ..]));
        }
    }
    out
}

fn step_column(values: &Matrix) -> Matrix {
    // `[B, T]` to a `(T·B) × 1` column ordered (t, b).
    let (b_n, t_max) = values.dim();
    Matrix::from_shape_fn((t_max * b_n, 1), |(r, _)| values[[r % b_n, r / b_n]])
}

/// `γ`-discounted greedy joint value of the next step under `target`, per
/// (step, episode) row.
pub fn target_values(nets: &Networks, target: &ParamSet, batch: &EpisodeBatch) -> Matrix {
    let (b_n, t_max, n) = (batch.episodes(), batch.max_len(), batch.spec.n_agents);
    let rows = b_n * n;
    let mut tape = Tape::no_grad();
    let hs = nets.unroll(&mut tape, target, nets.batch_inputs(batch, None), rows, t_max + 1);
    let next = tape.concat_rows(&hs[1..]);
    let q = nets.agent.heads(&mut tape, target, next, &row_agents(t_max * rows, n));
    let vmax = tape.row_max(q.total);
    let vmax = tape.reshape(vmax, t_max * b_n, n);
    let s_next = tape.constant(states(batch, 1));
    let value = nets.mixer.mix_vars(&mut tape, target, vmax, vmax, s_next);
    tape.value(value).clone()
}

/// Tape nodes of one loss evaluation.
#[derive(Clone, Debug)]
pub struct LossGraph {
    pub td: Var,
    pub l1: Var,
    pub total: Var,
    /// `(T·B) × 1` joint values of the taken actions.
    pub q_tot: Var,
    /// `(T·R) × hidden_dim` encoder states.
    pub hidden: Var,
    pub q: QVars,
}

/// Scalar values of one loss evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub td: f64,
    pub l1: f64,
    pub total: f64,
}

impl LossGraph {
    pub fn parts(&self, tape: &Tape) -> LossParts {
        LossParts {
            td: tape.scalar(self.td),
            l1: tape.scalar(self.l1),
            total: tape.scalar(self.total),
        }
    }

    /// Builds the full objective. `targets` are the bootstrapped next-step
    /// values from [`target_values`].
    pub fn build(
        tape: &mut Tape,
        nets: &Networks,
        online: &ParamSet,
        targets: &Matrix,
        batch: &EpisodeBatch,
        settings: &Settings,
    ) -> Result<Self> {
        let (b_n, t_max, n) = (batch.episodes(), batch.max_len(), batch.spec.n_agents);
        let count = batch.valid_steps();
        if b_n == 0 || t_max == 0 || count <= 0.0 {
            return Err(Error::EmptyBatch);
        }
        let rows = b_n * n;
        let hs = nets.unroll(tape, online, nets.batch_inputs(batch, None), rows, t_max);
        let hidden = tape.concat_rows(&hs);
        let q = nets.agent.heads(tape, online, hidden, &row_agents(t_max * rows, n));

        let actions: Vec<usize> = (0..t_max * rows)
            .map(|r| {
                let (t, rest) = (r / rows, r % rows);
                batch.actions[[rest / n, t, rest % n]]
            })
            .collect();
        let chosen = tape.gather(q.total, actions);
        let chosen = tape.reshape(chosen, t_max * b_n, n);
        let vmax = tape.row_max(q.total);
        let vmax = tape.reshape(vmax, t_max * b_n, n);
        let state = tape.constant(states(batch, 0));
        let q_tot = nets.mixer.mix_vars(tape, online, chosen, vmax, state);

        let beta = settings.intrinsic.beta;
        let gamma = settings.learner.gamma;
        let mask = step_column(&batch.filled_mask);
        let not_done = step_column(&batch.terminated).mapv(|d| 1.0 - d);
        let y = step_column(&batch.env_reward)
            + step_column(&batch.intrinsic_reward) * beta
            + &(&not_done * targets) * gamma;
        // Padded rows may hold anything; zero them before they meet the mask.
        let y = tape.constant(&y * &mask);
        let m = tape.constant(mask.clone());
        let err = tape.sub(q_tot, y);
        let err = tape.mul(err, m);
        let sq = tape.square(err);
        let sum = tape.sum(sq);
        let td = tape.scale(sum, 1.0 / count);

        let l1 = l1_graph(tape, nets, online, &q, &mask, rows, count, settings.learner.l1_target);
        let weighted = tape.scale(l1, settings.learner.lambda);
        let total = tape.add(td, weighted);
        Ok(Self {
            td,
            l1,
            total,
            q_tot,
            hidden,
            q,
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn l1_graph(
    tape: &mut Tape,
    nets: &Networks,
    online: &ParamSet,
    q: &QVars,
    step_mask: &Matrix,
    rows: usize,
    count: f64,
    target: L1Target,
) -> Var {
    let Some(individual) = q.individual else {
        return tape.constant(Matrix::zeros((1, 1)));
    };
    match target {
        L1Target::Outputs => {
            let n_actions = nets.agent.config.n_actions;
            let n_agents = nets.agent.config.n_agents;
            let b_n = rows / n_agents;
            // Step mask repeated for every agent row of the same (t, b).
            let row_mask = Matrix::from_shape_fn((step_mask.nrows() * n_agents, 1), |(r, _)| {
                let (t, rest) = (r / rows, r % rows);
                step_mask[[t * b_n + rest / n_agents, 0]]
            });
            let m = tape.constant(row_mask);
            let a = tape.abs(individual);
            let s = tape.row_sum(a);
            let s = tape.mul(s, m);
            let total = tape.sum(s);
            tape.scale(total, 1.0 / (count * n_actions as f64))
        }
        L1Target::Weights => {
            let mut terms = Vec::new();
            for head in nets.agent.individual_heads() {
                let mut numel = 0.0;
                let mut parts = Vec::new();
                for id in [head.weight, head.bias] {
                    numel += online.get(id).len() as f64;
                    let p = tape.param(online, id);
                    let a = tape.abs(p);
                    parts.push(tape.sum(a));
                }
                let s = tape.add(parts[0], parts[1]);
                terms.push(tape.scale(s, 1.0 / numel));
            }
            let mut total = terms[0];
            for &t in &terms[1..] {
                total = tape.add(total, t);
            }
            total
        }
    }
}

/// Mean squared TD error over valid steps.
pub fn td_loss(nets: &Networks, online: &ParamSet, target: &ParamSet, batch: &EpisodeBatch, settings: &Settings) -> Result<f64> {
    Ok(total_loss(nets, online, target, batch, settings)?.td)
}

pub fn total_loss(
    nets: &Networks,
    online: &ParamSet,
    target: &ParamSet,
    batch: &EpisodeBatch,
    settings: &Settings,
) -> Result<LossParts> {
    let targets = target_values(nets, target, batch);
    let mut tape = Tape::no_grad();
    let graph = LossGraph::build(&mut tape, nets, online, &targets, batch, settings)?;
    Ok(graph.parts(&tape))
}

/// `Σ_i` mean absolute individual-head output of agent `i` over its valid
/// rows and all actions. `outputs` is `rows × n_actions`; `agents[r]` owns
/// row `r`.
pub fn l1_loss(outputs: &Matrix, agents: &[usize], row_mask: &[f64], n_agents: usize) -> f64 {
    let mut sums = vec![0.0; n_agents];
    let mut counts = vec![0.0; n_agents];
    for ((row, &i), &m) in outputs.rows().into_iter().zip(agents).zip(row_mask) {
        sums[i] += m * row.iter().map(|x| x.abs()).sum::<f64>();
        counts[i] += m * outputs.ncols() as f64;
    }
    sums.iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0.0)
        .map(|(s, c)| s / c)
        .sum()
}

/// Conditioning rows for posterior training, aligned with the loss graph's
/// hidden rows over steps `0..T`, plus the per-row validity mask.
pub fn posterior_rows(batch: &EpisodeBatch, hidden: &Matrix) -> (PosteriorRows, Vec<f64>) {
    let (b_n, t_max, n) = (batch.episodes(), batch.max_len(), batch.spec.n_agents);
    let rows = b_n * n;
    let total = t_max * rows;
    let obs_dim = batch.spec.obs_dim;
    let mut next_obs = Matrix::zeros((total, obs_dim));
    let mut actions = Vec::with_capacity(total);
    let mut identities = Vec::with_capacity(total);
    let mut mask = Vec::with_capacity(total);
    for r in 0..total {
        let (t, rest) = (r / rows, r % rows);
        let (b, i) = (rest / n, rest % n);
        next_obs.row_mut(r).assign(&batch.observations.slice(s![b, t + 1, i, ..]));
        actions.push(batch.actions[[b, t, i]]);
        identities.push(i);
        mask.push(batch.filled_mask[[b, t]]);
    }
    (
        PosteriorRows {
            hidden: hidden.clone(),
            actions,
            identities,
            next_obs,
        },
        mask,
    )
}
