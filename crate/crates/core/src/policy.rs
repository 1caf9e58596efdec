//! Recurrent agent network with a shared Q head and per-agent individual
//! heads, plus exploration policies.
//!
//! Every agent runs the same encoder (`Linear -> ReLU -> GRU`). The local
//! value of agent `i` is the shared head's output plus head `i`'s output,
//! both read from the same hidden state.

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{GruCell, Linear};
use crate::params::{Matrix, ParamSet};
use crate::rng::Rng;
use crate::tape::{argmax, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentNetConfig {
    pub obs_dim: usize,
    pub n_actions: usize,
    pub n_agents: usize,
    pub fc_dim: usize,
    pub hidden_dim: usize,
    /// Per-agent heads added to the shared head.
    pub individual_heads: bool,
    /// Appends a one-hot agent index to the encoder input.
    pub identity_input: bool,
}

impl AgentNetConfig {
    pub fn input_dim(&self) -> usize {
        self.obs_dim + self.n_actions + if self.identity_input { self.n_agents } else { 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentNet {
    pub config: AgentNetConfig,
    fc: Linear,
    gru: GruCell,
    shared_head: Linear,
    individual_heads: Vec<Linear>,
}

/// Per-agent recurrent summaries of the action-observation history.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryState {
    /// `rows × hidden_dim`.
    pub hidden: Matrix,
}

impl TrajectoryState {
    pub fn zeros(rows: usize, hidden_dim: usize) -> Self {
        Self {
            hidden: Matrix::zeros((rows, hidden_dim)),
        }
    }

    pub fn rows(&self) -> usize {
        self.hidden.nrows()
    }
}

/// Decomposed local action values of one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct QOutputs {
    pub q_shared: Vec<f64>,
    pub q_individual: Vec<f64>,
    pub q_total_local: Vec<f64>,
}

impl QOutputs {
    pub fn new(q_shared: Vec<f64>, q_individual: Vec<f64>) -> Self {
        let q_total_local = q_shared.iter().zip(&q_individual).map(|(s, i)| s + i).collect();
        Self {
            q_shared,
            q_individual,
            q_total_local,
        }
    }

    pub fn greedy(&self) -> usize {
        argmax(&self.q_total_local)
    }

    pub fn boltzmann(&self, beta1: f64) -> Vec<f64> {
        boltzmann_policy(&self.q_total_local, beta1)
    }
}

/// One agent's encoder input for a single step.
#[derive(Clone, Copy, Debug)]
pub struct AgentInput<'a> {
    pub obs: &'a [f64],
    pub prev_action: Option<usize>,
    pub identity: usize,
}

/// Tape nodes produced by the Q heads for a block of rows.
#[derive(Clone, Copy, Debug)]
pub struct QVars {
    pub shared: Var,
    /// Each row's own individual head; `None` without individual heads.
    pub individual: Option<Var>,
    /// All individual heads side by side, `rows × (n_agents * n_actions)`.
    pub all_individual: Option<Var>,
    pub total: Var,
}

impl AgentNet {
    pub fn new(params: &mut ParamSet, config: AgentNetConfig, rng: &mut Rng) -> Self {
        let fc = Linear::new(params, "agent.fc", config.input_dim(), config.fc_dim, rng);
        let gru = GruCell::new(params, "agent.gru", config.fc_dim, config.hidden_dim, rng);
        let shared_head = Linear::new(params, "agent.shared_head", config.hidden_dim, config.n_actions, rng);
        let individual_heads = if config.individual_heads {
            (0..config.n_agents)
                .map(|i| {
                    Linear::new(
                        params,
                        &format!("agent.individual_head.{i}"),
                        config.hidden_dim,
                        config.n_actions,
                        rng,
                    )
                })
                .collect()
        } else {
            Vec::new()
        };
        Self {
            config,
            fc,
            gru,
            shared_head,
            individual_heads,
        }
    }

    pub fn individual_heads(&self) -> &[Linear] {
        &self.individual_heads
    }

    /// Writes one input row: observation, previous action one-hot, and the
    /// optional identity one-hot.
    pub fn write_input(&self, row: &mut [f64], obs: &[f64], prev_action: Option<usize>, identity: usize) {
        let c = &self.config;
        row.fill(0.0);
        row[..c.obs_dim].copy_from_slice(obs);
        if let Some(a) = prev_action {
            row[c.obs_dim + a] = 1.0;
        }
        if c.identity_input {
            row[c.obs_dim + c.n_actions + identity] = 1.0;
        }
    }

    pub fn build_inputs(&self, inputs: &[AgentInput<'_>]) -> Result<Matrix> {
        let c = &self.config;
        let mut x = Matrix::zeros((inputs.len(), c.input_dim()));
        for (row, input) in x.rows_mut().into_iter().zip(inputs) {
            if input.obs.len() != c.obs_dim {
                return Err(Error::Dimension {
                    context: "observation",
                    expected: c.obs_dim,
                    actual: input.obs.len(),
                });
            }
            if let Some(a) = input.prev_action {
                if a >= c.n_actions {
                    return Err(Error::ActionIndex {
                        action: a,
                        n_actions: c.n_actions,
                    });
                }
            }
            if input.identity >= c.n_agents {
                return Err(Error::AgentIndex {
                    index: input.identity,
                    n_agents: c.n_agents,
                });
            }
            let row = row.into_slice().expect("rows of a standard-layout matrix are contiguous");
            self.write_input(row, input.obs, input.prev_action, input.identity);
        }
        Ok(x)
    }

    /// Encodes `steps` time-major row blocks starting from `h0`.
    pub fn encode(&self, tape: &mut Tape, params: &ParamSet, x: Var, h0: Var, steps: usize) -> Vec<Var> {
        let f = self.fc.forward(tape, params, x);
        let f = tape.relu(f);
        self.gru.unroll(tape, params, f, h0, steps)
    }

    /// Evaluates the heads on hidden rows; `agents[r]` picks row `r`'s head.
    pub fn heads(&self, tape: &mut Tape, params: &ParamSet, hidden: Var, agents: &[usize]) -> QVars {
        let shared = self.shared_head.forward(tape, params, hidden);
        if self.individual_heads.is_empty() {
            return QVars {
                shared,
                individual: None,
                all_individual: None,
                total: shared,
            };
        }
        let outs: Vec<Var> = self
            .individual_heads
            .iter()
            .map(|head| head.forward(tape, params, hidden))
            .collect();
        let all = tape.concat_cols(&outs);
        let individual = tape.block_select(all, self.config.n_actions, agents.to_vec());
        let total = tape.add(shared, individual);
        QVars {
            shared,
            individual: Some(individual),
            all_individual: Some(all),
            total,
        }
    }

    /// Advances every row of `state` by one step.
    pub fn encode_step(&self, params: &ParamSet, inputs: &[AgentInput<'_>], state: &TrajectoryState) -> Result<TrajectoryState> {
        if inputs.len() != state.rows() {
            return Err(Error::Dimension {
                context: "trajectory rows",
                expected: state.rows(),
                actual: inputs.len(),
            });
        }
        if state.hidden.ncols() != self.config.hidden_dim {
            return Err(Error::Dimension {
                context: "hidden state",
                expected: self.config.hidden_dim,
                actual: state.hidden.ncols(),
            });
        }
        let x = self.build_inputs(inputs)?;
        let mut tape = Tape::no_grad();
        let xv = tape.constant(x);
        let h0 = tape.constant(state.hidden.clone());
        let h = self.encode(&mut tape, params, xv, h0, 1)[0];
        Ok(TrajectoryState {
            hidden: tape.value(h).clone(),
        })
    }

    /// Local values of every row under every identity's head.
    ///
    /// Returns `rows × n_agents` entries; entry `[r][j]` evaluates row `r`'s
    /// history with head `j`. Without individual heads all identities share
    /// the shared head's values.
    pub fn q_all_identities(&self, params: &ParamSet, state: &TrajectoryState) -> Vec<Vec<QOutputs>> {
        let rows = state.rows();
        let n = self.config.n_agents;
        let na = self.config.n_actions;
        let mut tape = Tape::no_grad();
        let h = tape.constant(state.hidden.clone());
        let agents = vec![0; rows];
        let q = self.heads(&mut tape, params, h, &agents);
        let shared = tape.value(q.shared);
        let all = q.all_individual.map(|v| tape.value(v));
        (0..rows)
            .map(|r| {
                let qs: Vec<f64> = shared.row(r).to_vec();
                (0..n)
                    .map(|j| {
                        let qi = match all {
                            Some(all) => all.row(r).iter().skip(j * na).take(na).copied().collect(),
                            None => vec![0.0; na],
                        };
                        QOutputs::new(qs.clone(), qi)
                    })
                    .collect()
            })
            .collect()
    }

    /// Decomposed values for `agent`, read from row `agent` of `state`.
    pub fn local_q(&self, params: &ParamSet, state: &TrajectoryState, agent: usize) -> Result<QOutputs> {
        if agent >= self.config.n_agents || agent >= state.rows() {
            return Err(Error::AgentIndex {
                index: agent,
                n_agents: self.config.n_agents.min(state.rows()),
            });
        }
        let mut tape = Tape::no_grad();
        let h = tape.constant(state.hidden.slice(ndarray::s![agent..agent + 1, ..]).to_owned());
        let q = self.heads(&mut tape, params, h, &[agent]);
        let shared = tape.value(q.shared).row(0).to_vec();
        let individual = match q.individual {
            Some(v) => tape.value(v).row(0).to_vec(),
            None => vec![0.0; self.config.n_actions],
        };
        Ok(QOutputs::new(shared, individual))
    }
}

/// `SoftMax(beta1 * q)` with max subtraction.
pub fn boltzmann_policy(q: &[f64], beta1: f64) -> Vec<f64> {
    let scaled: Vec<f64> = q.iter().map(|&x| beta1 * x).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// ε-greedy over `q_total_local`; the greedy branch breaks ties by lowest index.
pub fn select_action(q: &QOutputs, epsilon: f64, rng: &mut Rng) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q.q_total_local.len())
    } else {
        q.greedy()
    }
}

/// Linear annealing from `start` to `finish` over `anneal_steps` env steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub finish: f64,
    pub anneal_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            finish: 0.05,
            anneal_steps: 500_000,
        }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, env_steps: u64) -> f64 {
        if self.anneal_steps == 0 || env_steps >= self.anneal_steps {
            return self.finish;
        }
        let frac = env_steps as f64 / self.anneal_steps as f64;
        self.start + (self.finish - self.start) * frac
    }
}

/// Stacks per-row vectors into a matrix.
pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Matrix {
    let cols = rows.first().map_or(0, Vec::len);
    Array2::from_shape_fn((rows.len(), cols), |(r, c)| rows[r][c])
}
