use rand::Rng as _;

use super::loss::target_values;
use super::{posterior_rows, EpisodeBatch, EpisodeBuilder, LossGraph, LossParts, Networks, ReplayBuffer, Settings};
use crate::diversity::{
    intrinsic_reward, train_posteriors, AgentTransition, PosteriorConfig, PosteriorKind, PosteriorModels,
};
use crate::envsim::{EnvSpec, MultiAgentEnv, TraceRecord};
use crate::error::{Error, Result};
use crate::params::{Matrix, ParamSet, RmsProp};
use crate::policy::{select_action, AgentInput, EpsilonSchedule, QOutputs, TrajectoryState};
use crate::rng::{Rng, SeedTree, Stream};
use crate::tape::Tape;

/// Online and target networks, their optimizer, and the posterior models.
#[derive(Clone, Debug)]
pub struct Learner {
    pub spec: EnvSpec,
    pub settings: Settings,
    pub nets: Networks,
    pub online: ParamSet,
    pub target: ParamSet,
    optimizer: RmsProp,
    pub posteriors: PosteriorModels,
    /// Gradient steps taken so far.
    pub updates: u64,
}

/// Losses from one gradient step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepLog {
    pub loss: LossParts,
    pub grad_norm: f64,
    pub posterior: Vec<(PosteriorKind, f64)>,
    pub target_updated: bool,
}

/// Recurrent state of all agents during one episode.
#[derive(Clone, Debug)]
pub struct Actor {
    state: TrajectoryState,
    prev_actions: Option<Vec<usize>>,
}

/// What the agents see after advancing on one observation.
#[derive(Clone, Debug)]
pub struct ActorView {
    /// Each agent's own decomposed values.
    pub own: Vec<QOutputs>,
    /// `[i][j]`: agent `i`'s history evaluated as identity `j`.
    pub q_by_identity: Vec<Vec<QOutputs>>,
    /// Each agent's own encoder state.
    pub hidden: Vec<Vec<f64>>,
}

impl Learner {
    pub fn new(spec: EnvSpec, settings: Settings, seeds: &SeedTree) -> Result<Self> {
        spec.validate()?;
        settings.validate()?;
        let mut rng = seeds.stream(Stream::Init);
        let mut online = ParamSet::new();
        let nets = Networks::new(&mut online, spec, &settings, &mut rng);
        let target = online.clone();
        let posteriors = PosteriorModels::new(posterior_config(spec, &settings), &settings.learner.optimizer, &mut rng);
        let optimizer = RmsProp::new(settings.learner.optimizer.clone(), &online);
        Ok(Self {
            spec,
            settings,
            nets,
            online,
            target,
            optimizer,
            posteriors,
            updates: 0,
        })
    }

    pub fn new_actor(&self) -> Actor {
        let n = self.spec.n_agents;
        let rows = if self.settings.model.identity_input { n * n } else { n };
        Actor {
            state: TrajectoryState::zeros(rows, self.settings.model.hidden_dim),
            prev_actions: None,
        }
    }

    /// Advances every agent on its new observation.
    pub fn observe(&self, actor: &mut Actor, observations: &[Vec<f64>]) -> Result<ActorView> {
        let n = self.spec.n_agents;
        if observations.len() != n {
            return Err(Error::Dimension {
                context: "observations per step",
                expected: n,
                actual: observations.len(),
            });
        }
        let prev = |i: usize| actor.prev_actions.as_ref().map(|a| a[i]);
        let agent = &self.nets.agent;
        if self.settings.model.identity_input {
            // Row i·n + j replays agent i's history as identity j.
            let inputs: Vec<AgentInput<'_>> = (0..n * n)
                .map(|r| AgentInput {
                    obs: &observations[r / n],
                    prev_action: prev(r / n),
                    identity: r % n,
                })
                .collect();
            actor.state = agent.encode_step(&self.online, &inputs, &actor.state)?;
            let q = agent.q_all_identities(&self.online, &actor.state);
            let q_by_identity: Vec<Vec<QOutputs>> = (0..n)
                .map(|i| (0..n).map(|j| q[i * n + j][0].clone()).collect())
                .collect();
            Ok(ActorView {
                own: (0..n).map(|i| q_by_identity[i][i].clone()).collect(),
                hidden: (0..n).map(|i| actor.state.hidden.row(i * n + i).to_vec()).collect(),
                q_by_identity,
            })
        } else {
            let inputs: Vec<AgentInput<'_>> = (0..n)
                .map(|i| AgentInput {
                    obs: &observations[i],
                    prev_action: prev(i),
                    identity: i,
                })
                .collect();
            actor.state = agent.encode_step(&self.online, &inputs, &actor.state)?;
            let q_by_identity = agent.q_all_identities(&self.online, &actor.state);
            Ok(ActorView {
                own: (0..n).map(|i| q_by_identity[i][i].clone()).collect(),
                hidden: actor.state.hidden.rows().into_iter().map(|r| r.to_vec()).collect(),
                q_by_identity,
            })
        }
    }

    pub fn record_actions(&self, actor: &mut Actor, actions: &[usize]) {
        actor.prev_actions = Some(actions.to_vec());
    }

    /// One gradient step on `batch`, then one likelihood step for each
    /// posterior the intrinsic reward reads.
    pub fn update(&mut self, batch: &mut EpisodeBatch) -> Result<StepLog> {
        if self.settings.learner.recompute_intrinsic {
            self.recompute_intrinsic(batch)?;
        }
        let targets = target_values(&self.nets, &self.target, batch);
        let mut tape = Tape::new();
        let graph = LossGraph::build(&mut tape, &self.nets, &self.online, &targets, batch, &self.settings)?;
        let loss = graph.parts(&tape);
        if !loss.total.is_finite() {
            return Err(Error::Precondition(format!("non-finite loss {loss:?}")));
        }
        let grads = tape.backward(graph.total);
        let grad_norm = self.optimizer.step(&mut self.online, &grads);

        let (rows, mask) = posterior_rows(batch, tape.value(graph.hidden));
        drop(tape);
        let kinds = self.settings.intrinsic.required_models();
        let posterior = if kinds.is_empty() {
            Vec::new()
        } else {
            train_posteriors(&rows, &mask, &mut self.posteriors, &kinds)?.losses
        };

        self.updates += 1;
        let target_updated = self.updates % self.settings.learner.target_update_interval == 0;
        if target_updated {
            self.target.copy_from(&self.online);
        }
        Ok(StepLog {
            loss,
            grad_norm,
            posterior,
            target_updated,
        })
    }

    /// Encoder states and per-identity values over steps `0..T` of `batch`.
    fn batch_values(&self, batch: &EpisodeBatch, identity: Option<usize>) -> (Matrix, Vec<Matrix>) {
        let n = self.spec.n_agents;
        let na = self.spec.n_actions;
        let (b_n, t_max) = (batch.episodes(), batch.max_len());
        let rows = b_n * n;
        let mut tape = Tape::no_grad();
        let x = self.nets.batch_inputs(batch, identity);
        let x = tape.constant(x.slice(ndarray::s![..t_max * rows, ..]).to_owned());
        let h0 = tape.constant(Matrix::zeros((rows, self.settings.model.hidden_dim)));
        let hs = self.nets.agent.encode(&mut tape, &self.online, x, h0, t_max);
        let hidden = tape.concat_rows(&hs);
        let q = self.nets.agent.heads(&mut tape, &self.online, hidden, &vec![0; t_max * rows]);
        let shared = tape.value(q.shared).clone();
        let per_identity = match q.all_individual {
            Some(all) => {
                let all = tape.value(all);
                (0..n)
                    .map(|j| &shared + &all.slice(ndarray::s![.., j * na..(j + 1) * na]))
                    .collect()
            }
            None => vec![shared; n],
        };
        (tape.value(hidden).clone(), per_identity)
    }

    /// Replaces stored intrinsic rewards with values from the current
    /// networks and posteriors.
    pub fn recompute_intrinsic(&self, batch: &mut EpisodeBatch) -> Result<()> {
        let n = self.spec.n_agents;
        let (b_n, t_max) = (batch.episodes(), batch.max_len());
        let rows = b_n * n;
        // q[j] holds values under identity j; own hidden comes from identity i.
        let (hidden, q) = if self.settings.model.identity_input {
            let runs: Vec<(Matrix, Vec<Matrix>)> = (0..n).map(|j| self.batch_values(batch, Some(j))).collect();
            let hidden = Matrix::from_shape_fn(runs[0].0.dim(), |(r, c)| runs[r % n].0[[r, c]]);
            let q = runs.into_iter().map(|(_, mut v)| v.swap_remove(0)).collect();
            (hidden, q)
        } else {
            self.batch_values(batch, None)
        };
        for t in 0..t_max {
            for b in 0..b_n {
                if batch.filled_mask[[b, t]] <= 0.0 {
                    continue;
                }
                let base = t * rows + b * n;
                let hidden_rows: Vec<Vec<f64>> = (0..n).map(|i| hidden.row(base + i).to_vec()).collect();
                let q_rows: Vec<Vec<QOutputs>> = (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| QOutputs::new(q[j].row(base + i).to_vec(), vec![0.0; self.spec.n_actions]))
                            .collect()
                    })
                    .collect();
                let next_obs: Vec<Vec<f64>> = (0..n)
                    .map(|i| batch.observations.slice(ndarray::s![b, t + 1, i, ..]).to_vec())
                    .collect();
                let agents: Vec<AgentTransition<'_>> = (0..n)
                    .map(|i| AgentTransition {
                        hidden: &hidden_rows[i],
                        q_by_identity: &q_rows[i],
                        identity: i,
                        action: batch.actions[[b, t, i]],
                        next_obs: &next_obs[i],
                    })
                    .collect();
                batch.intrinsic_reward[[b, t]] =
                    intrinsic_reward(&agents, &self.posteriors, &self.settings.intrinsic)?.total;
            }
        }
        Ok(())
    }

    /// Restores a learner from stored parameters.
    pub fn from_parameters(
        spec: EnvSpec,
        settings: Settings,
        online: ParamSet,
        target: ParamSet,
        posteriors: Vec<ParamSet>,
    ) -> Result<Self> {
        let mut learner = Self::new(spec, settings, &SeedTree::new(0))?;
        check_same_layout(&learner.online, &online, "online")?;
        check_same_layout(&learner.target, &target, "target")?;
        learner.online.copy_from(&online);
        learner.target.copy_from(&target);
        if posteriors.len() != PosteriorKind::ALL.len() {
            return Err(Error::Checkpoint(format!("expected 5 posterior blocks, found {}", posteriors.len())));
        }
        for (model, params) in learner.posteriors.iter_mut().zip(&posteriors) {
            check_same_layout(&model.params, params, model.kind.name())?;
            model.params.copy_from(params);
        }
        Ok(learner)
    }
}

fn check_same_layout(expected: &ParamSet, found: &ParamSet, what: &str) -> Result<()> {
    let a: Vec<(&str, (usize, usize))> = expected.iter().map(|(n, m)| (n, m.dim())).collect();
    let b: Vec<(&str, (usize, usize))> = found.iter().map(|(n, m)| (n, m.dim())).collect();
    if a != b {
        return Err(Error::Checkpoint(format!("{what} parameters do not match the configured networks")));
    }
    Ok(())
}

fn posterior_config(spec: EnvSpec, settings: &Settings) -> PosteriorConfig {
    PosteriorConfig {
        obs_dim: spec.obs_dim,
        n_actions: spec.n_actions,
        n_agents: spec.n_agents,
        traj_dim: settings.model.hidden_dim,
        hidden_dim: settings.model.posterior_hidden,
        normalized_density: settings.model.normalized_density,
    }
}

/// Per-episode training record.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: u64,
    pub env_steps: u64,
    pub env_return: f64,
    pub epsilon: f64,
    /// `None` until the buffer holds a full batch.
    pub step: Option<StepLog>,
    pub intrinsic_action_mean: f64,
    pub intrinsic_obs_mean: f64,
    /// Mean per-step intrinsic reward of each agent.
    pub intrinsic_per_agent: Vec<f64>,
    pub log_clamps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub returns: Vec<f64>,
    pub traces: Vec<TraceRecord>,
}

impl EvalReport {
    pub fn mean(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len() as f64
    }

    /// Population standard deviation of episode returns.
    pub fn sd(&self) -> f64 {
        let m = self.mean();
        (self.returns.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / self.returns.len() as f64).sqrt()
    }
}

/// Collects episodes with ε-greedy exploration and trains after each one.
#[derive(Clone, Debug)]
pub struct Trainer<E> {
    pub env: E,
    pub learner: Learner,
    pub buffer: ReplayBuffer,
    pub exploration: EpsilonSchedule,
    env_rng: Rng,
    explore_rng: Rng,
    sample_rng: Rng,
    eval_rng: Rng,
    pub env_steps: u64,
    pub episodes: u64,
}

impl<E: MultiAgentEnv> Trainer<E> {
    pub fn new(env: E, settings: Settings, exploration: EpsilonSchedule, seed: u64) -> Result<Self> {
        let seeds = SeedTree::new(seed);
        let learner = Learner::new(env.spec(), settings, &seeds)?;
        let buffer = ReplayBuffer::new(learner.settings.learner.buffer_capacity);
        Ok(Self {
            env,
            learner,
            buffer,
            exploration,
            env_rng: seeds.stream(Stream::Env),
            explore_rng: seeds.stream(Stream::Exploration),
            sample_rng: seeds.stream(Stream::Sampling),
            eval_rng: seeds.stream(Stream::Evaluation),
            env_steps: 0,
            episodes: 0,
        })
    }

    /// Collects one episode, stores it, and takes one learner step once
    /// the buffer can fill a batch.
    pub fn run_episode(&mut self) -> Result<EpisodeMetrics> {
        let epsilon = self.exploration.value(self.env_steps);
        let spec = self.env.spec();
        let learner = &self.learner;
        let mut res = self.env.reset(self.env_rng.gen());
        let mut builder = EpisodeBuilder::new(spec, &res.observations, &res.global_state)?;
        let mut actor = learner.new_actor();
        let n = spec.n_agents;
        let (mut action_sum, mut obs_sum, mut clamps) = (0.0, 0.0, 0);
        let mut per_agent = vec![0.0; n];
        loop {
            let view = learner.observe(&mut actor, &res.observations)?;
            let actions: Vec<usize> = view
                .own
                .iter()
                .map(|q| select_action(q, epsilon, &mut self.explore_rng))
                .collect();
            let next = self.env.step(&actions)?;
            let agents: Vec<AgentTransition<'_>> = (0..n)
                .map(|i| AgentTransition {
                    hidden: &view.hidden[i],
                    q_by_identity: &view.q_by_identity[i],
                    identity: i,
                    action: actions[i],
                    next_obs: &next.observations[i],
                })
                .collect();
            let r = intrinsic_reward(&agents, &learner.posteriors, &learner.settings.intrinsic)?;
            action_sum += r.action_mean();
            obs_sum += r.obs_mean();
            clamps += r.clamped;
            for (acc, (a, o)) in per_agent.iter_mut().zip(r.action.iter().zip(&r.obs)) {
                *acc += a + o;
            }
            builder.push_step(
                &actions,
                next.reward,
                r.total,
                next.terminated,
                &next.observations,
                &next.global_state,
            )?;
            learner.record_actions(&mut actor, &actions);
            let done = next.done();
            res = next;
            if done {
                break;
            }
            if builder.len() >= spec.episode_limit {
                return Err(Error::Precondition("environment ran past its episode limit".into()));
            }
        }
        let episode = builder.finish();
        let len = episode.len as f64;
        let env_return = episode.env_return();
        self.env_steps += episode.len as u64;
        self.buffer.push(episode);

        let batch_size = self.learner.settings.learner.batch_size;
        let step = if self.buffer.len() >= batch_size {
            let mut batch = self.buffer.sample(batch_size, &mut self.sample_rng)?;
            Some(self.learner.update(&mut batch)?)
        } else {
            None
        };
        let metrics = EpisodeMetrics {
            episode: self.episodes,
            env_steps: self.env_steps,
            env_return,
            epsilon,
            step,
            intrinsic_action_mean: action_sum / len,
            intrinsic_obs_mean: obs_sum / len,
            intrinsic_per_agent: per_agent.into_iter().map(|x| x / len).collect(),
            log_clamps: clamps,
        };
        self.episodes += 1;
        Ok(metrics)
    }

    /// Rollouts that never touch the training random streams.
    pub fn evaluate(&mut self, episodes: usize, epsilon: f64, keep_traces: bool) -> Result<EvalReport> {
        evaluate(&mut self.env, &self.learner, episodes, epsilon, keep_traces, &mut self.eval_rng)
    }
}

/// Runs `episodes` rollouts with ε-greedy action choice (ε = 0 is greedy).
pub fn evaluate<E: MultiAgentEnv>(
    env: &mut E,
    learner: &Learner,
    episodes: usize,
    epsilon: f64,
    keep_traces: bool,
    rng: &mut Rng,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::Precondition("evaluation needs at least one episode".into()));
    }
    let mut report = EvalReport {
        returns: Vec::with_capacity(episodes),
        traces: Vec::new(),
    };
    for episode in 0..episodes {
        let mut res = env.reset(rng.gen());
        let mut actor = learner.new_actor();
        let mut total = 0.0;
        let mut step = 0;
        loop {
            let view = learner.observe(&mut actor, &res.observations)?;
            let actions: Vec<usize> = view.own.iter().map(|q| select_action(q, epsilon, rng)).collect();
            let before = if keep_traces { env.positions() } else { None };
            res = env.step(&actions)?;
            if let Some((positions, dots)) = before {
                report.traces.push(TraceRecord {
                    episode,
                    step,
                    positions,
                    dots,
                    actions: actions.clone(),
                    reward: res.reward,
                });
            }
            learner.record_actions(&mut actor, &actions);
            total += res.reward;
            step += 1;
            if res.done() {
                break;
            }
        }
        report.returns.push(total);
    }
    Ok(report)
}
