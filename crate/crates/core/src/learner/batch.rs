use std::collections::VecDeque;

use ndarray::{Array2, Array3, Array4};
use rand::seq::index;

use crate::envsim::EnvSpec;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// One collected episode. Observations and states hold `len + 1` entries:
/// the one before each step plus the one after the last step.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub spec: EnvSpec,
    pub len: usize,
    obs: Vec<f32>,
    state: Vec<f32>,
    actions: Vec<u8>,
    pub reward: Vec<f64>,
    pub intrinsic: Vec<f64>,
    pub terminated: Vec<bool>,
}

impl Episode {
    pub fn obs(&self, t: usize, agent: usize) -> &[f32] {
        let d = self.spec.obs_dim;
        let start = (t * self.spec.n_agents + agent) * d;
        &self.obs[start..start + d]
    }

    pub fn state(&self, t: usize) -> &[f32] {
        let d = self.spec.state_dim;
        &self.state[t * d..(t + 1) * d]
    }

    pub fn action(&self, t: usize, agent: usize) -> usize {
        self.actions[t * self.spec.n_agents + agent] as usize
    }

    pub fn env_return(&self) -> f64 {
        self.reward.iter().sum()
    }
}

/// Appends steps to an episode as they happen.
#[derive(Clone, Debug)]
pub struct EpisodeBuilder {
    episode: Episode,
}

impl EpisodeBuilder {
    pub fn new(spec: EnvSpec, observations: &[Vec<f64>], state: &[f64]) -> Result<Self> {
        if spec.n_actions > u8::MAX as usize + 1 {
            return Err(Error::Config(format!("{} actions exceed replay storage", spec.n_actions)));
        }
        let mut b = Self {
            episode: Episode {
                spec,
                len: 0,
                obs: Vec::with_capacity((spec.episode_limit + 1) * spec.n_agents * spec.obs_dim),
                state: Vec::with_capacity((spec.episode_limit + 1) * spec.state_dim),
                actions: Vec::new(),
                reward: Vec::new(),
                intrinsic: Vec::new(),
                terminated: Vec::new(),
            },
        };
        b.push_observation(observations, state)?;
        Ok(b)
    }

    fn push_observation(&mut self, observations: &[Vec<f64>], state: &[f64]) -> Result<()> {
        let spec = self.episode.spec;
        if observations.len() != spec.n_agents {
            return Err(Error::Dimension {
                context: "observations per step",
                expected: spec.n_agents,
                actual: observations.len(),
            });
        }
        for o in observations {
            if o.len() != spec.obs_dim {
                return Err(Error::Dimension {
                    context: "observation",
                    expected: spec.obs_dim,
                    actual: o.len(),
                });
            }
            self.episode.obs.extend(o.iter().map(|&x| x as f32));
        }
        if state.len() != spec.state_dim {
            return Err(Error::Dimension {
                context: "global state",
                expected: spec.state_dim,
                actual: state.len(),
            });
        }
        self.episode.state.extend(state.iter().map(|&x| x as f32));
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push_step(
        &mut self,
        actions: &[usize],
        reward: f64,
        intrinsic: f64,
        terminated: bool,
        next_observations: &[Vec<f64>],
        next_state: &[f64],
    ) -> Result<()> {
        let spec = self.episode.spec;
        if actions.len() != spec.n_agents {
            return Err(Error::Dimension {
                context: "joint action",
                expected: spec.n_agents,
                actual: actions.len(),
            });
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= spec.n_actions) {
            return Err(Error::ActionIndex {
                action: a,
                n_actions: spec.n_actions,
            });
        }
        if !reward.is_finite() || !intrinsic.is_finite() {
            return Err(Error::Precondition(format!("non-finite reward {reward} / {intrinsic}")));
        }
        self.push_observation(next_observations, next_state)?;
        self.episode.actions.extend(actions.iter().map(|&a| a as u8));
        self.episode.reward.push(reward);
        self.episode.intrinsic.push(intrinsic);
        self.episode.terminated.push(terminated);
        self.episode.len += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.episode.len
    }

    pub fn is_empty(&self) -> bool {
        self.episode.len == 0
    }

    pub fn finish(self) -> Episode {
        self.episode
    }
}

/// Padded batch of episodes. Step-indexed arrays are `[episode, step]`;
/// observation and state arrays carry one extra trailing step.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeBatch {
    pub spec: EnvSpec,
    /// `[B, T+1, n, obs_dim]`.
    pub observations: Array4<f64>,
    /// `[B, T, n]`.
    pub actions: Array3<usize>,
    pub env_reward: Array2<f64>,
    pub intrinsic_reward: Array2<f64>,
    /// `[B, T+1, state_dim]`.
    pub global_state: Array3<f64>,
    /// 1 for real steps, 0 for padding.
    pub filled_mask: Array2<f64>,
    /// 1 where the step ended the episode without bootstrapping.
    pub terminated: Array2<f64>,
}

impl EpisodeBatch {
    pub fn from_episodes(episodes: &[&Episode]) -> Result<Self> {
        let first = episodes.first().ok_or(Error::EmptyBatch)?;
        let spec = first.spec;
        if episodes.iter().any(|e| e.spec != spec) {
            return Err(Error::Precondition("episodes in a batch must share one environment spec".into()));
        }
        let b = episodes.len();
        let t_max = episodes.iter().map(|e| e.len).max().unwrap_or(0);
        let n = spec.n_agents;
        let mut batch = Self {
            spec,
            observations: Array4::zeros((b, t_max + 1, n, spec.obs_dim)),
            actions: Array3::zeros((b, t_max, n)),
            env_reward: Array2::zeros((b, t_max)),
            intrinsic_reward: Array2::zeros((b, t_max)),
            global_state: Array3::zeros((b, t_max + 1, spec.state_dim)),
            filled_mask: Array2::zeros((b, t_max)),
            terminated: Array2::zeros((b, t_max)),
        };
        for (e, ep) in episodes.iter().enumerate() {
            for t in 0..=ep.len {
                for i in 0..n {
                    for (dst, &src) in batch
                        .observations
                        .slice_mut(ndarray::s![e, t, i, ..])
                        .iter_mut()
                        .zip(ep.obs(t, i))
                    {
                        *dst = src as f64;
                    }
                }
                for (dst, &src) in batch.global_state.slice_mut(ndarray::s![e, t, ..]).iter_mut().zip(ep.state(t)) {
                    *dst = src as f64;
                }
            }
            for t in 0..ep.len {
                for i in 0..n {
                    batch.actions[[e, t, i]] = ep.action(t, i);
                }
                batch.env_reward[[e, t]] = ep.reward[t];
                batch.intrinsic_reward[[e, t]] = ep.intrinsic[t];
                batch.filled_mask[[e, t]] = 1.0;
                batch.terminated[[e, t]] = if ep.terminated[t] { 1.0 } else { 0.0 };
            }
        }
        Ok(batch)
    }

    pub fn episodes(&self) -> usize {
        self.env_reward.nrows()
    }

    pub fn max_len(&self) -> usize {
        self.env_reward.ncols()
    }

    pub fn valid_steps(&self) -> f64 {
        self.filled_mask.sum()
    }
}

/// Fixed-capacity episode store; the oldest episode leaves first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<Episode>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            episodes: VecDeque::with_capacity(capacity.min(1024)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn push(&mut self, episode: Episode) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    pub fn get(&self, i: usize) -> Option<&Episode> {
        self.episodes.get(i)
    }

    /// Uniform draw of `size` distinct episodes.
    pub fn sample(&self, size: usize, rng: &mut Rng) -> Result<EpisodeBatch> {
        if size == 0 || size > self.episodes.len() {
            return Err(Error::Precondition(format!(
                "cannot sample {size} episodes from a buffer holding {}",
                self.episodes.len()
            )));
        }
        let picked = index::sample(rng, self.episodes.len(), size);
        let refs: Vec<&Episode> = picked.iter().map(|i| &self.episodes[i]).collect();
        EpisodeBatch::from_episodes(&refs)
    }
}
