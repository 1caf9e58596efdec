//! Cooperative multi-agent environment contract and the Pac-Men gridworld.

mod layout;
mod pacmen;
mod trace;

pub use layout::{Cell, Direction, Layout, Region};
pub use pacmen::{
    encode_state, observe, Action, PacMen, PacMenState, DOTS_PER_ROOM, EPISODE_LIMIT, N_AGENTS, OBS_WINDOW,
};
pub use trace::{read_traces, write_traces, TraceRecord};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Static sizes of a cooperative task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub n_agents: usize,
    pub n_actions: usize,
    pub obs_dim: usize,
    pub state_dim: usize,
    pub episode_limit: usize,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [self.n_agents, self.n_actions, self.obs_dim, self.state_dim, self.episode_limit];
        if counts.iter().any(|&c| c == 0) {
            return Err(crate::Error::Config(format!("environment sizes must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observations: Vec<Vec<f64>>,
    pub global_state: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// A fully cooperative, partially observable task with a shared reward.
pub trait MultiAgentEnv {
    fn spec(&self) -> EnvSpec;

    fn reset(&mut self, seed: u64) -> StepResult;

    fn step(&mut self, joint_action: &[usize]) -> Result<StepResult>;

    /// Agent cells and dot cells, for environments laid out on a grid.
    fn positions(&self) -> Option<(Vec<(usize, usize)>, Vec<(usize, usize)>)> {
        None
    }
}
