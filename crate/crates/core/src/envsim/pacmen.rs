use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};

use super::layout::{Cell, Direction, Layout};
use super::{EnvSpec, MultiAgentEnv, StepResult};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const N_AGENTS: usize = 4;
pub const DOTS_PER_ROOM: usize = 3;
pub const EPISODE_LIMIT: usize = 100;
pub const OBS_WINDOW: usize = 5;
const OBS_CHANNELS: usize = 3;
const NO_DOT_REWARD: f64 = -0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    pub const COUNT: usize = 5;

    pub fn from_index(i: usize) -> Option<Self> {
        Some(match i {
            0 => Action::Up,
            1 => Action::Down,
            2 => Action::Left,
            3 => Action::Right,
            4 => Action::Stay,
            _ => return None,
        })
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
            Action::Stay => (0, 0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PacMenState {
    pub agent_positions: Vec<(usize, usize)>,
    /// Dot cells, kept sorted.
    pub dot_positions: Vec<(usize, usize)>,
    pub step_count: usize,
}

/// Four agents forage for dots in the edge rooms of a five-room map.
///
/// Agents may share cells and never block each other. A dot under one or
/// more agents is eaten once. When the last dot is eaten, three new dots are
/// drawn in every edge room at the end of that step.
#[derive(Clone, Debug)]
pub struct PacMen {
    layout: Layout,
    state: PacMenState,
    rng: Rng,
    ended: bool,
}

impl Default for PacMen {
    fn default() -> Self {
        Self::new()
    }
}

impl PacMen {
    pub fn new() -> Self {
        let layout = Layout::pacmen();
        let mut env = Self {
            layout,
            state: PacMenState {
                agent_positions: Vec::new(),
                dot_positions: Vec::new(),
                step_count: 0,
            },
            rng: Rng::seed_from_u64(0),
            ended: true,
        };
        env.reset(0);
        env
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn state(&self) -> &PacMenState {
        &self.state
    }

    /// Places agents and dots directly; used by tests and trace replay.
    pub fn set_state(&mut self, mut state: PacMenState) -> Result<()> {
        if state.agent_positions.len() != N_AGENTS {
            return Err(Error::Dimension {
                context: "agent positions",
                expected: N_AGENTS,
                actual: state.agent_positions.len(),
            });
        }
        for &(r, c) in &state.agent_positions {
            if r >= self.layout.rows() || c >= self.layout.cols() || !self.layout.is_open(r, c) {
                return Err(Error::Precondition(format!("agent position ({r}, {c}) is not an open cell")));
            }
        }
        for &(r, c) in &state.dot_positions {
            if r >= self.layout.rows() || c >= self.layout.cols() || self.layout.dot_index(r, c).is_none() {
                return Err(Error::Precondition(format!("dot position ({r}, {c}) is not inside an edge room")));
            }
        }
        state.dot_positions.sort_unstable();
        state.dot_positions.dedup();
        self.ended = state.step_count >= EPISODE_LIMIT;
        self.state = state;
        Ok(())
    }

    fn spawn_dots(&mut self) {
        let mut dots = Vec::with_capacity(4 * DOTS_PER_ROOM);
        for d in Direction::ALL {
            let cells = self.layout.room_cells(d);
            dots.extend(cells.choose_multiple(&mut self.rng, DOTS_PER_ROOM).copied());
        }
        dots.sort_unstable();
        self.state.dot_positions = dots;
    }

    pub fn local_observation(&self, agent: usize) -> Result<Vec<f64>> {
        let positions = &self.state.agent_positions;
        if agent >= positions.len() {
            return Err(Error::AgentIndex {
                index: agent,
                n_agents: positions.len(),
            });
        }
        Ok(observe(&self.layout, positions, &self.state.dot_positions, agent))
    }

    pub fn global_state(&self) -> Vec<f64> {
        encode_state(&self.layout, &self.state.agent_positions, &self.state.dot_positions)
    }

    fn result(&self, reward: f64) -> StepResult {
        let observations = (0..N_AGENTS)
            .map(|i| observe(&self.layout, &self.state.agent_positions, &self.state.dot_positions, i))
            .collect();
        StepResult {
            observations,
            global_state: self.global_state(),
            reward,
            terminated: false,
            truncated: self.state.step_count >= EPISODE_LIMIT,
        }
    }

    pub fn render(&self) -> String {
        self.layout.render(&self.state.agent_positions, &self.state.dot_positions)
    }
}

impl MultiAgentEnv for PacMen {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            n_agents: N_AGENTS,
            n_actions: Action::COUNT,
            obs_dim: OBS_CHANNELS * OBS_WINDOW * OBS_WINDOW,
            state_dim: N_AGENTS * self.layout.open_cells().len() + self.layout.num_dot_cells(),
            episode_limit: EPISODE_LIMIT,
        }
    }

    fn reset(&mut self, seed: u64) -> StepResult {
        self.rng = Rng::seed_from_u64(seed);
        let center = self.layout.center_cells();
        self.state.agent_positions = (0..N_AGENTS)
            .map(|_| center[self.rng.gen_range(0..center.len())])
            .collect();
        self.state.step_count = 0;
        self.spawn_dots();
        self.ended = false;
        self.result(0.0)
    }

    fn step(&mut self, joint_action: &[usize]) -> Result<StepResult> {
        if self.ended {
            return Err(Error::EpisodeEnded);
        }
        if joint_action.len() != N_AGENTS {
            return Err(Error::Dimension {
                context: "joint action",
                expected: N_AGENTS,
                actual: joint_action.len(),
            });
        }
        let actions = joint_action
            .iter()
            .map(|&a| {
                Action::from_index(a).ok_or(Error::ActionIndex {
                    action: a,
                    n_actions: Action::COUNT,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        for (pos, action) in self.state.agent_positions.iter_mut().zip(actions) {
            let (dr, dc) = action.delta();
            let (nr, nc) = (pos.0 as isize + dr, pos.1 as isize + dc);
            if let Cell::Open(_) = self.layout.cell_signed(nr, nc) {
                *pos = (nr as usize, nc as usize);
            }
        }

        let before = self.state.dot_positions.len();
        let agents = &self.state.agent_positions;
        self.state.dot_positions.retain(|d| !agents.contains(d));
        let eaten = before - self.state.dot_positions.len();
        if self.state.dot_positions.is_empty() {
            self.spawn_dots();
        }

        self.state.step_count += 1;
        if self.state.step_count >= EPISODE_LIMIT {
            self.ended = true;
        }
        let reward = if eaten > 0 { eaten as f64 } else { NO_DOT_REWARD };
        Ok(self.result(reward))
    }

    fn positions(&self) -> Option<(Vec<(usize, usize)>, Vec<(usize, usize)>)> {
        Some((self.state.agent_positions.clone(), self.state.dot_positions.clone()))
    }
}

/// Three binary channels (wall, dot, other agent) over the window centered on
/// `agent`, channel-major. Cells outside the map read as walls.
pub fn observe(layout: &Layout, positions: &[(usize, usize)], dots: &[(usize, usize)], agent: usize) -> Vec<f64> {
    let cells = OBS_WINDOW * OBS_WINDOW;
    let half = (OBS_WINDOW / 2) as isize;
    let (ar, ac) = positions[agent];
    let mut obs = vec![0.0; OBS_CHANNELS * cells];
    for dr in -half..=half {
        for dc in -half..=half {
            let k = ((dr + half) as usize) * OBS_WINDOW + (dc + half) as usize;
            let (r, c) = (ar as isize + dr, ac as isize + dc);
            if layout.cell_signed(r, c) == Cell::Wall {
                obs[k] = 1.0;
                continue;
            }
            let cell = (r as usize, c as usize);
            if dots.contains(&cell) {
                obs[cells + k] = 1.0;
            }
            if positions.iter().enumerate().any(|(j, &p)| j != agent && p == cell) {
                obs[2 * cells + k] = 1.0;
            }
        }
    }
    obs
}

/// One-hot agent positions over open cells followed by the dot bitmap.
pub fn encode_state(layout: &Layout, positions: &[(usize, usize)], dots: &[(usize, usize)]) -> Vec<f64> {
    let n_open = layout.open_cells().len();
    let mut state = vec![0.0; positions.len() * n_open + layout.num_dot_cells()];
    for (i, &(r, c)) in positions.iter().enumerate() {
        if let Some(k) = layout.open_index(r, c) {
            state[i * n_open + k] = 1.0;
        }
    }
    let offset = positions.len() * n_open;
    for &(r, c) in dots {
        if let Some(k) = layout.dot_index(r, c) {
            state[offset + k] = 1.0;
        }
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::Region;

    fn count_dots(env: &PacMen, d: Direction) -> usize {
        env.state()
            .dot_positions
            .iter()
            .filter(|&&(r, c)| env.layout().region(r, c) == Some(Region::Room(d)))
            .count()
    }

    #[test]
    fn reset_places_three_dots_per_edge_room() {
        let mut env = PacMen::new();
        env.reset(0);
        assert_eq!(env.state().dot_positions.len(), 12);
        for d in Direction::ALL {
            assert_eq!(count_dots(&env, d), 3);
        }
        assert_eq!(env.state().step_count, 0);
        for &(r, c) in &env.state().agent_positions {
            assert_eq!(env.layout().region(r, c), Some(Region::Center));
        }
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        let mut a = PacMen::new();
        let mut b = PacMen::new();
        assert_eq!(a.reset(42), b.reset(42));
        assert_eq!(a.state(), b.state());
        let mut c = PacMen::new();
        c.reset(43);
        assert!(a.state() != c.state() || a.state().dot_positions == c.state().dot_positions);
    }

    #[test]
    fn two_agents_on_dots_earn_two() {
        let mut env = PacMen::new();
        env.reset(1);
        let up = env.layout().room_cells(Direction::Up).to_vec();
        let center = env.layout().center_cells()[4];
        env.set_state(PacMenState {
            agent_positions: vec![up[0], up[1], center, center],
            dot_positions: vec![up[0], up[1], up[2]],
            step_count: 0,
        })
        .unwrap();
        let out = env.step(&[4, 4, 4, 4]).unwrap();
        assert_eq!(out.reward, 2.0);
        assert_eq!(env.state().dot_positions, vec![up[2]]);
    }

    #[test]
    fn shared_cell_eats_a_dot_once() {
        let mut env = PacMen::new();
        let up = env.layout().room_cells(Direction::Up).to_vec();
        env.set_state(PacMenState {
            agent_positions: vec![up[0]; 4],
            dot_positions: vec![up[0], up[5]],
            step_count: 0,
        })
        .unwrap();
        assert_eq!(env.step(&[4, 4, 4, 4]).unwrap().reward, 1.0);
    }

    #[test]
    fn no_dot_costs_a_tenth() {
        let mut env = PacMen::new();
        env.reset(3);
        let out = env.step(&[4, 4, 4, 4]).unwrap();
        assert_eq!(out.reward, -0.1);
    }

    #[test]
    fn walls_block_movement() {
        let mut env = PacMen::new();
        env.reset(0);
        let top_left_center = env.layout().center_cells()[0];
        env.set_state(PacMenState {
            agent_positions: vec![top_left_center; 4],
            dot_positions: vec![],
            step_count: 0,
        })
        .unwrap();
        // Up and left of the center room's corner are walls.
        env.step(&[0, 2, 4, 4]).unwrap();
        assert_eq!(env.state().agent_positions[0], top_left_center);
        assert_eq!(env.state().agent_positions[1], top_left_center);
    }

    #[test]
    fn eating_the_last_dot_refreshes_all_rooms() {
        let mut env = PacMen::new();
        env.reset(5);
        let down = env.layout().room_cells(Direction::Down)[0];
        env.set_state(PacMenState {
            agent_positions: vec![down; 4],
            dot_positions: vec![down],
            step_count: 10,
        })
        .unwrap();
        let out = env.step(&[4, 4, 4, 4]).unwrap();
        assert_eq!(out.reward, 1.0);
        assert_eq!(env.state().dot_positions.len(), 12);
        for d in Direction::ALL {
            assert_eq!(count_dots(&env, d), 3);
        }
    }

    #[test]
    fn truncates_at_the_time_limit_and_rejects_further_steps() {
        let mut env = PacMen::new();
        env.reset(9);
        for t in 1..=EPISODE_LIMIT {
            let out = env.step(&[4, 0, 1, 2]).unwrap();
            assert_eq!(out.truncated, t == EPISODE_LIMIT);
            assert!(!out.terminated);
        }
        assert!(matches!(env.step(&[4, 4, 4, 4]), Err(Error::EpisodeEnded)));
    }

    #[test]
    fn invalid_agent_and_action_are_errors() {
        let mut env = PacMen::new();
        env.reset(0);
        assert!(matches!(env.local_observation(4), Err(Error::AgentIndex { .. })));
        assert!(matches!(env.step(&[5, 0, 0, 0]), Err(Error::ActionIndex { .. })));
        assert!(matches!(env.step(&[0, 0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn observation_at_reset_sees_no_dots() {
        let mut env = PacMen::new();
        let out = env.reset(11);
        let spec = env.spec();
        for obs in &out.observations {
            assert_eq!(obs.len(), spec.obs_dim);
            assert!(obs[25..50].iter().all(|&x| x == 0.0));
            // The center room is walled in except for the corridor mouths.
            assert!(obs[..25].iter().any(|&x| x == 1.0));
        }
    }

    #[test]
    fn co_located_agents_observe_the_same_window() {
        let mut env = PacMen::new();
        let c = env.layout().center_cells()[4];
        let other = env.layout().center_cells()[0];
        env.set_state(PacMenState {
            agent_positions: vec![c, c, other, other],
            dot_positions: vec![],
            step_count: 0,
        })
        .unwrap();
        assert_eq!(env.local_observation(0).unwrap(), env.local_observation(1).unwrap());
    }

    #[test]
    fn global_state_has_declared_width() {
        let mut env = PacMen::new();
        let out = env.reset(2);
        assert_eq!(out.global_state.len(), env.spec().state_dim);
        let ones: f64 = out.global_state.iter().sum();
        assert_eq!(ones, (N_AGENTS + 12) as f64);
    }
}
