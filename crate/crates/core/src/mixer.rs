//! Joint value factorization.
//!
//! The dueling mixer writes the joint value as a sum of per-agent state
//! values plus a nonnegatively weighted sum of per-agent advantages:
//!
//! ```text
//! Q_tot = Σ_i V_i + Σ_i w_i(s) · A_i,   V_i = max_a Q_i(a),   A_i = Q_i(a_i) − V_i ≤ 0
//! ```
//!
//! Because every `A_i ≤ 0` and every `w_i ≥ 0`, the per-agent greedy actions
//! maximize `Q_tot`. Weights come from four linear heads on the global state,
//! each followed by an absolute value, summed per agent.

use serde::{Deserialize, Serialize};

use crate::nn::Linear;
use crate::params::{Matrix, ParamSet};
use crate::rng::Rng;
use crate::tape::{argmax, Tape, Var};

pub const WEIGHT_HEADS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixerKind {
    /// State-weighted advantages on top of summed state values.
    Dueling,
    /// Plain sum of chosen local values.
    Additive,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mixer {
    pub kind: MixerKind,
    pub n_agents: usize,
    pub state_dim: usize,
    heads: Vec<Linear>,
}

impl Mixer {
    pub fn new(params: &mut ParamSet, kind: MixerKind, n_agents: usize, state_dim: usize, rng: &mut Rng) -> Self {
        let heads = match kind {
            MixerKind::Dueling => (0..WEIGHT_HEADS)
                .map(|h| Linear::new(params, &format!("mixer.weight_head.{h}"), state_dim, n_agents, rng))
                .collect(),
            MixerKind::Additive => Vec::new(),
        };
        Self {
            kind,
            n_agents,
            state_dim,
            heads,
        }
    }

    pub fn heads(&self) -> &[Linear] {
        &self.heads
    }

    /// Nonnegative advantage weights, `rows × n_agents`.
    pub fn weight_vars(&self, tape: &mut Tape, params: &ParamSet, state: Var) -> Option<Var> {
        let mut total = None;
        for head in &self.heads {
            let k = head.forward(tape, params, state);
            let k = tape.abs(k);
            total = Some(match total {
                None => k,
                Some(acc) => tape.add(acc, k),
            });
        }
        total
    }

    /// `rows × 1` joint values from chosen and maximal local values
    /// (`rows × n_agents` each).
    pub fn mix_vars(&self, tape: &mut Tape, params: &ParamSet, chosen: Var, max: Var, state: Var) -> Var {
        match self.kind {
            MixerKind::Additive => tape.row_sum(chosen),
            MixerKind::Dueling => {
                let w = self.weight_vars(tape, params, state).expect("dueling mixer has weight heads");
                let adv = tape.sub(chosen, max);
                let weighted = tape.mul(w, adv);
                let per_agent = tape.add(max, weighted);
                tape.row_sum(per_agent)
            }
        }
    }

    pub fn advantage_weights(&self, params: &ParamSet, state: &[f64]) -> Vec<f64> {
        let mut tape = Tape::no_grad();
        let s = tape.constant(row(state));
        match self.weight_vars(&mut tape, params, s) {
            Some(w) => tape.value(w).row(0).to_vec(),
            None => vec![1.0; self.n_agents],
        }
    }

    /// Joint value of one transition.
    pub fn mix(&self, params: &ParamSet, q_locals: &[f64], q_local_max: &[f64], state: &[f64]) -> f64 {
        let mut tape = Tape::no_grad();
        let chosen = tape.constant(row(q_locals));
        let max = tape.constant(row(q_local_max));
        let s = tape.constant(row(state));
        let out = self.mix_vars(&mut tape, params, chosen, max, s);
        tape.scalar(out)
    }

    /// Joint value at every agent's greedy action, which by construction is
    /// the maximum over joint actions.
    pub fn greedy_joint_value(&self, params: &ParamSet, q_all: &[Vec<f64>], state: &[f64]) -> f64 {
        let max: Vec<f64> = q_all.iter().map(|q| q[argmax(q)]).collect();
        self.mix(params, &max, &max, state)
    }
}

fn row(values: &[f64]) -> Matrix {
    Matrix::from_shape_vec((1, values.len()), values.to_vec()).expect("single row")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeedTree, Stream};
    use rand::Rng as _;

    fn random_instance(rng: &mut Rng, n_agents: usize, n_actions: usize, state_dim: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let q = (0..n_agents)
            .map(|_| (0..n_actions).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let s = (0..state_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (q, s)
    }

    fn max_of(q: &[Vec<f64>]) -> Vec<f64> {
        q.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
    }

    #[test]
    fn greedy_actions_give_sum_of_state_values() {
        let mut rng = SeedTree::new(0).stream(Stream::Init);
        let mut params = ParamSet::new();
        let mixer = Mixer::new(&mut params, MixerKind::Dueling, 3, 4, &mut rng);
        let (q, s) = random_instance(&mut rng, 3, 4, 4);
        let v = max_of(&q);
        let total: f64 = v.iter().sum();
        assert!((mixer.mix(&params, &v, &v, &s) - total).abs() < 1e-12);
        assert!((mixer.greedy_joint_value(&params, &q, &s) - total).abs() < 1e-12);
    }

    #[test]
    fn single_agent_unit_weight_returns_its_value() {
        let mut rng = SeedTree::new(1).stream(Stream::Init);
        let mut params = ParamSet::new();
        let mixer = Mixer::new(&mut params, MixerKind::Dueling, 1, 1, &mut rng);
        // Four heads each producing |0.25| on a zero state.
        for head in mixer.heads().to_vec() {
            params.get_mut(head.weight).fill(0.0);
            params.get_mut(head.bias).fill(0.25);
        }
        assert_eq!(mixer.advantage_weights(&params, &[0.0]), vec![1.0]);
        let q = mixer.mix(&params, &[0.7], &[2.0], &[0.0]);
        assert!((q - 0.7).abs() < 1e-12);
    }

    #[test]
    fn joint_argmax_matches_local_argmax_on_two_by_three() {
        let mut rng = SeedTree::new(2).stream(Stream::Init);
        let mut params = ParamSet::new();
        let mixer = Mixer::new(&mut params, MixerKind::Dueling, 2, 3, &mut rng);
        for _ in 0..50 {
            let (q, s) = random_instance(&mut rng, 2, 3, 3);
            let v = max_of(&q);
            let mut best = (f64::NEG_INFINITY, (0, 0));
            for a0 in 0..3 {
                for a1 in 0..3 {
                    let val = mixer.mix(&params, &[q[0][a0], q[1][a1]], &v, &s);
                    if val > best.0 {
                        best = (val, (a0, a1));
                    }
                }
            }
            assert_eq!(best.1, (argmax(&q[0]), argmax(&q[1])));
            assert_eq!(best.0, mixer.greedy_joint_value(&params, &q, &s));
        }
    }

    #[test]
    fn agent_permutation_with_permuted_weights_keeps_value() {
        let mut rng = SeedTree::new(3).stream(Stream::Init);
        let mut params = ParamSet::new();
        let mixer = Mixer::new(&mut params, MixerKind::Dueling, 2, 2, &mut rng);
        let (q, s) = random_instance(&mut rng, 2, 3, 2);
        let v = max_of(&q);
        let chosen = [q[0][0], q[1][2]];
        let original = mixer.mix(&params, &chosen, &v, &s);

        let mut swapped = params.clone();
        for head in mixer.heads() {
            for id in [head.weight, head.bias] {
                let m = swapped.get_mut(id);
                for mut r in m.rows_mut() {
                    r.swap(0, 1);
                }
            }
        }
        let permuted = mixer.mix(&swapped, &[chosen[1], chosen[0]], &[v[1], v[0]], &s);
        assert!((original - permuted).abs() < 1e-12);
    }

    #[test]
    fn additive_mixer_sums_chosen_values() {
        let mut rng = SeedTree::new(4).stream(Stream::Init);
        let mut params = ParamSet::new();
        let mixer = Mixer::new(&mut params, MixerKind::Additive, 3, 5, &mut rng);
        assert!(params.is_empty());
        let q = mixer.mix(&params, &[1.0, -2.0, 0.5], &[3.0, 3.0, 3.0], &[0.0; 5]);
        assert_eq!(q, -0.5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn weights_are_nonnegative(seed in 0u64..1000, state in proptest::collection::vec(-10.0f64..10.0, 6)) {
                let mut rng = SeedTree::new(seed).stream(Stream::Init);
                let mut params = ParamSet::new();
                let mixer = Mixer::new(&mut params, MixerKind::Dueling, 3, 6, &mut rng);
                prop_assert!(mixer.advantage_weights(&params, &state).iter().all(|&w| w >= 0.0));
            }

            #[test]
            fn raising_a_chosen_value_never_lowers_the_joint_value(
                seed in 0u64..1000,
                agent in 0usize..3,
                bump in 0.0f64..2.0,
            ) {
                let mut rng = SeedTree::new(seed).stream(Stream::Init);
                let mut params = ParamSet::new();
                let mixer = Mixer::new(&mut params, MixerKind::Dueling, 3, 4, &mut rng);
                let (q, s) = random_instance(&mut rng, 3, 4, 4);
                let v = max_of(&q);
                let chosen: Vec<f64> = q.iter().map(|r| r[1]).collect();
                let mut raised = chosen.clone();
                raised[agent] += bump;
                let mut v_raised = v.clone();
                v_raised[agent] = v_raised[agent].max(raised[agent]);
                let before = mixer.mix(&params, &chosen, &v, &s);
                let after = mixer.mix(&params, &raised, &v_raised, &s);
                prop_assert!(after >= before - 1e-12);
            }
        }
    }
}
