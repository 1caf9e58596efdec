//! Exact mutual information on small discrete joint tables, and the
//! variational lower bounds evaluated on the same tables.
//!
//! Tables index `p(τ, a, o′, id)` over finite sets. Inside
//! [`TablePosteriors`], a history is the one-column row `[τ]` and a next
//! observation is `[o′]`.

use super::{PosteriorEstimates, PosteriorRows};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct JointTable {
    pub n_tau: usize,
    pub n_actions: usize,
    pub n_obs: usize,
    pub n_ids: usize,
    probs: Vec<f64>,
}

/// `I(a; id | τ)` and `I(o′; id | τ, a)` in nats.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MutualInformation {
    pub action: f64,
    pub observation: f64,
}

impl JointTable {
    /// `probs` is laid out `[τ][a][o′][id]`; it must be nonnegative and sum
    /// to one within `1e-9`.
    pub fn new(n_tau: usize, n_actions: usize, n_obs: usize, n_ids: usize, probs: Vec<f64>) -> Result<Self> {
        let len = n_tau * n_actions * n_obs * n_ids;
        if probs.len() != len {
            return Err(Error::Dimension {
                context: "joint table",
                expected: len,
                actual: probs.len(),
            });
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized(total));
        }
        Ok(Self {
            n_tau,
            n_actions,
            n_obs,
            n_ids,
            probs,
        })
    }

    pub fn p(&self, tau: usize, a: usize, o: usize, id: usize) -> f64 {
        self.probs[((tau * self.n_actions + a) * self.n_obs + o) * self.n_ids + id]
    }

    fn sum(&self, f: impl Fn(usize, usize, usize, usize) -> bool) -> f64 {
        let mut s = 0.0;
        for tau in 0..self.n_tau {
            for a in 0..self.n_actions {
                for o in 0..self.n_obs {
                    for id in 0..self.n_ids {
                        if f(tau, a, o, id) {
                            s += self.p(tau, a, o, id);
                        }
                    }
                }
            }
        }
        s
    }

    pub fn p_tau_id(&self, tau: usize, id: usize) -> f64 {
        self.sum(|t, _, _, i| t == tau && i == id)
    }

    pub fn p_tau(&self, tau: usize) -> f64 {
        self.sum(|t, _, _, _| t == tau)
    }

    pub fn p_tau_a(&self, tau: usize, a: usize) -> f64 {
        self.sum(|t, x, _, _| t == tau && x == a)
    }

    pub fn p_tau_a_id(&self, tau: usize, a: usize, id: usize) -> f64 {
        self.sum(|t, x, _, i| t == tau && x == a && i == id)
    }

    pub fn p_tau_a_o(&self, tau: usize, a: usize, o: usize) -> f64 {
        self.sum(|t, x, y, _| t == tau && x == a && y == o)
    }

    /// `p(o′ | τ, a, id)` over `o′`; uniform when the condition has no mass.
    pub fn obs_given_identity(&self, tau: usize, a: usize, id: usize) -> Vec<f64> {
        let z = self.p_tau_a_id(tau, a, id);
        (0..self.n_obs)
            .map(|o| if z > 0.0 { self.p(tau, a, o, id) / z } else { 1.0 / self.n_obs as f64 })
            .collect()
    }

    pub fn obs_given(&self, tau: usize, a: usize) -> Vec<f64> {
        let z = self.p_tau_a(tau, a);
        (0..self.n_obs)
            .map(|o| if z > 0.0 { self.p_tau_a_o(tau, a, o) / z } else { 1.0 / self.n_obs as f64 })
            .collect()
    }

    /// `p(id | o′, τ, a)` over identities.
    pub fn identity_given_next(&self, tau: usize, a: usize, o: usize) -> Vec<f64> {
        let z = self.p_tau_a_o(tau, a, o);
        (0..self.n_ids)
            .map(|id| if z > 0.0 { self.p(tau, a, o, id) / z } else { 1.0 / self.n_ids as f64 })
            .collect()
    }

    pub fn identity_prior(&self, tau: usize, a: usize) -> Vec<f64> {
        let z = self.p_tau_a(tau, a);
        (0..self.n_ids)
            .map(|id| if z > 0.0 { self.p_tau_a_id(tau, a, id) / z } else { 1.0 / self.n_ids as f64 })
            .collect()
    }

    pub fn identity_given_trajectory(&self, tau: usize) -> Vec<f64> {
        let z = self.p_tau(tau);
        (0..self.n_ids)
            .map(|id| if z > 0.0 { self.p_tau_id(tau, id) / z } else { 1.0 / self.n_ids as f64 })
            .collect()
    }

    /// `p(a | τ, id)` over actions.
    pub fn action_given_identity(&self, tau: usize, id: usize) -> Vec<f64> {
        let z = self.p_tau_id(tau, id);
        (0..self.n_actions)
            .map(|a| if z > 0.0 { self.p_tau_a_id(tau, a, id) / z } else { 1.0 / self.n_actions as f64 })
            .collect()
    }

    pub fn action_given(&self, tau: usize) -> Vec<f64> {
        let z = self.p_tau(tau);
        (0..self.n_actions)
            .map(|a| if z > 0.0 { self.p_tau_a(tau, a) / z } else { 1.0 / self.n_actions as f64 })
            .collect()
    }
}

/// `E_p[f(τ, a, o′, id)]`, skipping zero-mass cells.
pub fn expectation(table: &JointTable, f: impl Fn(usize, usize, usize, usize) -> f64) -> f64 {
    let mut s = 0.0;
    for tau in 0..table.n_tau {
        for a in 0..table.n_actions {
            for o in 0..table.n_obs {
                for id in 0..table.n_ids {
                    let p = table.p(tau, a, o, id);
                    if p > 0.0 {
                        s += p * f(tau, a, o, id);
                    }
                }
            }
        }
    }
    s
}

pub fn mc_mutual_information(table: &JointTable) -> MutualInformation {
    let action = expectation(table, |tau, a, _, id| {
        (table.action_given_identity(tau, id)[a] / table.action_given(tau)[a]).ln()
    });
    let observation = expectation(table, |tau, a, o, id| {
        (table.obs_given_identity(tau, a, id)[o] / table.obs_given(tau, a)[o]).ln()
    });
    MutualInformation { action, observation }
}

/// `E[log q(o′|τ,a,id) − log p(o′|τ,a)]` for a conditional density `q(τ,a,id)`
/// over next observations. At most `I(o′; id | τ, a)`.
pub fn forward_bound(table: &JointTable, q: impl Fn(usize, usize, usize) -> Vec<f64>) -> f64 {
    expectation(table, |tau, a, o, id| q(tau, a, id)[o].ln() - table.obs_given(tau, a)[o].ln())
}

/// `E[log q(id|o′,τ,a) − log p(id|τ,a)]` for a posterior `q(τ,a,o′)` over
/// identities. At most `I(o′; id | τ, a)`.
pub fn backward_bound(table: &JointTable, q: impl Fn(usize, usize, usize) -> Vec<f64>) -> f64 {
    expectation(table, |tau, a, o, id| q(tau, a, o)[id].ln() - table.identity_prior(tau, a)[id].ln())
}

/// `E[log q(a|τ,id) − log p(a|τ)]` for a policy `q(τ,id)` over actions. At
/// most `I(a; id | τ)`.
pub fn action_bound(table: &JointTable, q: impl Fn(usize, usize) -> Vec<f64>) -> f64 {
    expectation(table, |tau, a, _, id| q(tau, id)[a].ln() - table.action_given(tau)[a].ln())
}

/// Posterior estimates read exactly from a joint table.
#[derive(Clone, Debug)]
pub struct TablePosteriors<'a> {
    pub table: &'a JointTable,
}

impl TablePosteriors<'_> {
    fn keys(rows: &PosteriorRows) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        (0..rows.len()).map(|r| {
            (
                rows.hidden[[r, 0]] as usize,
                rows.actions[r],
                rows.next_obs[[r, 0]] as usize,
                rows.identities[r],
            )
        })
    }
}

impl PosteriorEstimates for TablePosteriors<'_> {
    fn log_obs_given_identity(&self, rows: &PosteriorRows) -> Vec<f64> {
        Self::keys(rows)
            .map(|(tau, a, o, id)| self.table.obs_given_identity(tau, a, id)[o].ln())
            .collect()
    }

    fn log_obs(&self, rows: &PosteriorRows) -> Vec<f64> {
        Self::keys(rows).map(|(tau, a, o, _)| self.table.obs_given(tau, a)[o].ln()).collect()
    }

    fn log_identity_given_next(&self, rows: &PosteriorRows) -> Vec<f64> {
        Self::keys(rows)
            .map(|(tau, a, o, id)| self.table.identity_given_next(tau, a, o)[id].ln())
            .collect()
    }

    fn log_identity_prior(&self, rows: &PosteriorRows) -> Vec<f64> {
        Self::keys(rows)
            .map(|(tau, a, _, id)| self.table.identity_prior(tau, a)[id].ln())
            .collect()
    }

    fn identity_given_trajectory(&self, rows: &PosteriorRows) -> Vec<Vec<f64>> {
        Self::keys(rows).map(|(tau, ..)| self.table.identity_given_trajectory(tau)).collect()
    }
}
