//! Variational posterior networks and their likelihood training.

use serde::{Deserialize, Serialize};

use super::{gaussian_log_density, PosteriorEstimates};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::params::{Matrix, ParamSet, RmsProp, RmsPropConfig};
use crate::rng::Rng;
use crate::tape::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorKind {
    /// `q_φ(o′|τ,a,id)`, a Gaussian mean over the next observation.
    ObsGivenIdentity,
    /// `q_φ2(o′|τ,a)`.
    Obs,
    /// `q_η1(id|o′,τ,a)`, logits over identities.
    IdentityGivenNext,
    /// `q_η2(id|τ,a)`.
    IdentityPrior,
    /// `q_ξ(id|τ)`.
    IdentityGivenTrajectory,
}

impl PosteriorKind {
    pub const ALL: [PosteriorKind; 5] = [
        PosteriorKind::ObsGivenIdentity,
        PosteriorKind::Obs,
        PosteriorKind::IdentityGivenNext,
        PosteriorKind::IdentityPrior,
        PosteriorKind::IdentityGivenTrajectory,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PosteriorKind::ObsGivenIdentity => "q_phi",
            PosteriorKind::Obs => "q_phi2",
            PosteriorKind::IdentityGivenNext => "q_eta1",
            PosteriorKind::IdentityPrior => "q_eta2",
            PosteriorKind::IdentityGivenTrajectory => "q_xi",
        }
    }

    fn predicts_obs(self) -> bool {
        matches!(self, PosteriorKind::ObsGivenIdentity | PosteriorKind::Obs)
    }
}

/// Row-aligned conditioning data: one row per (step, agent).
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorRows {
    /// Recurrent summaries, `rows × traj_dim`.
    pub hidden: Matrix,
    pub actions: Vec<usize>,
    pub identities: Vec<usize>,
    /// `rows × obs_dim`.
    pub next_obs: Matrix,
}

impl PosteriorRows {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorConfig {
    pub obs_dim: usize,
    pub n_actions: usize,
    pub n_agents: usize,
    /// Width of the history summary fed to every model.
    pub traj_dim: usize,
    pub hidden_dim: usize,
    /// Include the Gaussian normalizing constant in observation log-densities.
    pub normalized_density: bool,
}

#[derive(Clone, Debug)]
pub struct PosteriorModel {
    pub kind: PosteriorKind,
    pub mlp: Mlp,
    pub params: ParamSet,
    optimizer: RmsProp,
    config: PosteriorConfig,
}

impl PosteriorModel {
    fn new(kind: PosteriorKind, config: PosteriorConfig, optimizer: &RmsPropConfig, rng: &mut Rng) -> Self {
        let c = &config;
        let (in_dim, out_dim) = match kind {
            PosteriorKind::ObsGivenIdentity => (c.traj_dim + c.n_actions + c.n_agents, c.obs_dim),
            PosteriorKind::Obs => (c.traj_dim + c.n_actions, c.obs_dim),
            PosteriorKind::IdentityGivenNext => (c.obs_dim + c.traj_dim + c.n_actions, c.n_agents),
            PosteriorKind::IdentityPrior => (c.traj_dim + c.n_actions, c.n_agents),
            PosteriorKind::IdentityGivenTrajectory => (c.traj_dim, c.n_agents),
        };
        let mut params = ParamSet::new();
        let mlp = Mlp::new(&mut params, kind.name(), in_dim, c.hidden_dim, out_dim, rng);
        let optimizer = RmsProp::new(optimizer.clone(), &params);
        Self {
            kind,
            mlp,
            params,
            optimizer,
            config,
        }
    }

    pub fn inputs(&self, rows: &PosteriorRows) -> Matrix {
        let c = &self.config;
        let mut x = Matrix::zeros((rows.len(), self.mlp.in_dim()));
        for (r, mut row) in x.rows_mut().into_iter().enumerate() {
            let mut at = 0;
            if self.kind == PosteriorKind::IdentityGivenNext {
                row.slice_mut(ndarray::s![..c.obs_dim]).assign(&rows.next_obs.row(r));
                at = c.obs_dim;
            }
            row.slice_mut(ndarray::s![at..at + c.traj_dim]).assign(&rows.hidden.row(r));
            at += c.traj_dim;
            if self.kind == PosteriorKind::IdentityGivenTrajectory {
                continue;
            }
            row[at + rows.actions[r]] = 1.0;
            at += c.n_actions;
            if self.kind == PosteriorKind::ObsGivenIdentity {
                row[at + rows.identities[r]] = 1.0;
            }
        }
        x
    }

    /// Gaussian means or identity logits, one row per input row.
    pub fn output(&self, tape: &mut Tape, rows: &PosteriorRows) -> Var {
        let x = tape.constant(self.inputs(rows));
        self.mlp.forward(tape, &self.params, x)
    }

    /// Masked mean negative log-likelihood of the model's target. The
    /// Gaussian constant is left off the tape; see [`Self::loss_offset`].
    pub fn loss(&self, tape: &mut Tape, rows: &PosteriorRows, mask: &[f64]) -> Option<Var> {
        let count: f64 = mask.iter().sum();
        if count <= 0.0 {
            return None;
        }
        let out = self.output(tape, rows);
        let m = tape.constant(Matrix::from_shape_vec((mask.len(), 1), mask.to_vec()).expect("mask column"));
        let per_row = if self.kind.predicts_obs() {
            let target = tape.constant(rows.next_obs.clone());
            let diff = tape.sub(out, target);
            let sq = tape.square(diff);
            let s = tape.row_sum(sq);
            tape.scale(s, 0.5)
        } else {
            let lp = tape.log_softmax(out);
            let picked = tape.gather(lp, rows.identities.clone());
            tape.scale(picked, -1.0)
        };
        let masked = tape.mul(per_row, m);
        let total = tape.sum(masked);
        Some(tape.scale(total, 1.0 / count))
    }

    /// Constant added to the tape loss to report a true negative log-likelihood.
    pub fn loss_offset(&self) -> f64 {
        if self.kind.predicts_obs() && self.config.normalized_density {
            0.5 * self.config.obs_dim as f64 * (2.0 * std::f64::consts::PI).ln()
        } else {
            0.0
        }
    }

    /// One optimizer step on the masked NLL; `None` when no row is valid.
    pub fn train_step(&mut self, rows: &PosteriorRows, mask: &[f64]) -> Option<f64> {
        let mut tape = Tape::new();
        let loss = self.loss(&mut tape, rows, mask)?;
        let value = tape.scalar(loss) + self.loss_offset();
        let grads = tape.backward(loss);
        self.optimizer.step(&mut self.params, &grads);
        Some(value)
    }

    fn evaluate(&self, rows: &PosteriorRows) -> Matrix {
        let mut tape = Tape::no_grad();
        let out = self.output(&mut tape, rows);
        tape.value(out).clone()
    }

    fn log_obs(&self, rows: &PosteriorRows) -> Vec<f64> {
        let mean = self.evaluate(rows);
        (0..rows.len())
            .map(|r| {
                let x = rows.next_obs.row(r);
                let m = mean.row(r);
                gaussian_log_density(
                    x.as_slice().expect("contiguous row"),
                    m.as_slice().expect("contiguous row"),
                    self.config.normalized_density,
                )
            })
            .collect()
    }

    fn log_identity(&self, rows: &PosteriorRows) -> Vec<f64> {
        let mut tape = Tape::no_grad();
        let out = self.output(&mut tape, rows);
        let lp = tape.log_softmax(out);
        let lp = tape.value(lp);
        rows.identities.iter().enumerate().map(|(r, &id)| lp[[r, id]]).collect()
    }

    fn identity_distribution(&self, rows: &PosteriorRows) -> Vec<Vec<f64>> {
        let mut tape = Tape::no_grad();
        let out = self.output(&mut tape, rows);
        let lp = tape.log_softmax(out);
        tape.value(lp).rows().into_iter().map(|r| r.iter().map(|x| x.exp()).collect()).collect()
    }
}

/// The five posterior networks, each with its own parameters and optimizer.
#[derive(Clone, Debug)]
pub struct PosteriorModels {
    pub config: PosteriorConfig,
    models: Vec<PosteriorModel>,
}

impl PosteriorModels {
    pub fn new(config: PosteriorConfig, optimizer: &RmsPropConfig, rng: &mut Rng) -> Self {
        let models = PosteriorKind::ALL
            .iter()
            .map(|&kind| PosteriorModel::new(kind, config, optimizer, rng))
            .collect();
        Self { config, models }
    }

    pub fn get(&self, kind: PosteriorKind) -> &PosteriorModel {
        &self.models[index(kind)]
    }

    pub fn get_mut(&mut self, kind: PosteriorKind) -> &mut PosteriorModel {
        &mut self.models[index(kind)]
    }

    pub fn iter(&self) -> impl Iterator<Item = &PosteriorModel> {
        self.models.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut PosteriorModel> {
        self.models.iter_mut()
    }

    pub fn check_rows(&self, rows: &PosteriorRows) -> Result<()> {
        let c = &self.config;
        let n = rows.len();
        let checks = [
            ("posterior hidden rows", n, rows.hidden.nrows()),
            ("posterior hidden width", c.traj_dim, rows.hidden.ncols()),
            ("posterior identities", n, rows.identities.len()),
            ("posterior next-observation rows", n, rows.next_obs.nrows()),
            ("posterior next-observation width", c.obs_dim, rows.next_obs.ncols()),
        ];
        for (context, expected, actual) in checks {
            if expected != actual {
                return Err(Error::Dimension {
                    context,
                    expected,
                    actual,
                });
            }
        }
        if let Some(&a) = rows.actions.iter().find(|&&a| a >= c.n_actions) {
            return Err(Error::ActionIndex {
                action: a,
                n_actions: c.n_actions,
            });
        }
        if let Some(&id) = rows.identities.iter().find(|&&id| id >= c.n_agents) {
            return Err(Error::AgentIndex {
                index: id,
                n_agents: c.n_agents,
            });
        }
        Ok(())
    }
}

fn index(kind: PosteriorKind) -> usize {
    PosteriorKind::ALL.iter().position(|&k| k == kind).expect("listed kind")
}

impl PosteriorEstimates for PosteriorModels {
    fn log_obs_given_identity(&self, rows: &PosteriorRows) -> Vec<f64> {
        self.get(PosteriorKind::ObsGivenIdentity).log_obs(rows)
    }

    fn log_obs(&self, rows: &PosteriorRows) -> Vec<f64> {
        self.get(PosteriorKind::Obs).log_obs(rows)
    }

    fn log_identity_given_next(&self, rows: &PosteriorRows) -> Vec<f64> {
        self.get(PosteriorKind::IdentityGivenNext).log_identity(rows)
    }

    fn log_identity_prior(&self, rows: &PosteriorRows) -> Vec<f64> {
        self.get(PosteriorKind::IdentityPrior).log_identity(rows)
    }

    fn identity_given_trajectory(&self, rows: &PosteriorRows) -> Vec<Vec<f64>> {
        self.get(PosteriorKind::IdentityGivenTrajectory).identity_distribution(rows)
    }
}

/// Negative log-likelihoods recorded during one training call.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PosteriorLosses {
    pub losses: Vec<(PosteriorKind, f64)>,
}

impl PosteriorLosses {
    pub fn get(&self, kind: PosteriorKind) -> Option<f64> {
        self.losses.iter().find(|(k, _)| *k == kind).map(|&(_, v)| v)
    }
}

/// One likelihood step for each listed model on the valid rows.
pub fn train_posteriors(
    rows: &PosteriorRows,
    mask: &[f64],
    models: &mut PosteriorModels,
    kinds: &[PosteriorKind],
) -> Result<PosteriorLosses> {
    if rows.is_empty() {
        return Err(Error::EmptyBatch);
    }
    models.check_rows(rows)?;
    if mask.len() != rows.len() {
        return Err(Error::Dimension {
            context: "posterior mask",
            expected: rows.len(),
            actual: mask.len(),
        });
    }
    let mut out = PosteriorLosses::default();
    if mask.iter().all(|&m| m <= 0.0) {
        log::warn!("posterior update skipped: no valid steps in batch");
        return Ok(out);
    }
    for &kind in kinds {
        if let Some(loss) = models.get_mut(kind).train_step(rows, mask) {
            out.losses.push((kind, loss));
        }
    }
    Ok(out)
}
