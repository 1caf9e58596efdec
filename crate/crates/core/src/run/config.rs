//! Flat `key = value` run configuration with dotted namespaces.
//!
//! Blank lines and `#` comments are ignored. Every key has a default; unknown
//! keys are errors. [`RunConfig::snapshot`] writes every key back out so a
//! run can be repeated from its output directory alone.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::diversity::{MarginalMode, ObsMode};
use crate::error::{Error, Result};
use crate::learner::{Ablation, L1Target, Settings};
use crate::mixer::MixerKind;
use crate::policy::EpsilonSchedule;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub env: String,
    pub seeds: Vec<u64>,
    pub ablation: Ablation,
    pub total_env_steps: u64,
    /// Env steps between evaluations; 0 disables periodic evaluation.
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub final_eval_episodes: usize,
    pub eval_epsilon: f64,
    /// Episodes between checkpoints; 0 keeps only the final one.
    pub checkpoint_interval: u64,
    pub out: PathBuf,
    pub deterministic: bool,
    pub settings: Settings,
    pub exploration: EpsilonSchedule,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: "pacmen".into(),
            seeds: vec![1],
            ablation: Ablation::None,
            total_env_steps: 1_000_000,
            eval_interval: 10_000,
            eval_episodes: 20,
            final_eval_episodes: 100,
            eval_epsilon: 0.0,
            checkpoint_interval: 1000,
            out: PathBuf::from("runs/pacmen"),
            deterministic: true,
            settings: Settings::default(),
            exploration: EpsilonSchedule::default(),
        }
    }
}

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("env", "environment name (pacmen)"),
    ("seed", "comma-separated root seeds, one independent run each"),
    ("ablation", "none | raw | no_identity | no_action | no_obs | all_shared | no_l1"),
    ("total_env_steps", "training budget per seed in environment steps"),
    ("eval_interval", "environment steps between evaluations (0 = final only)"),
    ("eval_episodes", "episodes per periodic evaluation"),
    ("final_eval_episodes", "episodes in the final evaluation that also writes traces"),
    ("eval_epsilon", "exploration rate during evaluation (0 = greedy)"),
    ("checkpoint_interval", "episodes between checkpoints (0 = final only)"),
    ("out", "output directory; one seed_<n> subdirectory per seed"),
    ("deterministic", "single-threaded, wall_clock column fixed at 0"),
    ("intrinsic.beta", "weight of the intrinsic reward in the TD target"),
    ("intrinsic.beta1", "identity scale inside the intrinsic reward and Boltzmann temperature"),
    ("intrinsic.beta2", "weight of the action-diversity term"),
    ("intrinsic.marginal", "uniform | variational identity weights for the marginal policy"),
    ("intrinsic.obs_mode", "forward | backward observation-diversity estimator"),
    ("intrinsic.obs_term", "include the observation-diversity term"),
    ("intrinsic.log_floor", "lower clamp for log-densities"),
    ("learner.gamma", "discount factor in [0, 1)"),
    ("learner.lambda", "L1 weight on the individual heads"),
    ("learner.l1_target", "outputs | weights"),
    ("learner.target_update_interval", "learner steps between target-network copies"),
    ("learner.buffer_capacity", "replay capacity in episodes"),
    ("learner.batch_size", "episodes per learner step"),
    ("learner.learning_rate", "RMSprop step size"),
    ("learner.rms_alpha", "RMSprop squared-gradient decay"),
    ("learner.rms_eps", "RMSprop denominator epsilon"),
    ("learner.grad_clip", "global gradient-norm clip (<= 0 disables)"),
    ("learner.mixer", "dueling | additive"),
    ("learner.recompute_intrinsic", "recompute intrinsic rewards on sampled batches"),
    ("exploration.start", "initial epsilon"),
    ("exploration.finish", "final epsilon"),
    ("exploration.anneal_steps", "environment steps of linear epsilon annealing"),
    ("model.fc_dim", "width of the encoder's first layer"),
    ("model.hidden_dim", "recurrent state size"),
    ("model.posterior_hidden", "hidden width of the posterior models"),
    ("model.normalized_density", "keep the Gaussian normalizing constant in observation log-densities"),
];

fn parse_num<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse `{value}`"))
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected true or false, got `{value}`")),
    }
}

fn choose<T: Copy>(value: &str, options: &[(&str, T)]) -> std::result::Result<T, String> {
    options.iter().find(|(name, _)| *name == value).map(|(_, v)| *v).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        format!("expected one of {}, got `{value}`", names.join(" | "))
    })
}

fn name_of<T: PartialEq>(value: T, options: &[(&'static str, T)]) -> &'static str {
    options.iter().find(|(_, v)| *v == value).map(|(n, _)| *n).expect("listed option")
}

const MARGINALS: &[(&str, MarginalMode)] = &[("uniform", MarginalMode::Uniform), ("variational", MarginalMode::Variational)];
const OBS_MODES: &[(&str, ObsMode)] = &[("forward", ObsMode::Forward), ("backward", ObsMode::Backward)];
const L1_TARGETS: &[(&str, L1Target)] = &[("outputs", L1Target::Outputs), ("weights", L1Target::Weights)];
const MIXERS: &[(&str, MixerKind)] = &[("dueling", MixerKind::Dueling), ("additive", MixerKind::Additive)];

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let s = &mut self.settings;
        match key {
            "env" => self.env = value.to_string(),
            "seed" => {
                let seeds: std::result::Result<Vec<u64>, String> =
                    value.split(',').map(|v| parse_num(v.trim())).collect();
                let seeds = seeds?;
                if seeds.is_empty() {
                    return Err("at least one seed is required".into());
                }
                self.seeds = seeds;
            }
            "ablation" => self.ablation = value.parse().map_err(|e: Error| e.to_string())?,
            "total_env_steps" => self.total_env_steps = parse_num(value)?,
            "eval_interval" => self.eval_interval = parse_num(value)?,
            "eval_episodes" => self.eval_episodes = parse_num(value)?,
            "final_eval_episodes" => self.final_eval_episodes = parse_num(value)?,
            "eval_epsilon" => self.eval_epsilon = parse_num(value)?,
            "checkpoint_interval" => self.checkpoint_interval = parse_num(value)?,
            "out" => self.out = PathBuf::from(value),
            "deterministic" => self.deterministic = parse_bool(value)?,
            "intrinsic.beta" => s.intrinsic.beta = parse_num(value)?,
            "intrinsic.beta1" => s.intrinsic.beta1 = parse_num(value)?,
            "intrinsic.beta2" => s.intrinsic.beta2 = parse_num(value)?,
            "intrinsic.marginal" => s.intrinsic.marginal = choose(value, MARGINALS)?,
            "intrinsic.obs_mode" => s.intrinsic.obs_mode = choose(value, OBS_MODES)?,
            "intrinsic.obs_term" => s.intrinsic.obs_term = parse_bool(value)?,
            "intrinsic.log_floor" => s.intrinsic.log_floor = parse_num(value)?,
            "learner.gamma" => s.learner.gamma = parse_num(value)?,
            "learner.lambda" => s.learner.lambda = parse_num(value)?,
            "learner.l1_target" => s.learner.l1_target = choose(value, L1_TARGETS)?,
            "learner.target_update_interval" => s.learner.target_update_interval = parse_num(value)?,
            "learner.buffer_capacity" => s.learner.buffer_capacity = parse_num(value)?,
            "learner.batch_size" => s.learner.batch_size = parse_num(value)?,
            "learner.learning_rate" => s.learner.optimizer.learning_rate = parse_num(value)?,
            "learner.rms_alpha" => s.learner.optimizer.alpha = parse_num(value)?,
            "learner.rms_eps" => s.learner.optimizer.eps = parse_num(value)?,
            "learner.grad_clip" => s.learner.optimizer.grad_clip = parse_num(value)?,
            "learner.mixer" => s.learner.mixer = choose(value, MIXERS)?,
            "learner.recompute_intrinsic" => s.learner.recompute_intrinsic = parse_bool(value)?,
            "exploration.start" => self.exploration.start = parse_num(value)?,
            "exploration.finish" => self.exploration.finish = parse_num(value)?,
            "exploration.anneal_steps" => self.exploration.anneal_steps = parse_num(value)?,
            "model.fc_dim" => s.model.fc_dim = parse_num(value)?,
            "model.hidden_dim" => s.model.hidden_dim = parse_num(value)?,
            "model.posterior_hidden" => s.model.posterior_hidden = parse_num(value)?,
            "model.normalized_density" => s.model.normalized_density = parse_bool(value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Current value of every key, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.settings;
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let values = [
            self.env.clone(),
            seeds.join(","),
            self.ablation.tag().to_string(),
            self.total_env_steps.to_string(),
            self.eval_interval.to_string(),
            self.eval_episodes.to_string(),
            self.final_eval_episodes.to_string(),
            self.eval_epsilon.to_string(),
            self.checkpoint_interval.to_string(),
            self.out.display().to_string(),
            self.deterministic.to_string(),
            s.intrinsic.beta.to_string(),
            s.intrinsic.beta1.to_string(),
            s.intrinsic.beta2.to_string(),
            name_of(s.intrinsic.marginal, MARGINALS).to_string(),
            name_of(s.intrinsic.obs_mode, OBS_MODES).to_string(),
            s.intrinsic.obs_term.to_string(),
            s.intrinsic.log_floor.to_string(),
            s.learner.gamma.to_string(),
            s.learner.lambda.to_string(),
            name_of(s.learner.l1_target, L1_TARGETS).to_string(),
            s.learner.target_update_interval.to_string(),
            s.learner.buffer_capacity.to_string(),
            s.learner.batch_size.to_string(),
            s.learner.optimizer.learning_rate.to_string(),
            s.learner.optimizer.alpha.to_string(),
            s.learner.optimizer.eps.to_string(),
            s.learner.optimizer.grad_clip.to_string(),
            name_of(s.learner.mixer, MIXERS).to_string(),
            s.learner.recompute_intrinsic.to_string(),
            self.exploration.start.to_string(),
            self.exploration.finish.to_string(),
            self.exploration.anneal_steps.to_string(),
            s.model.fc_dim.to_string(),
            s.model.hidden_dim.to_string(),
            s.model.posterior_hidden.to_string(),
            s.model.normalized_density.to_string(),
        ];
        KEYS.iter().map(|(k, _)| *k).zip(values).collect()
    }

    /// Parses config text on top of the defaults. `origin` names the source
    /// in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text, origin)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::ConfigParse {
                path: origin.to_string(),
                line: idx + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            self.set(key.trim(), value.trim()).map_err(err)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Applies a `key=value` override, as given on a command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        self.apply_text(assignment, "--set")
    }

    /// Every key with its value, preceded by its description.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for ((key, value), (_, doc)) in self.entries().into_iter().zip(KEYS) {
            let _ = writeln!(out, "# {doc}\n{key} = {value}");
        }
        out
    }

    /// `key = default  # description` lines for help output.
    pub fn documented_defaults() -> String {
        let mut out = String::new();
        for ((key, value), (_, doc)) in Self::default().entries().into_iter().zip(KEYS) {
            let _ = writeln!(out, "  {key} = {value}    # {doc}");
        }
        out
    }

    /// Settings with the ablation applied.
    pub fn effective_settings(&self) -> Settings {
        crate::learner::apply_ablation(&self.settings, self.ablation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.env != "pacmen" {
            return Err(Error::Config(format!("unknown environment `{}`", self.env)));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.total_env_steps == 0 {
            return Err(Error::Config("total_env_steps must be positive".into()));
        }
        if self.final_eval_episodes == 0 || (self.eval_interval > 0 && self.eval_episodes == 0) {
            return Err(Error::Config("evaluation episode counts must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.eval_epsilon) {
            return Err(Error::Config(format!("eval_epsilon must lie in [0, 1], got {}", self.eval_epsilon)));
        }
        let e = &self.exploration;
        if !((0.0..=1.0).contains(&e.start) && (0.0..=1.0).contains(&e.finish)) {
            return Err(Error::Config("exploration rates must lie in [0, 1]".into()));
        }
        self.effective_settings().validate()
    }
}
