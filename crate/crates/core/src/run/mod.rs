//! Run configuration and the per-seed training driver that writes metrics,
//! evaluations, checkpoints and traces to disk.

mod config;

pub use config::{RunConfig, KEYS};

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::envsim::{write_traces, MultiAgentEnv, PacMen};
use crate::error::{Error, Result};
use crate::learner::{EpisodeMetrics, EvalReport, Trainer};

pub const METRICS_FILE: &str = "metrics.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const TRACES_FILE: &str = "traces.jsonl";
pub const CONFIG_FILE: &str = "config.cfg";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Directory holding one seed's artifacts.
pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub ablation: String,
    pub episodes: u64,
    pub env_steps: u64,
    pub final_return_mean: f64,
    pub final_return_sd: f64,
    pub final_returns: Vec<f64>,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Precondition(format!("{}: csv error {other:?}", path.display())),
    }
}

fn metrics_header(n_agents: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "episode",
        "env_steps",
        "return",
        "td_loss",
        "l1_loss",
        "intrinsic_action_mean",
        "intrinsic_obs_mean",
        "epsilon",
        "wall_clock",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((0..n_agents).map(|i| format!("intrinsic_agent_{i}")));
    h.push("log_clamps".into());
    h
}

fn metrics_row(m: &EpisodeMetrics, wall_clock: f64) -> Vec<String> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut row = vec![
        m.episode.to_string(),
        m.env_steps.to_string(),
        m.env_return.to_string(),
        opt(m.step.as_ref().map(|s| s.loss.td)),
        opt(m.step.as_ref().map(|s| s.loss.l1)),
        m.intrinsic_action_mean.to_string(),
        m.intrinsic_obs_mean.to_string(),
        m.epsilon.to_string(),
        wall_clock.to_string(),
    ];
    row.extend(m.intrinsic_per_agent.iter().map(|x| x.to_string()));
    row.push(m.log_clamps.to_string());
    row
}

/// Trains one seed of `cfg` and writes its artifacts under `dir`.
///
/// `on_episode` sees every episode's metrics as they are produced.
pub fn train_seed(
    cfg: &RunConfig,
    seed: u64,
    dir: &Path,
    mut on_episode: impl FnMut(&EpisodeMetrics),
) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(dir.join(CHECKPOINT_DIR)).map_err(|e| Error::io(dir, e))?;
    let mut seed_cfg = cfg.clone();
    seed_cfg.seeds = vec![seed];
    let config_path = dir.join(CONFIG_FILE);
    fs::write(&config_path, seed_cfg.snapshot()).map_err(|e| Error::io(&config_path, e))?;

    let env = PacMen::new();
    let n = env.spec().n_agents;
    let mut trainer = Trainer::new(env, cfg.effective_settings(), cfg.exploration, seed)?;

    let metrics_path = dir.join(METRICS_FILE);
    let mut metrics = csv::Writer::from_path(&metrics_path).map_err(|e| csv_err(&metrics_path, e))?;
    metrics.write_record(metrics_header(n)).map_err(|e| csv_err(&metrics_path, e))?;
    let eval_path = dir.join(EVAL_FILE);
    let mut evals = csv::Writer::from_path(&eval_path).map_err(|e| csv_err(&eval_path, e))?;
    evals
        .write_record(["episode", "env_steps", "return_mean", "return_sd", "episodes"])
        .map_err(|e| csv_err(&eval_path, e))?;
    let write_eval = |evals: &mut csv::Writer<fs::File>, t: &Trainer<PacMen>, r: &EvalReport| {
        evals
            .write_record([
                t.episodes.to_string(),
                t.env_steps.to_string(),
                r.mean().to_string(),
                r.sd().to_string(),
                r.returns.len().to_string(),
            ])
            .and_then(|_| evals.flush().map_err(csv::Error::from))
            .map_err(|e| csv_err(&eval_path, e))
    };

    let start = Instant::now();
    let mut next_eval = cfg.eval_interval;
    while trainer.env_steps < cfg.total_env_steps {
        let m = trainer.run_episode()?;
        let wall = if cfg.deterministic { 0.0 } else { start.elapsed().as_secs_f64() };
        metrics.write_record(metrics_row(&m, wall)).map_err(|e| csv_err(&metrics_path, e))?;
        on_episode(&m);
        if cfg.eval_interval > 0 && trainer.env_steps >= next_eval && trainer.env_steps < cfg.total_env_steps {
            while next_eval <= trainer.env_steps {
                next_eval += cfg.eval_interval;
            }
            let report = trainer.evaluate(cfg.eval_episodes, cfg.eval_epsilon, false)?;
            log::info!(
                "seed {seed}: {} steps, eval return {:.3} ± {:.3}",
                trainer.env_steps,
                report.mean(),
                report.sd()
            );
            write_eval(&mut evals, &trainer, &report)?;
            metrics.flush().map_err(|e| Error::io(&metrics_path, e))?;
        }
        if cfg.checkpoint_interval > 0 && trainer.episodes % cfg.checkpoint_interval == 0 {
            let path = dir.join(CHECKPOINT_DIR).join(format!("episode_{}.ckpt", trainer.episodes));
            Checkpoint::from_learner(&trainer.learner, seed, trainer.episodes, trainer.env_steps).save(&path)?;
        }
    }
    metrics.flush().map_err(|e| Error::io(&metrics_path, e))?;

    let report = trainer.evaluate(cfg.final_eval_episodes, cfg.eval_epsilon, true)?;
    write_eval(&mut evals, &trainer, &report)?;
    write_traces(&dir.join(TRACES_FILE), &report.traces)?;
    Checkpoint::from_learner(&trainer.learner, seed, trainer.episodes, trainer.env_steps)
        .save(&dir.join(FINAL_CHECKPOINT))?;
    let summary = RunSummary {
        seed,
        ablation: cfg.ablation.tag().to_string(),
        episodes: trainer.episodes,
        env_steps: trainer.env_steps,
        final_return_mean: report.mean(),
        final_return_sd: report.sd(),
        final_returns: report.returns.clone(),
    };
    let summary_path = dir.join(SUMMARY_FILE);
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)?).map_err(|e| Error::io(&summary_path, e))?;
    Ok(summary)
}

/// Trains every seed of `cfg` under `cfg.out`. Seeds run one after another
/// in deterministic mode and on separate threads otherwise.
pub fn train_run(cfg: &RunConfig) -> Result<Vec<RunSummary>> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let root_config = cfg.out.join(CONFIG_FILE);
    fs::write(&root_config, cfg.snapshot()).map_err(|e| Error::io(&root_config, e))?;
    if cfg.deterministic || cfg.seeds.len() == 1 {
        return cfg
            .seeds
            .iter()
            .map(|&s| train_seed(cfg, s, &seed_dir(&cfg.out, s), |_| {}))
            .collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .seeds
            .iter()
            .map(|&s| scope.spawn(move || train_seed(cfg, s, &seed_dir(&cfg.out, s), |_| {})))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Precondition("training thread panicked".into()))))
            .collect()
    })
}

/// Per-seed summaries written by a finished run.
pub fn read_summary(dir: &Path) -> Result<RunSummary> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}
