use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use divshare::checkpoint::Checkpoint;
use divshare::envsim::{write_traces, PacMen};
use divshare::learner::{evaluate, Ablation};
use divshare::rng::{SeedTree, Stream};
use divshare::run::{self, RunConfig};

mod analyze;

#[derive(Parser)]
#[command(name = "divshare", version, about = "Train, evaluate and analyze diversity-regularized shared-parameter agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run per seed and write metrics, checkpoints and traces.
    #[command(after_help = config_help())]
    Train(TrainArgs),
    /// Roll out a checkpoint and report its mean and SD return.
    Eval(EvalArgs),
    /// Heatmaps, SD-ratio report and learning curve for a finished run.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set ablation=no_l1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Comma-separated seeds; same as `--set seed=...`.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    ablation: Option<Ablation>,
    /// Episodes in the final evaluation.
    #[arg(long)]
    eval_episodes: Option<usize>,
    /// Force single-threaded runs with a zero wall_clock column.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct EvalArgs {
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 100)]
    eval_episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use ε = 0.05 instead of greedy actions.
    #[arg(long)]
    explore: bool,
    /// Where to write traces; defaults to `traces.jsonl` next to the checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// A run directory (with seed_* subdirectories) or one seed's directory.
    run_dir: PathBuf,
    /// Output directory; defaults to `<run_dir>/analysis`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn config_help() -> String {
    format!("Config keys and defaults:\n{}", RunConfig::documented_defaults())
}

/// Errors that map to exit code 1.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    UsageError(e.to_string()).into()
}

fn build_config(args: &TrainArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path).map_err(usage)?,
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        cfg.apply_override(o).map_err(usage)?;
    }
    if let Some(seed) = &args.seed {
        cfg.set("seed", seed).map_err(|e| usage(format!("--seed: {e}")))?;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(a) = args.ablation {
        cfg.ablation = a;
    }
    if let Some(n) = args.eval_episodes {
        cfg.final_eval_episodes = n;
    }
    if args.deterministic {
        cfg.deterministic = true;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn train(args: TrainArgs) -> anyhow::Result<()> {
    let cfg = build_config(&args)?;
    let summaries = run::train_run(&cfg)?;
    for s in &summaries {
        println!(
            "seed {}: {} episodes, {} env steps, final return {:.3} ± {:.3}",
            s.seed, s.episodes, s.env_steps, s.final_return_mean, s.final_return_sd
        );
    }
    Ok(())
}

fn eval(args: EvalArgs) -> anyhow::Result<()> {
    if args.eval_episodes == 0 {
        return Err(usage("--eval-episodes must be at least 1"));
    }
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let learner = ckpt.to_learner()?;
    let epsilon = if args.explore { 0.05 } else { 0.0 };
    let mut rng = SeedTree::new(args.seed).stream(Stream::Evaluation);
    let report = evaluate(&mut PacMen::new(), &learner, args.eval_episodes, epsilon, true, &mut rng)?;
    let out = args.out.unwrap_or_else(|| {
        args.checkpoint.parent().unwrap_or(Path::new(".")).join(run::TRACES_FILE)
    });
    write_traces(&out, &report.traces)?;
    println!(
        "{} episodes, epsilon {epsilon}: return {:.4} ± {:.4}",
        report.returns.len(),
        report.mean(),
        report.sd()
    );
    println!("traces: {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Analyze(a) => analyze::run(&a.run_dir, a.out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
