//! Command-line front end: floor-plan generation, distance-function
//! training, single episodes, benchmark suites and search-tree export.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use wmnav::agent::{run_episode, EpisodeConfig, EpisodeResult};
use wmnav::distfn::{load_checkpoint, save_checkpoint, DistanceEstimator, EstimatorKind};
use wmnav::env::io::EnvDocument;
use wmnav::env::{generate_floorplan, sample_episode, EpisodeSpec, GenParams};
use wmnav::harness::{compute_metrics, run_suite, train_distance, write_tree, BenchmarkConfig, Metrics, TrainingSetup};

#[derive(Parser)]
#[command(name = "wmnav", version, about = "Mental planning over a world model for 2D navigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a floor plan and sample episodes on it.
    GenEnv {
        #[arg(long)]
        seed: u64,
        /// JSON file with generator parameters.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        /// Episode `i` is sampled with seed `episode_seed + i`.
        #[arg(long, default_value_t = 1000)]
        episode_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the distance function and write a checkpoint.
    TrainDist {
        /// JSON file with the training setup.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Training episodes per plan, overriding the setup.
        #[arg(long)]
        episodes_per_plan: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the training report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run one episode and write the full result.
    Run {
        #[arg(long)]
        env: PathBuf,
        /// Episode id or index within the env file.
        #[arg(long)]
        episode: String,
        /// JSON run config: episode settings plus `estimator` and `checkpoint`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a benchmark suite and write the CSV and JSON reports.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write the search tree of one decision as a Graphviz file.
    ExportTree {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        decision: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Settings of a single `run`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct RunConfig {
    #[serde(flatten)]
    episode: EpisodeConfig,
    #[serde(default = "default_estimator")]
    estimator: EstimatorKind,
    #[serde(default)]
    checkpoint: Option<PathBuf>,
}

fn default_estimator() -> EstimatorKind {
    EstimatorKind::Oracle
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { episode: EpisodeConfig::default(), estimator: default_estimator(), checkpoint: None }
    }
}

#[derive(Serialize)]
struct TrainSummary {
    train_episodes: usize,
    train_snapshots: usize,
    heldout_rmse: f64,
    baseline_rmse: f64,
    ratio: f64,
    initial_mse: f64,
    epoch_mse: Vec<f64>,
    seconds: f64,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    episode_id: &'a str,
    termination: wmnav::agent::Termination,
    #[serde(flatten)]
    metrics: Metrics,
    plan_steps: usize,
    invariant_violations: usize,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn gen_env(seed: u64, params: Option<&Path>, episodes: usize, episode_seed: u64, out: &Path) -> Result<()> {
    let params: GenParams = params.map(read_json).transpose()?.unwrap_or_default();
    let plan = generate_floorplan(seed, &params)?;
    let specs =
        (0..episodes as u64).map(|i| sample_episode(&plan, episode_seed + i)).collect::<wmnav::Result<Vec<_>>>()?;
    EnvDocument::new(plan, specs).save(out)?;
    println!("wrote {} with {episodes} episodes", out.display());
    Ok(())
}

fn train_dist(
    config: Option<&Path>,
    episodes_per_plan: Option<usize>,
    out: &Path,
    report: Option<&Path>,
) -> Result<()> {
    let mut setup: TrainingSetup = config.map(read_json).transpose()?.unwrap_or_default();
    if let Some(n) = episodes_per_plan {
        setup.episodes_per_plan = n;
    }
    let outcome = train_distance(&setup)?;
    save_checkpoint(&outcome.params, out)?;
    let summary = TrainSummary {
        train_episodes: outcome.train_episodes,
        train_snapshots: outcome.train_snapshots,
        heldout_rmse: outcome.heldout_rmse,
        baseline_rmse: outcome.baseline_rmse,
        ratio: outcome.heldout_rmse / outcome.baseline_rmse,
        initial_mse: outcome.report.initial_mse,
        epoch_mse: outcome.report.epoch_mse.clone(),
        seconds: outcome.seconds,
    };
    if let Some(path) = report {
        write_text(path, &serde_json::to_string_pretty(&summary)?)?;
    }
    println!(
        "trained on {} episodes: held-out RMSE {:.3} m, mean-label baseline {:.3} m, {:.1} s",
        summary.train_episodes, summary.heldout_rmse, summary.baseline_rmse, summary.seconds
    );
    Ok(())
}

fn find_episode<'a>(doc: &'a EnvDocument, key: &str) -> Result<&'a EpisodeSpec> {
    if let Some(spec) = doc.episodes.iter().find(|e| e.episode_id == key) {
        return Ok(spec);
    }
    match key.parse::<usize>().ok().and_then(|i| doc.episodes.get(i)) {
        Some(spec) => Ok(spec),
        None => bail!("no episode {key:?} among {} episodes", doc.episodes.len()),
    }
}

fn run(env: &Path, episode: &str, config: Option<&Path>, checkpoint: Option<&Path>, out: &Path) -> Result<()> {
    let doc = EnvDocument::load(env)?;
    let spec = find_episode(&doc, episode)?;
    let cfg: RunConfig = config.map(read_json).transpose()?.unwrap_or_default();
    let checkpoint = checkpoint.map(Path::to_path_buf).or(cfg.checkpoint.clone());
    let model = match (cfg.estimator.needs_model(), checkpoint) {
        (false, _) => None,
        (true, Some(path)) => Some(Arc::new(load_checkpoint(&path)?)),
        (true, None) => bail!("estimator {} needs --checkpoint", cfg.estimator.label()),
    };
    let estimator = DistanceEstimator::new(cfg.estimator, model)?;
    let result = run_episode(&doc.plan, spec, &cfg.episode, &estimator)?;
    write_text(out, &serde_json::to_string(&result)?)?;
    let summary = RunSummary {
        episode_id: &result.episode_id,
        termination: result.termination,
        metrics: compute_metrics(&result, spec, &doc.plan),
        plan_steps: result.plan_steps,
        invariant_violations: result.invariant_violations,
    };
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

fn bench(config: &Path, csv: Option<PathBuf>, report: Option<PathBuf>, checkpoint: Option<PathBuf>) -> Result<()> {
    let mut cfg = BenchmarkConfig::load(config)?;
    cfg.csv = csv.or(cfg.csv);
    cfg.report = report.or(cfg.report);
    cfg.checkpoint = checkpoint.or(cfg.checkpoint);
    if cfg.csv.is_none() && cfg.report.is_none() {
        bail!("bench needs --csv or --report (or csv/report in the config)");
    }
    let suite = run_suite(&cfg)?;
    suite.write(cfg.csv.as_deref(), cfg.report.as_deref())?;
    println!("{:<24} {:>8} {:>7} {:>7} {:>7} {:>7}", "variant", "episodes", "SR", "OR", "SPL", "NE");
    for v in &suite.variants {
        println!(
            "{:<24} {:>8} {:>7.1} {:>7.1} {:>7.3} {:>7.2}",
            v.variant,
            v.episodes,
            v.sr_points(),
            100.0 * v.mean.or,
            v.mean.spl,
            v.mean.ne
        );
    }
    Ok(())
}

fn export_tree(result: &Path, decision: usize, out: &Path) -> Result<()> {
    let result: EpisodeResult = read_json(result)?;
    write_tree(&result, decision, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenEnv { seed, params, episodes, episode_seed, out } => {
            gen_env(seed, params.as_deref(), episodes, episode_seed, &out)
        }
        Command::TrainDist { config, episodes_per_plan, out, report } => {
            train_dist(config.as_deref(), episodes_per_plan, &out, report.as_deref())
        }
        Command::Run { env, episode, config, checkpoint, out } => {
            run(&env, &episode, config.as_deref(), checkpoint.as_deref(), &out)
        }
        Command::Bench { config, csv, report, checkpoint } => bench(&config, csv, report, checkpoint),
        Command::ExportTree { result, decision, out } => export_tree(&result, decision, &out),
    }
}
