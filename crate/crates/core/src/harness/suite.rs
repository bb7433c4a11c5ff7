use super::metrics::{compute_metrics, Metrics};
use crate::agent::{run_episode, EpisodeConfig, EpisodeResult, Termination};
use crate::distfn::{load_checkpoint, DistanceEstimator, EstimatorKind, GatParams};
use crate::env::{generate_floorplan, sample_episode, EpisodeSpec, FloorPlan, GenParams};
use crate::planner::nav::ActionScope;
use crate::planner::PlannerConfig;
use crate::worldmodel::SynthesizerKind;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// One cell of the variant grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub estimator: EstimatorKind,
    pub synthesizer: SynthesizerKind,
    /// `iterations = 0` or `horizon = 0` selects greedily without search.
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub action_scope: ActionScope,
}

impl Variant {
    pub fn planning(
        name: &str,
        estimator: EstimatorKind,
        synthesizer: SynthesizerKind,
        horizon: usize,
        iterations: usize,
    ) -> Self {
        Variant {
            name: name.into(),
            estimator,
            synthesizer,
            planner: PlannerConfig { horizon, iterations, ..PlannerConfig::default() },
            action_scope: ActionScope::default(),
        }
    }

    pub fn greedy(name: &str, estimator: EstimatorKind, synthesizer: SynthesizerKind) -> Self {
        Variant::planning(name, estimator, synthesizer, 0, 0)
    }
}

fn default_plan_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_episodes_per_plan() -> usize {
    20
}

fn default_episode_seed() -> u64 {
    1000
}

fn default_seen_plans() -> usize {
    5
}

fn default_max_steps() -> usize {
    500
}

fn default_max_rounds() -> usize {
    50
}

/// A benchmark suite: every variant runs on the same episode set with the
/// same seeds. Plans `plan_seeds[..seen_plans]` are the ones the learned
/// estimator is trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub suite: String,
    #[serde(default = "default_plan_seeds")]
    pub plan_seeds: Vec<u64>,
    #[serde(default)]
    pub gen: GenParams,
    #[serde(default = "default_episodes_per_plan")]
    pub episodes_per_plan: usize,
    /// Episode `i` on each plan is sampled with seed `episode_seed + i`.
    #[serde(default = "default_episode_seed")]
    pub episode_seed: u64,
    #[serde(default = "default_seen_plans")]
    pub seen_plans: usize,
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_steps")]
    pub max_low_level_steps: usize,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    /// Distance-function checkpoint, needed by learned and mixture variants.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// Fill the wall-time column. Timings differ between runs, so reports
    /// are byte-identical only with this off.
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub report: Option<PathBuf>,
}

impl BenchmarkConfig {
    /// Ten plans, twenty episodes each, the first five plans seen.
    pub fn standard(suite: &str, variants: Vec<Variant>) -> Self {
        BenchmarkConfig {
            suite: suite.into(),
            plan_seeds: default_plan_seeds(),
            gen: GenParams::default(),
            episodes_per_plan: default_episodes_per_plan(),
            episode_seed: default_episode_seed(),
            seen_plans: default_seen_plans(),
            variants,
            seed: 0,
            max_low_level_steps: default_max_steps(),
            max_rounds: default_max_rounds(),
            checkpoint: None,
            record_timing: false,
            csv: None,
            report: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes_per_plan == 0 || self.plan_seeds.is_empty() {
            return Err(Error::ParameterOutOfRange("a suite needs at least one episode".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::ParameterOutOfRange("a suite needs at least one variant".into()));
        }
        for v in &self.variants {
            self.episode_config(v).validate()?;
        }
        Ok(())
    }

    pub fn needs_model(&self) -> bool {
        self.variants.iter().any(|v| v.estimator.needs_model())
    }

    pub fn episode_config(&self, v: &Variant) -> EpisodeConfig {
        EpisodeConfig {
            max_low_level_steps: self.max_low_level_steps,
            max_rounds: self.max_rounds,
            planner: v.planner.clone(),
            synthesizer: v.synthesizer,
            seed: self.seed,
            action_scope: v.action_scope,
            record_trees: false,
            ..EpisodeConfig::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// The shared episode set of a suite.
#[derive(Clone, Debug)]
pub struct EpisodeSet {
    pub plans: Vec<FloorPlan>,
    /// `(index into plans, episode, seen)`.
    pub episodes: Vec<(usize, EpisodeSpec, bool)>,
}

impl EpisodeSet {
    pub fn build(cfg: &BenchmarkConfig) -> Result<Self> {
        let mut plans = Vec::new();
        let mut episodes = Vec::new();
        for (i, &ps) in cfg.plan_seeds.iter().enumerate() {
            let plan = generate_floorplan(ps, &cfg.gen)?;
            for e in 0..cfg.episodes_per_plan as u64 {
                episodes.push((i, sample_episode(&plan, cfg.episode_seed + e)?, i < cfg.seen_plans));
            }
            plans.push(plan);
        }
        Ok(EpisodeSet { plans, episodes })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub suite: String,
    pub variant: String,
    pub episode_id: String,
    pub seen: bool,
    pub geodesic_ref: f64,
    pub termination: Termination,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub plan_steps: usize,
    pub s_per_step: Option<f64>,
    pub invariant_violations: usize,
    pub invariant_checks: usize,
}

/// The CSV projection of a row.
#[derive(Serialize)]
struct CsvRow<'a> {
    suite: &'a str,
    variant: &'a str,
    episode_id: &'a str,
    #[serde(rename = "NE")]
    ne: f64,
    #[serde(rename = "TL")]
    tl: f64,
    #[serde(rename = "SR")]
    sr: f64,
    #[serde(rename = "OR")]
    or: f64,
    #[serde(rename = "SPL")]
    spl: f64,
    plan_steps: usize,
    s_per_step: Option<f64>,
}

/// Means over one variant's rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub episodes: usize,
    #[serde(flatten)]
    pub mean: Metrics,
    pub plan_steps: f64,
    /// Total planning time over total planning steps.
    pub s_per_step: Option<f64>,
    pub invariant_violations: usize,
    pub invariant_checks: usize,
}

impl VariantSummary {
    pub fn of(variant: &str, rows: &[&EpisodeRow]) -> Self {
        let n = rows.len().max(1) as f64;
        let mean = |f: fn(&Metrics) -> f64| rows.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
        let steps: usize = rows.iter().map(|r| r.plan_steps).sum();
        let s_per_step = rows.iter().map(|r| r.s_per_step.map(|s| s * r.plan_steps as f64)).sum::<Option<f64>>();
        VariantSummary {
            variant: variant.into(),
            episodes: rows.len(),
            mean: Metrics {
                ne: mean(|m| m.ne),
                tl: mean(|m| m.tl),
                sr: mean(|m| m.sr),
                or: mean(|m| m.or),
                spl: mean(|m| m.spl),
            },
            plan_steps: steps as f64 / n,
            s_per_step: s_per_step.map(|t| if steps == 0 { 0.0 } else { t / steps as f64 }),
            invariant_violations: rows.iter().map(|r| r.invariant_violations).sum(),
            invariant_checks: rows.iter().map(|r| r.invariant_checks).sum(),
        }
    }

    /// Success rate in points (percent).
    pub fn sr_points(&self) -> f64 {
        100.0 * self.mean.sr
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub variants: Vec<VariantSummary>,
    pub rows: Vec<EpisodeRow>,
}

impl SuiteReport {
    pub fn from_rows(suite: &str, order: &[String], rows: Vec<EpisodeRow>) -> Self {
        let variants = order
            .iter()
            .map(|name| VariantSummary::of(name, &rows.iter().filter(|r| &r.variant == name).collect::<Vec<_>>()))
            .collect();
        SuiteReport { suite: suite.into(), variants, rows }
    }

    pub fn variant(&self, name: &str) -> Option<&VariantSummary> {
        self.variants.iter().find(|v| v.variant == name)
    }

    pub fn rows_of<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a EpisodeRow> + 'a {
        self.rows.iter().filter(move |r| r.variant == name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(CsvRow {
                suite: &r.suite,
                variant: &r.variant,
                episode_id: &r.episode_id,
                ne: r.metrics.ne,
                tl: r.metrics.tl,
                sr: r.metrics.sr,
                or: r.metrics.or,
                spl: r.metrics.spl,
                plan_steps: r.plan_steps,
                s_per_step: r.s_per_step,
            })?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Malformed(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Malformed(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, csv: Option<&Path>, json: Option<&Path>) -> Result<()> {
        if let Some(p) = csv {
            std::fs::write(p, self.to_csv()?).map_err(|e| Error::io(p, e))?;
        }
        if let Some(p) = json {
            std::fs::write(p, self.to_json()?).map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    }
}

/// Runs `cfg`, loading the checkpoint it names when a variant needs one.
pub fn run_suite(cfg: &BenchmarkConfig) -> Result<SuiteReport> {
    let model = match (&cfg.checkpoint, cfg.needs_model()) {
        (_, false) => None,
        (Some(path), true) => Some(Arc::new(load_checkpoint(path)?)),
        (None, true) => return Err(Error::MissingCheckpoint),
    };
    run_suite_with(cfg, model)
}

/// Runs every variant over the shared episode set with an in-memory model.
pub fn run_suite_with(cfg: &BenchmarkConfig, model: Option<Arc<GatParams>>) -> Result<SuiteReport> {
    cfg.validate()?;
    let set = EpisodeSet::build(cfg)?;
    run_suite_on(cfg, &set, model)
}

pub fn run_suite_on(cfg: &BenchmarkConfig, set: &EpisodeSet, model: Option<Arc<GatParams>>) -> Result<SuiteReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for v in &cfg.variants {
        let m = if v.estimator.needs_model() { Some(model.clone().ok_or(Error::MissingCheckpoint)?) } else { None };
        let estimator = DistanceEstimator::new(v.estimator, m)?;
        let ecfg = cfg.episode_config(v);
        for (pi, spec, seen) in &set.episodes {
            let plan = &set.plans[*pi];
            let result = run_episode(plan, spec, &ecfg, &estimator)?;
            rows.push(row(cfg, v, spec, *seen, plan, &result));
        }
    }
    let order: Vec<String> = cfg.variants.iter().map(|v| v.name.clone()).collect();
    Ok(SuiteReport::from_rows(&cfg.suite, &order, rows))
}

fn row(
    cfg: &BenchmarkConfig,
    v: &Variant,
    spec: &EpisodeSpec,
    seen: bool,
    plan: &FloorPlan,
    r: &EpisodeResult,
) -> EpisodeRow {
    EpisodeRow {
        suite: cfg.suite.clone(),
        variant: v.name.clone(),
        episode_id: spec.episode_id.clone(),
        seen,
        geodesic_ref: spec.geodesic_ref,
        termination: r.termination,
        metrics: compute_metrics(r, spec, plan),
        plan_steps: r.plan_steps,
        s_per_step: cfg.record_timing.then(|| r.seconds_per_step()),
        invariant_violations: r.invariant_violations,
        invariant_checks: r.invariant_checks,
    }
}
