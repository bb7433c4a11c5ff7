use crate::distfn::{
    build_training_set, evaluate_rmse, mean_label_rmse, train, GatParams, TrainConfig, TrainReport, TrainingSample,
};
use crate::env::{generate_floorplan, sample_episode, GenParams};
use crate::worldmodel::{SceneSynthesizer, SynthesizerKind};
use crate::Result;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Where training graphs come from. Training and held-out episodes are
/// drawn from the same plans with disjoint seed ranges; both stay clear of
/// the benchmark range that starts at 1000.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSetup {
    pub plan_seeds: Vec<u64>,
    pub gen: GenParams,
    pub episodes_per_plan: usize,
    pub episode_seed: u64,
    pub heldout_per_plan: usize,
    pub heldout_seed: u64,
    /// Noise of the synthesizer used for the fine-tuning graphs.
    pub sigma0: f64,
    /// Share of synthesized observations in the fine-tuning graphs.
    pub p_replace: f64,
    pub train: TrainConfig,
}

impl Default for TrainingSetup {
    fn default() -> Self {
        TrainingSetup {
            plan_seeds: (0..5).collect(),
            gen: GenParams::default(),
            episodes_per_plan: 40,
            episode_seed: 0,
            heldout_per_plan: 10,
            heldout_seed: 100,
            sigma0: 0.1,
            p_replace: 0.3,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub params: GatParams,
    pub report: TrainReport,
    pub train_episodes: usize,
    pub train_snapshots: usize,
    pub heldout_rmse: f64,
    /// RMSE of always predicting the training mean label.
    pub baseline_rmse: f64,
    pub seconds: f64,
}

struct Sets {
    real: Vec<TrainingSample>,
    mixed: Vec<TrainingSample>,
    heldout: Vec<TrainingSample>,
    episodes: usize,
}

fn build_sets(setup: &TrainingSetup) -> Result<Sets> {
    let synth = SceneSynthesizer::new(SynthesizerKind::Noisy { sigma0: setup.sigma0 }, setup.train.seed);
    let mut sets = Sets { real: Vec::new(), mixed: Vec::new(), heldout: Vec::new(), episodes: 0 };
    for &ps in &setup.plan_seeds {
        let plan = generate_floorplan(ps, &setup.gen)?;
        let sample =
            |base: u64, n: usize| (0..n as u64).map(|e| sample_episode(&plan, base + e)).collect::<Result<Vec<_>>>();
        let eps = sample(setup.episode_seed, setup.episodes_per_plan)?;
        let held = sample(setup.heldout_seed, setup.heldout_per_plan)?;
        sets.real.extend(build_training_set(&plan, &eps, &synth, 0.0, 1)?);
        sets.mixed.extend(build_training_set(&plan, &eps, &synth, setup.p_replace, 1)?);
        sets.heldout.extend(build_training_set(&plan, &held, &synth, 0.0, 2)?);
        sets.episodes += eps.len();
    }
    Ok(sets)
}

/// Builds the datasets, trains the distance function and scores it on the
/// held-out snapshots.
pub fn train_distance(setup: &TrainingSetup) -> Result<TrainingOutcome> {
    let started = Instant::now();
    let sets = build_sets(setup)?;
    let (params, report) = train(&sets.real, &sets.mixed, &setup.train)?;
    let heldout_rmse = evaluate_rmse(&params, &sets.heldout);
    let baseline_rmse = mean_label_rmse(report.mean_label, &sets.heldout);
    Ok(TrainingOutcome {
        params,
        report,
        train_episodes: sets.episodes,
        train_snapshots: sets.real.len(),
        heldout_rmse,
        baseline_rmse,
        seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_learns_something() {
        let setup = TrainingSetup {
            plan_seeds: vec![0],
            episodes_per_plan: 6,
            heldout_per_plan: 3,
            train: TrainConfig { epochs_real: 3, epochs_mixed: 1, ..TrainConfig::default() },
            ..TrainingSetup::default()
        };
        let out = train_distance(&setup).unwrap();
        assert_eq!(out.train_episodes, 6);
        assert!(out.train_snapshots > 0);
        assert!(out.heldout_rmse.is_finite() && out.baseline_rmse > 0.0);
        let last = *out.report.epoch_mse.last().unwrap();
        assert!(last < out.report.initial_mse);
    }
}
