//! Training data from progressively built graphs along reference paths, and
//! a two-phase AdamW training loop.

use super::gat::{GatParams, GraphInput, EDGE_FEATURES, HEADS, HIDDEN, MLP_HIDDEN, NODE_FEATURES, PARAM_COUNT};
use super::GoalDescriptor;
use crate::env::{DistanceField, EpisodeSpec, FloorPlan};
use crate::geom::Point;
use crate::seed;
use crate::waypoint::{select_waypoints, Waypoint, DEFAULT_MAX_WAYPOINTS};
use crate::worldmodel::{EnvGraph, NodeId, NodeStatus, Percept, SceneSynthesizer, WorldOracle};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;
/// Arc length between consecutive reference waypoints.
const PATH_SPACING_M: f64 = 2.0;

/// One graph snapshot with ground-truth distance labels per node.
#[derive(Clone, Debug)]
pub struct TrainingSample {
    pub episode_id: String,
    pub input: GraphInput,
    pub labels: Vec<f64>,
}

/// Shortest grid path from `from` to the source of `field` (the goal), as
/// cell centres, by steepest descent over legal 8-connected moves.
pub fn reference_path(plan: &FloorPlan, field: &DistanceField, from: Point) -> Option<Vec<Point>> {
    let (mut x, mut y) = plan.cell_of(from)?;
    let mut d = field.distance_cell(x, y)?;
    let mut path = vec![plan.cell_center(x, y)];
    while d > 0.0 {
        let mut best: Option<(usize, usize, f64)> = None;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if (dx == 0 && dy == 0) || plan.is_occupied(nx, ny) {
                    continue;
                }
                if dx != 0
                    && dy != 0
                    && (plan.is_occupied(x as i64 + dx, y as i64) || plan.is_occupied(x as i64, y as i64 + dy))
                {
                    continue;
                }
                let Some(nd) = field.distance_cell(nx as usize, ny as usize) else { continue };
                if nd < d && best.is_none_or(|(_, _, bd)| nd < bd) {
                    best = Some((nx as usize, ny as usize, nd));
                }
            }
        }
        let (nx, ny, nd) = best?;
        (x, y, d) = (nx, ny, nd);
        path.push(plan.cell_center(x, y));
    }
    Some(path)
}

/// Points along `path` spaced roughly `spacing` apart in arc length; the
/// first and last points are always kept.
fn subsample(path: &[Point], spacing: f64) -> Vec<Point> {
    let mut out = vec![path[0]];
    let mut acc = 0.0;
    for w in path.windows(2) {
        acc += w[0].distance(w[1]);
        if acc >= spacing {
            out.push(w[1]);
            acc = 0.0;
        }
    }
    let last = *path.last().expect("non-empty path");
    if *out.last().expect("non-empty") != last {
        out.push(last);
    }
    out
}

/// Builds graphs along each episode's reference path. Snapshot `l` adds the
/// `l`-th path waypoint and up to five random waypoints detected there.
/// Every non-start node independently carries a synthesized rather than a
/// real observation with probability `p_replace`.
///
/// Graph layout depends only on `seed`, not on `p_replace`, so datasets
/// built with different rates share their geometry.
pub fn build_training_set(
    plan: &FloorPlan,
    episodes: &[EpisodeSpec],
    synth: &SceneSynthesizer,
    p_replace: f64,
    seed: u64,
) -> Result<Vec<TrainingSample>> {
    if !(0.0..=1.0).contains(&p_replace) {
        return Err(Error::ParameterOutOfRange(format!("p_replace {p_replace} outside [0, 1]")));
    }
    let mut out = Vec::new();
    for ep in episodes {
        let origin = ep.start.position();
        let field = DistanceField::from_source(plan, ep.goal);
        let Some(path) = reference_path(plan, &field, origin) else { continue };
        let goal = GoalDescriptor::new(ep.goal - origin)?;
        let oracle = WorldOracle::new(plan, origin);
        let ep_key = seed::str_key(&ep.episode_id);
        let mut layout_rng = seed::rng(seed, &[ep_key, 1]);
        let mut replace_rng = seed::rng(seed, &[ep_key, 2]);
        let label = |p: Point| field.distance_at(origin + p);

        let mut g = EnvGraph::new(oracle.scan(Point::ORIGIN));
        let mut prev = g.start();
        for (l, wp) in subsample(&path, PATH_SPACING_M).into_iter().enumerate() {
            let p = wp - origin;
            if l > 0 {
                let replace = replace_rng.random::<f64>() < p_replace;
                prev = insert(&mut g, prev, p, &oracle, synth, replace)?;
            }
            let anchor = g.node(prev)?.clone();
            let mut candidates =
                select_waypoints(&predict_real(&oracle, anchor.position), anchor.position, DEFAULT_MAX_WAYPOINTS);
            candidates.shuffle(&mut layout_rng);
            let keep = layout_rng.random_range(0..=candidates.len());
            for c in candidates.into_iter().take(keep) {
                let replace = replace_rng.random::<f64>() < p_replace;
                if label(c.position).is_some() {
                    insert(&mut g, prev, c.position, &oracle, synth, replace)?;
                }
            }
            let labels: Option<Vec<f64>> = g.nodes().iter().map(|n| label(n.position)).collect();
            let Some(labels) = labels else { continue };
            out.push(TrainingSample {
                episode_id: ep.episode_id.clone(),
                input: GraphInput::from_graph(&g, goal),
                labels,
            });
        }
    }
    Ok(out)
}

fn predict_real(oracle: &WorldOracle<'_>, p: Point) -> crate::waypoint::WaypointHeatmap {
    crate::waypoint::predict_heatmap(&oracle.scan(p))
}

fn insert(
    g: &mut EnvGraph,
    from: NodeId,
    p: Point,
    oracle: &WorldOracle<'_>,
    synth: &SceneSynthesizer,
    replace: bool,
) -> Result<NodeId> {
    let source = g.node(from)?.clone();
    let percept = if replace && source.position.distance(p) > 0.0 {
        synth.synthesize(oracle, g, &source, p)?
    } else {
        Percept { observation: oracle.scan(p), synthesis_depth: 1 }
    };
    let wp = Waypoint { position: p, angle_bin: 0, dist_bin: 0, score: 1.0 };
    Ok(g.add_waypoint(from, &wp, percept, NodeStatus::Frontier)?.id())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    /// Epochs on real observations only.
    pub epochs_real: usize,
    /// Fine-tuning epochs on graphs with synthesized observations.
    pub epochs_mixed: usize,
    pub weight_decay: f64,
    /// Global gradient-norm clip.
    pub grad_clip: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 2e-3,
            batch: 16,
            epochs_real: 20,
            epochs_mixed: 20,
            weight_decay: 0.01,
            grad_clip: 5.0,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean squared error over nodes before any update, on the real set.
    pub initial_mse: f64,
    /// Mean squared error per epoch, accumulated during the epoch.
    pub epoch_mse: Vec<f64>,
    pub mean_label: f64,
}

struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    fn new(n: usize) -> Self {
        AdamW { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let update = (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + 1e-8);
            theta[i] -= cfg.lr * (update + cfg.weight_decay * theta[i]);
        }
    }
}

fn node_count(samples: &[TrainingSample]) -> usize {
    samples.iter().map(|s| s.labels.len()).sum()
}

/// Mean of all labels in the set.
pub fn mean_label(samples: &[TrainingSample]) -> f64 {
    let n = node_count(samples);
    samples.iter().flat_map(|s| &s.labels).sum::<f64>() / n.max(1) as f64
}

/// Node-level RMSE of the network on `samples`.
pub fn evaluate_rmse(params: &GatParams, samples: &[TrainingSample]) -> f64 {
    let n = node_count(samples).max(1) as f64;
    let sse: f64 = samples.iter().map(|s| params.loss(&s.input, &s.labels, 1.0)).sum();
    (sse / n).sqrt()
}

/// RMSE of the constant predictor `mean`.
pub fn mean_label_rmse(mean: f64, samples: &[TrainingSample]) -> f64 {
    let n = node_count(samples).max(1) as f64;
    let sse: f64 = samples.iter().flat_map(|s| &s.labels).map(|y| (y - mean) * (y - mean)).sum();
    (sse / n).sqrt()
}

/// Trains on `real` for `epochs_real` epochs, then on `mixed` for
/// `epochs_mixed`. Deterministic per `cfg.seed`.
pub fn train(real: &[TrainingSample], mixed: &[TrainingSample], cfg: &TrainConfig) -> Result<(GatParams, TrainReport)> {
    if real.is_empty() || (cfg.epochs_mixed > 0 && mixed.is_empty()) {
        return Err(Error::EmptyDataset);
    }
    if cfg.batch == 0 || !(cfg.lr > 0.0) {
        return Err(Error::ParameterOutOfRange("batch and lr must be positive".into()));
    }
    let mean = mean_label(real);
    let mut params = GatParams::init(cfg.seed, mean);
    let initial_mse = evaluate_rmse(&params, real).powi(2);
    let mut opt = AdamW::new(PARAM_COUNT);
    let mut grad = vec![0.0; PARAM_COUNT];
    let mut epoch_mse = Vec::new();
    let phases = [(real, cfg.epochs_real), (mixed, cfg.epochs_mixed)];
    let mut epoch = 0;
    for (data, epochs) in phases {
        for _ in 0..epochs {
            let mut order: Vec<usize> = (0..data.len()).collect();
            order.shuffle(&mut seed::rng(cfg.seed, &[0x7368_7566, epoch as u64]));
            let mut sse = 0.0;
            for chunk in order.chunks(cfg.batch) {
                let nodes: usize = chunk.iter().map(|&i| data[i].labels.len()).sum();
                let w = 1.0 / nodes.max(1) as f64;
                grad.iter_mut().for_each(|g| *g = 0.0);
                for &i in chunk {
                    sse += params.loss_and_grad(&data[i].input, &data[i].labels, w, &mut grad) * nodes as f64;
                }
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if !norm.is_finite() {
                    return Err(Error::Divergence { epoch });
                }
                if norm > cfg.grad_clip {
                    let scale = cfg.grad_clip / norm;
                    grad.iter_mut().for_each(|g| *g *= scale);
                }
                opt.step(params.as_mut_slice(), &grad, cfg);
            }
            let mse = sse / node_count(data).max(1) as f64;
            if !mse.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            epoch_mse.push(mse);
            epoch += 1;
        }
    }
    Ok((params, TrainReport { initial_mse, epoch_mse, mean_label: mean }))
}

/// Versioned checkpoint with a shape header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub heads: usize,
    pub hidden: usize,
    pub mlp_hidden: usize,
    pub node_features: usize,
    pub edge_features: usize,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(params: &GatParams) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            heads: HEADS,
            hidden: HIDDEN,
            mlp_hidden: MLP_HIDDEN,
            node_features: NODE_FEATURES,
            edge_features: EDGE_FEATURES,
            params: params.as_slice().to_vec(),
        }
    }

    pub fn into_params(self) -> Result<GatParams> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Version { found: self.version, expected: CHECKPOINT_VERSION });
        }
        let shape = (self.heads, self.hidden, self.mlp_hidden, self.node_features, self.edge_features);
        if shape != (HEADS, HIDDEN, MLP_HIDDEN, NODE_FEATURES, EDGE_FEATURES) {
            return Err(Error::Malformed(format!("checkpoint shape {shape:?} does not match this build")));
        }
        GatParams::from_vec(self.params)
    }
}

pub fn save_checkpoint(params: &GatParams, path: &Path) -> Result<()> {
    let text = serde_json::to_string(&Checkpoint::new(params))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<GatParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str::<Checkpoint>(&text)?.into_params()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_floorplan, geodesic_distance, sample_episode, GenParams};
    use crate::worldmodel::SynthesizerKind;

    fn fixture() -> (FloorPlan, Vec<EpisodeSpec>) {
        let plan = generate_floorplan(21, &GenParams::default()).unwrap();
        let eps = (0..6).map(|s| sample_episode(&plan, s).unwrap()).collect();
        (plan, eps)
    }

    #[test]
    fn reference_path_is_shortest() {
        let (plan, eps) = fixture();
        for ep in &eps {
            let field = DistanceField::from_source(&plan, ep.goal);
            let path = reference_path(&plan, &field, ep.start.position()).unwrap();
            let len: f64 = path.windows(2).map(|w| w[0].distance(w[1])).sum();
            assert!((len - ep.geodesic_ref).abs() < 1e-6, "{len} vs {}", ep.geodesic_ref);
            assert_eq!(*path.last().unwrap(), ep.goal);
        }
    }

    #[test]
    fn snapshots_grow_and_labels_are_geodesic() {
        let (plan, eps) = fixture();
        let synth = SceneSynthesizer::new(SynthesizerKind::Perfect, 0);
        let set = build_training_set(&plan, &eps[..1], &synth, 0.0, 3).unwrap();
        let field = DistanceField::from_source(&plan, eps[0].goal);
        let path = reference_path(&plan, &field, eps[0].start.position()).unwrap();
        assert_eq!(set.len(), subsample(&path, PATH_SPACING_M).len());
        for w in set.windows(2) {
            assert!(w[1].labels.len() >= w[0].labels.len());
        }
        // The last snapshot contains a node at the goal.
        assert!(set.last().unwrap().labels.contains(&0.0));
        let origin = eps[0].start.position();
        // Oracle: recompute a few labels from scratch with pairwise geodesics.
        let first = &set[0];
        assert!((first.labels[0] - geodesic_distance(&plan, origin, eps[0].goal).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn zero_replacement_keeps_real_scans() {
        let (plan, eps) = fixture();
        let synth = SceneSynthesizer::new(SynthesizerKind::Noisy { sigma0: 0.5 }, 0);
        let real = build_training_set(&plan, &eps[..2], &synth, 0.0, 3).unwrap();
        let perfect =
            build_training_set(&plan, &eps[..2], &SceneSynthesizer::new(SynthesizerKind::Perfect, 0), 1.0, 3).unwrap();
        assert_eq!(real.len(), perfect.len());
        for (a, b) in real.iter().zip(&perfect) {
            assert_eq!(a.input, b.input);
        }
        let noisy = build_training_set(&plan, &eps[..2], &synth, 1.0, 3).unwrap();
        assert!(real.iter().zip(&noisy).any(|(a, b)| a.input != b.input));
    }

    #[test]
    fn training_lowers_loss_and_is_deterministic() {
        let (plan, eps) = fixture();
        let synth = SceneSynthesizer::new(SynthesizerKind::Noisy { sigma0: 0.1 }, 0);
        let real = build_training_set(&plan, &eps, &synth, 0.0, 1).unwrap();
        let mixed = build_training_set(&plan, &eps, &synth, 0.3, 1).unwrap();
        let cfg = TrainConfig { lr: 1e-3, epochs_real: 3, epochs_mixed: 2, ..TrainConfig::default() };
        let (p1, report) = train(&real, &mixed, &cfg).unwrap();
        let (p2, _) = train(&real, &mixed, &cfg).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(report.epoch_mse.len(), 5);
        assert!(evaluate_rmse(&p1, &real).powi(2) < report.initial_mse);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let p = GatParams::init(4, 7.5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        save_checkpoint(&p, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert!(p.as_slice().iter().zip(back.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn empty_dataset_errors() {
        assert!(matches!(train(&[], &[], &TrainConfig::default()), Err(Error::EmptyDataset)));
    }
}
