//! Distance-to-goal estimation over environment graphs: a learned graph
//! attention regressor, ground-truth oracles for ablations, and training.

mod gat;
mod train;

pub use gat::{
    edge_features, node_features, GatParams, GraphInput, Projection, EDGE_FEATURES, HEADS, HIDDEN, MLP_HIDDEN,
    NODE_FEATURES, PARAM_COUNT,
};
pub use train::{
    build_training_set, evaluate_rmse, load_checkpoint, mean_label_rmse, reference_path, save_checkpoint, train,
    Checkpoint, TrainConfig, TrainReport, TrainingSample, CHECKPOINT_VERSION,
};

use crate::env::DistanceField;
use crate::geom::Point;
use crate::seed;
use crate::worldmodel::EnvGraph;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;

/// Stand-in for unreachable or unknown distances.
pub const UNREACHABLE_DISTANCE: f64 = 100.0;

/// Goal displacement from the episode start, meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalDescriptor {
    pub dx: f64,
    pub dy: f64,
}

impl GoalDescriptor {
    pub fn new(displacement: Point) -> Result<Self> {
        if !displacement.is_finite() {
            return Err(Error::ParameterOutOfRange("goal displacement must be finite".into()));
        }
        Ok(GoalDescriptor { dx: displacement.x, dy: displacement.y })
    }

    pub fn point(&self) -> Point {
        Point::new(self.dx, self.dy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorKind {
    Learned,
    Oracle,
    /// Oracle plus Gaussian noise with std `sigma` meters, truncated at 0.
    NoisyOracle {
        sigma: f64,
    },
    /// Per node, the oracle value with probability `p_replace`, else learned.
    Mixture {
        p_replace: f64,
    },
}

impl EstimatorKind {
    pub fn needs_model(&self) -> bool {
        matches!(self, EstimatorKind::Learned | EstimatorKind::Mixture { .. })
    }

    pub fn label(&self) -> String {
        match self {
            EstimatorKind::Learned => "learned".into(),
            EstimatorKind::Oracle => "oracle".into(),
            EstimatorKind::NoisyOracle { sigma } => format!("noisy_oracle{sigma}"),
            EstimatorKind::Mixture { p_replace } => format!("mixture{p_replace}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DistanceEstimator {
    kind: EstimatorKind,
    model: Option<Arc<GatParams>>,
}

impl DistanceEstimator {
    pub fn new(kind: EstimatorKind, model: Option<Arc<GatParams>>) -> Result<Self> {
        match kind {
            EstimatorKind::Mixture { p_replace } if !(0.0..=1.0).contains(&p_replace) => {
                return Err(Error::ParameterOutOfRange(format!("p_replace {p_replace} outside [0, 1]")));
            }
            EstimatorKind::NoisyOracle { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                return Err(Error::ParameterOutOfRange(format!("sigma {sigma} must be finite and ≥ 0")));
            }
            _ => {}
        }
        if kind.needs_model() && model.is_none() {
            return Err(Error::MissingCheckpoint);
        }
        Ok(DistanceEstimator { kind, model })
    }

    pub fn oracle() -> Self {
        DistanceEstimator { kind: EstimatorKind::Oracle, model: None }
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn model(&self) -> Option<&Arc<GatParams>> {
        self.model.as_ref()
    }
}

/// Per-episode estimation context. Holds the ground-truth field around the
/// goal for the oracle variants and memoizes network evaluations, keyed by
/// node payload and neighbourhood, across the snapshots of one episode.
pub struct Scorer<'a> {
    estimator: &'a DistanceEstimator,
    field: &'a DistanceField,
    origin: Point,
    goal: GoalDescriptor,
    seed: u64,
    projections: RefCell<HashMap<u64, Rc<Projection>>>,
    outputs: RefCell<HashMap<u64, f64>>,
}

impl<'a> Scorer<'a> {
    /// `field` must hold distances from the goal; `origin` is the episode
    /// start in plan coordinates.
    pub fn new(
        estimator: &'a DistanceEstimator,
        field: &'a DistanceField,
        origin: Point,
        goal: GoalDescriptor,
        seed: u64,
    ) -> Self {
        Scorer {
            estimator,
            field,
            origin,
            goal,
            seed,
            projections: RefCell::new(HashMap::new()),
            outputs: RefCell::new(HashMap::new()),
        }
    }

    pub fn kind(&self) -> EstimatorKind {
        self.estimator.kind
    }

    /// Ground-truth geodesic distance from a graph-frame position to the goal.
    pub fn oracle(&self, p: Point) -> f64 {
        self.field.distance_at(self.origin + p).map_or(UNREACHABLE_DISTANCE, |d| d.min(UNREACHABLE_DISTANCE))
    }

    fn noisy_oracle(&self, p: Point, sigma: f64) -> f64 {
        let truth = self.oracle(p);
        if truth >= UNREACHABLE_DISTANCE || sigma == 0.0 {
            return truth;
        }
        let mut rng = seed::rng(self.seed, &[0x6e6f697379, p.x.to_bits(), p.y.to_bits()]);
        let noise = Normal::new(0.0, sigma).expect("valid sigma").sample(&mut rng);
        (truth + noise).max(0.0)
    }

    /// Whether the mixture estimator uses the oracle at `p`.
    pub fn mixture_replaces(&self, p: Point, p_replace: f64) -> bool {
        let mut rng = seed::rng(self.seed, &[0x6d6978, p.x.to_bits(), p.y.to_bits()]);
        rng.random::<f64>() < p_replace
    }

    /// Estimated distance to the goal for every node, indexed by node id.
    pub fn estimates(&self, g: &EnvGraph) -> Vec<f64> {
        match self.estimator.kind {
            EstimatorKind::Oracle => g.nodes().iter().map(|n| self.oracle(n.position)).collect(),
            EstimatorKind::NoisyOracle { sigma } => {
                g.nodes().iter().map(|n| self.noisy_oracle(n.position, sigma)).collect()
            }
            EstimatorKind::Learned => (0..g.len()).map(|v| self.learned(g, v)).collect(),
            EstimatorKind::Mixture { p_replace } => g
                .nodes()
                .iter()
                .map(|n| {
                    if self.mixture_replaces(n.position, p_replace) {
                        self.oracle(n.position)
                    } else {
                        self.learned(g, n.id.0)
                    }
                })
                .collect(),
        }
    }

    /// `D(s)`: the smallest estimate over all nodes of the snapshot.
    pub fn min_estimate(&self, g: &EnvGraph) -> f64 {
        min_distance(&self.estimates(g))
    }

    fn projection(&self, params: &GatParams, g: &EnvGraph, v: usize) -> (u64, Rc<Projection>) {
        let n = &g.nodes()[v];
        let key = seed::derive(n.view_key(), &[n.position.x.to_bits(), n.position.y.to_bits()]);
        let mut cache = self.projections.borrow_mut();
        let proj = cache
            .entry(key)
            .or_insert_with(|| Rc::new(params.project(&node_features(n.observation(), n.position, self.goal))))
            .clone();
        (key, proj)
    }

    fn learned(&self, g: &EnvGraph, v: usize) -> f64 {
        let params = self.estimator.model.as_ref().expect("checked at construction");
        let nbhd = gat::canonical_neighbors(g, v);
        let mut items = Vec::with_capacity(nbhd.len());
        let (own_key, own) = self.projection(params, g, v);
        let mut words = vec![own_key];
        for (u, e) in &nbhd {
            let (key, proj) = self.projection(params, g, *u);
            let feats = e.map(|e| edge_features(&e)).unwrap_or([0.0; EDGE_FEATURES]);
            words.push(key);
            words.extend(feats.iter().map(|f| f.to_bits()));
            items.push((proj, feats));
        }
        let key = seed::derive(0x6f7574, &words);
        if let Some(&d) = self.outputs.borrow().get(&key) {
            return d;
        }
        let nbrs: Vec<(&Projection, [f64; EDGE_FEATURES])> = items.iter().map(|(p, e)| (p.as_ref(), *e)).collect();
        let d = params.node_output(&own, &nbrs);
        self.outputs.borrow_mut().insert(key, d);
        d
    }
}

/// Minimum of a set of estimates; the sentinel when empty.
pub fn min_distance(estimates: &[f64]) -> f64 {
    estimates.iter().copied().fold(UNREACHABLE_DISTANCE, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{FloorPlan, Observation, DEFAULT_CELL_SIZE};
    use crate::waypoint::Waypoint;
    use crate::worldmodel::{NodeStatus, Percept};

    fn open_field() -> (FloorPlan, DistanceField) {
        let mut plan = FloorPlan::closed(200, 200, DEFAULT_CELL_SIZE);
        plan.carve_cells(1, 1, 199, 199);
        let field = DistanceField::from_source(&plan, Point::new(15.05, 10.05));
        (plan, field)
    }

    fn line_graph(obs: &[f64]) -> EnvGraph {
        let mut g = EnvGraph::new(Observation::uniform(obs[0]));
        let mut prev = g.start();
        for (i, r) in obs.iter().enumerate().skip(1) {
            let wp = Waypoint { position: Point::new(2.0 * i as f64, 0.0), angle_bin: 0, dist_bin: 7, score: 1.0 };
            prev = g
                .add_waypoint(
                    prev,
                    &wp,
                    Percept { observation: Observation::uniform(*r), synthesis_depth: 1 },
                    NodeStatus::Frontier,
                )
                .unwrap()
                .id();
        }
        g
    }

    #[test]
    fn oracle_zero_at_goal() {
        let (_, field) = open_field();
        let est = DistanceEstimator::oracle();
        let origin = Point::new(10.05, 10.05);
        let goal = GoalDescriptor::new(Point::new(5.0, 0.0)).unwrap();
        let s = Scorer::new(&est, &field, origin, goal, 0);
        assert_eq!(s.oracle(Point::new(5.0, 0.0)), 0.0);
        assert!((s.oracle(Point::ORIGIN) - 5.0).abs() < 1e-9);
        let g = line_graph(&[5.0, 5.0, 5.0, 5.0]);
        let est = s.estimates(&g);
        assert!((est[0] - 5.0).abs() < 1e-9);
        assert!((est[1] - 3.0).abs() < 1e-9);
        assert!((s.min_estimate(&g) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unreachable_is_sentinel() {
        let (_, field) = open_field();
        let est = DistanceEstimator::oracle();
        let s = Scorer::new(&est, &field, Point::new(10.05, 10.05), GoalDescriptor::new(Point::ORIGIN).unwrap(), 0);
        assert_eq!(s.oracle(Point::new(-50.0, 0.0)), UNREACHABLE_DISTANCE);
    }

    #[test]
    fn min_is_monotone() {
        assert_eq!(min_distance(&[4.2, 7.1]), 4.2);
        assert_eq!(min_distance(&[7.1]), 7.1);
        assert!(min_distance(&[4.2, 7.1, 9.0]) <= min_distance(&[4.2, 7.1]));
    }

    #[test]
    fn mixture_boundaries_and_frequency() {
        let (_, field) = open_field();
        let model = Arc::new(GatParams::init(0, 5.0));
        let goal = GoalDescriptor::new(Point::new(5.0, 0.0)).unwrap();
        let origin = Point::new(10.05, 10.05);
        let full = DistanceEstimator::new(EstimatorKind::Mixture { p_replace: 1.0 }, Some(model.clone())).unwrap();
        let s = Scorer::new(&full, &field, origin, goal, 3);
        let g = line_graph(&[5.0, 2.0, 3.0]);
        let oracle: Vec<f64> = g.nodes().iter().map(|n| s.oracle(n.position)).collect();
        assert_eq!(s.estimates(&g), oracle);

        let half = DistanceEstimator::new(EstimatorKind::Mixture { p_replace: 0.5 }, Some(model)).unwrap();
        let s = Scorer::new(&half, &field, origin, goal, 11);
        let hits = (0..10_000).filter(|i| s.mixture_replaces(Point::new(*i as f64 * 0.01, 0.5), 0.5)).count();
        let frac = hits as f64 / 10_000.0;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
    }

    #[test]
    fn noisy_oracle_is_truncated_and_stable() {
        let (_, field) = open_field();
        let est = DistanceEstimator::new(EstimatorKind::NoisyOracle { sigma: 5.0 }, None).unwrap();
        let s =
            Scorer::new(&est, &field, Point::new(10.05, 10.05), GoalDescriptor::new(Point::new(5.0, 0.0)).unwrap(), 1);
        let g = line_graph(&[5.0, 5.0, 5.0, 5.0]);
        let a = s.estimates(&g);
        assert_eq!(a, s.estimates(&g));
        assert!(a.iter().all(|d| *d >= 0.0));
    }

    #[test]
    fn learned_requires_model_and_valid_p() {
        assert!(matches!(DistanceEstimator::new(EstimatorKind::Learned, None), Err(Error::MissingCheckpoint)));
        let m = Arc::new(GatParams::init(0, 1.0));
        assert!(DistanceEstimator::new(EstimatorKind::Mixture { p_replace: 1.5 }, Some(m)).is_err());
    }

    #[test]
    fn cached_learned_matches_direct_forward() {
        let (_, field) = open_field();
        let model = Arc::new(GatParams::init(2, 6.0));
        let est = DistanceEstimator::new(EstimatorKind::Learned, Some(model.clone())).unwrap();
        let goal = GoalDescriptor::new(Point::new(5.0, 1.0)).unwrap();
        let s = Scorer::new(&est, &field, Point::new(10.05, 10.05), goal, 0);
        let g = line_graph(&[5.0, 2.0, 3.0, 1.0]);
        let direct = model.forward(&GraphInput::from_graph(&g, goal));
        assert_eq!(s.estimates(&g), direct);
        // Second pass hits the caches and must agree.
        assert_eq!(s.estimates(&g), direct);
    }

    #[test]
    fn permutation_equivariance() {
        // The same geometry inserted in two different orders.
        let goal = GoalDescriptor::new(Point::new(3.0, 2.0)).unwrap();
        let model = GatParams::init(9, 5.0);
        let pts = [Point::new(2.0, 0.0), Point::new(1.0, 1.5), Point::new(2.5, 2.0)];
        let rays = [4.0, 2.5, 3.5];
        let build = |order: &[usize]| {
            let mut g = EnvGraph::new(Observation::uniform(4.5));
            for &i in order {
                let wp = Waypoint { position: pts[i], angle_bin: 0, dist_bin: 0, score: 1.0 };
                g.add_waypoint(
                    g.start(),
                    &wp,
                    Percept { observation: Observation::uniform(rays[i]), synthesis_depth: 1 },
                    NodeStatus::Frontier,
                )
                .unwrap();
            }
            g
        };
        let a = build(&[0, 1, 2]);
        let b = build(&[2, 0, 1]);
        let out_a = model.forward(&GraphInput::from_graph(&a, goal));
        let out_b = model.forward(&GraphInput::from_graph(&b, goal));
        for (na, da) in a.nodes().iter().zip(&out_a) {
            let nb = b.nodes().iter().position(|n| n.position == na.position).unwrap();
            assert_eq!(*da, out_b[nb]);
        }
    }
}
