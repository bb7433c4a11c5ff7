use super::graph::{EgNode, EnvGraph, Percept};
use crate::env::{raycast_or_blocked, FloorPlan, Observation, MAX_RANGE};
use crate::geom::Point;
use crate::seed;
use crate::waypoint::{DIST_BIN_M, MAX_WAYPOINT_DIST};
use crate::{Error, Result};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Ground truth available to the synthesizer. Graph positions are relative
/// to the episode start; `origin` maps them back into plan coordinates.
#[derive(Clone, Copy, Debug)]
pub struct WorldOracle<'a> {
    pub plan: &'a FloorPlan,
    pub origin: Point,
}

impl<'a> WorldOracle<'a> {
    pub fn new(plan: &'a FloorPlan, origin: Point) -> Self {
        WorldOracle { plan, origin }
    }

    /// Ground-truth scan at a graph-frame position.
    pub fn scan(&self, p: Point) -> Observation {
        raycast_or_blocked(self.plan, self.origin + p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthesizerKind {
    Perfect,
    /// Gaussian ray noise with std `sigma0 · depth`.
    Noisy {
        sigma0: f64,
    },
    CopyMemory,
}

impl SynthesizerKind {
    pub fn label(&self) -> String {
        match self {
            SynthesizerKind::Perfect => "perfect".into(),
            SynthesizerKind::Noisy { sigma0 } => format!("noisy{sigma0}"),
            SynthesizerKind::CopyMemory => "copy_memory".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneSynthesizer {
    pub kind: SynthesizerKind,
    pub seed: u64,
}

impl SceneSynthesizer {
    pub fn new(kind: SynthesizerKind, seed: u64) -> Self {
        SceneSynthesizer { kind, seed }
    }

    /// Imagines the scan at `target`, one hop away from `from`.
    pub fn synthesize(&self, oracle: &WorldOracle<'_>, g: &EnvGraph, from: &EgNode, target: Point) -> Result<Percept> {
        let distance = from.position.distance(target);
        // Waypoints sit on bin centres; allow for rounding in the offset.
        let limit = MAX_WAYPOINT_DIST + DIST_BIN_M / 2.0;
        if !(distance <= limit) {
            return Err(Error::SynthesisRange { distance, limit });
        }
        let depth = from.synthesis_depth + 1;
        let observation = match self.kind {
            SynthesizerKind::Perfect => oracle.scan(target),
            SynthesizerKind::Noisy { sigma0 } => self.noisy(oracle.scan(target), sigma0, depth, target),
            SynthesizerKind::CopyMemory => copy_memory(g, from, target),
        };
        Ok(Percept { observation, synthesis_depth: depth })
    }

    /// Ground truth plus noise. The stream is keyed on the target position
    /// and depth so imagining the same place twice gives the same scan.
    pub fn noisy(&self, truth: Observation, sigma0: f64, depth: u32, target: Point) -> Observation {
        let std = sigma0 * depth as f64;
        if !(std > 0.0) {
            return truth;
        }
        let mut rng = seed::rng(self.seed, &[target.x.to_bits(), target.y.to_bits(), depth as u64]);
        let normal = Normal::new(0.0, std).expect("finite positive std");
        let rays = truth.rays().iter().map(|&r| (r + normal.sample(&mut rng)).clamp(0.0, MAX_RANGE)).collect();
        Observation::from_rays(rays).expect("ray count preserved")
    }
}

/// The scan of the nearest real (depth-0) node, falling back to `from`.
fn copy_memory(g: &EnvGraph, from: &EgNode, target: Point) -> Observation {
    g.nodes()
        .iter()
        .filter(|n| n.synthesis_depth == 0)
        .min_by(|a, b| a.position.distance(target).total_cmp(&b.position.distance(target)).then(a.id.cmp(&b.id)))
        .unwrap_or(from)
        .observation()
        .clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{observe, DEFAULT_CELL_SIZE};

    fn box_plan() -> FloorPlan {
        let mut plan = FloorPlan::closed(60, 60, DEFAULT_CELL_SIZE);
        plan.carve_cells(1, 1, 59, 59);
        plan
    }

    #[test]
    fn perfect_is_ground_truth() {
        let plan = box_plan();
        let oracle = WorldOracle::new(&plan, Point::new(3.0, 3.0));
        let g = EnvGraph::new(oracle.scan(Point::ORIGIN));
        let s = SceneSynthesizer::new(SynthesizerKind::Perfect, 1);
        let p = s.synthesize(&oracle, &g, g.node(g.start()).unwrap(), Point::new(1.0, 0.5)).unwrap();
        let truth = observe(&plan, crate::env::Pose::new(4.0, 3.5, 0)).unwrap();
        assert_eq!(p.observation, truth);
        assert_eq!(p.synthesis_depth, 1);
    }

    #[test]
    fn target_in_wall_is_blocked() {
        let plan = box_plan();
        let oracle = WorldOracle::new(&plan, Point::new(0.5, 3.0));
        let g = EnvGraph::new(oracle.scan(Point::ORIGIN));
        let s = SceneSynthesizer::new(SynthesizerKind::Perfect, 1);
        let p = s.synthesize(&oracle, &g, g.node(g.start()).unwrap(), Point::new(-1.0, 0.0)).unwrap();
        assert_eq!(p.observation, Observation::blocked());
    }

    #[test]
    fn out_of_range_errors() {
        let plan = box_plan();
        let oracle = WorldOracle::new(&plan, Point::new(3.0, 3.0));
        let g = EnvGraph::new(oracle.scan(Point::ORIGIN));
        let s = SceneSynthesizer::new(SynthesizerKind::Perfect, 1);
        let r = s.synthesize(&oracle, &g, g.node(g.start()).unwrap(), Point::new(3.5, 0.0));
        assert!(matches!(r, Err(Error::SynthesisRange { .. })));
    }

    #[test]
    fn copy_memory_single_visited() {
        let plan = box_plan();
        let oracle = WorldOracle::new(&plan, Point::new(3.0, 3.0));
        let start = oracle.scan(Point::ORIGIN);
        let g = EnvGraph::new(start.clone());
        let s = SceneSynthesizer::new(SynthesizerKind::CopyMemory, 1);
        let p = s.synthesize(&oracle, &g, g.node(g.start()).unwrap(), Point::new(0.0, 2.0)).unwrap();
        assert_eq!(p.observation, start);
    }

    #[test]
    fn noisy_rmse_follows_noise_law() {
        // A 6 m box keeps every ray well inside (0, 5), so clamping is rare
        // and the empirical RMSE estimates σ0·k directly.
        let plan = box_plan();
        let oracle = WorldOracle::new(&plan, Point::new(3.0, 3.0));
        let s = SceneSynthesizer::new(SynthesizerKind::Noisy { sigma0: 0.1 }, 9);
        let truth = oracle.scan(Point::ORIGIN);
        let mut sq = 0.0;
        let mut n = 0usize;
        for t in 0..84 {
            let target = Point::new(t as f64 * 1e-3, 0.0);
            let obs = s.noisy(truth.clone(), 0.1, 3, target);
            for (a, b) in obs.rays().iter().zip(truth.rays()) {
                sq += (a - b).powi(2);
                n += 1;
            }
        }
        assert!(n >= 10_000);
        let rmse = (sq / n as f64).sqrt();
        assert!((rmse - 0.3).abs() <= 0.03, "rmse {rmse}");
    }

    #[test]
    fn noisy_is_deterministic_and_bounded() {
        let s = SceneSynthesizer::new(SynthesizerKind::Noisy { sigma0: 2.0 }, 4);
        let a = s.noisy(Observation::uniform(4.9), 2.0, 2, Point::new(1.0, 2.0));
        let b = s.noisy(Observation::uniform(4.9), 2.0, 2, Point::new(1.0, 2.0));
        assert_eq!(a, b);
        assert!(a.rays().iter().all(|r| (0.0..=MAX_RANGE).contains(r)));
        let c = SceneSynthesizer::new(SynthesizerKind::Noisy { sigma0: 2.0 }, 5).noisy(
            Observation::uniform(4.9),
            2.0,
            2,
            Point::new(1.0, 2.0),
        );
        assert_ne!(a, c);
    }
}
