use super::{DistanceField, FloorPlan, Pose};
use crate::geom::Point;
use crate::seed;
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const MIN_GEODESIC: f64 = 3.0;
pub const MAX_GEODESIC: f64 = 30.0;
const MAX_ATTEMPTS: usize = 1000;
/// Starts and goals keep this many cells (0.3 m) away from walls.
const CLEARANCE_CELLS: i64 = 3;

/// A navigation task: reach `goal` from `start` on plan `plan_seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub episode_id: String,
    pub plan_seed: u64,
    pub start: Pose,
    pub goal: Point,
    /// Ground-truth shortest-path length from start to goal, meters.
    pub geodesic_ref: f64,
}

/// Rejection-samples a start/goal pair in one free component with a
/// geodesic length in `[3, 30]` m. Deterministic per `(plan, seed)`.
pub fn sample_episode(plan: &FloorPlan, seed: u64) -> Result<EpisodeSpec> {
    let mut rng = seed::rng(seed, &[plan.seed, 0x6570_6973]);
    let candidates: Vec<(usize, usize)> = (0..plan.height())
        .flat_map(|y| (0..plan.width()).map(move |x| (x, y)))
        .filter(|&(x, y)| plan.is_free_cell(x, y) && plan.clearance_cells(x, y, CLEARANCE_CELLS) > CLEARANCE_CELLS)
        .collect();
    if candidates.is_empty() {
        return Err(Error::SamplingFailed { attempts: 0 });
    }
    for _ in 0..MAX_ATTEMPTS {
        let (sx, sy) = candidates[rng.random_range(0..candidates.len())];
        let start = plan.cell_center(sx, sy);
        let field = DistanceField::from_source(plan, start);
        let goals: Vec<((usize, usize), f64)> = candidates
            .iter()
            .filter_map(|&(x, y)| field.distance_cell(x, y).map(|d| ((x, y), d)))
            .filter(|&(_, d)| (MIN_GEODESIC..=MAX_GEODESIC).contains(&d))
            .collect();
        if goals.is_empty() {
            continue;
        }
        let ((gx, gy), geodesic_ref) = goals[rng.random_range(0..goals.len())];
        let heading = 15 * rng.random_range(0..24u16);
        return Ok(EpisodeSpec {
            episode_id: format!("p{}-e{}", plan.seed, seed),
            plan_seed: plan.seed,
            start: Pose::new(start.x, start.y, heading),
            goal: plan.cell_center(gx, gy),
            geodesic_ref,
        });
    }
    Err(Error::SamplingFailed { attempts: MAX_ATTEMPTS })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_floorplan, geodesic_distance, GenParams};
    use std::collections::HashSet;

    #[test]
    fn episodes_respect_contract() {
        let plan = generate_floorplan(3, &GenParams::default()).unwrap();
        let mut starts = HashSet::new();
        for s in 0..100 {
            let ep = sample_episode(&plan, s).unwrap();
            assert!((MIN_GEODESIC..=MAX_GEODESIC).contains(&ep.geodesic_ref));
            let d = geodesic_distance(&plan, ep.start.position(), ep.goal).unwrap();
            assert_eq!(d, ep.geodesic_ref);
            starts.insert((ep.start.x.to_bits(), ep.start.y.to_bits()));
        }
        assert!(starts.len() >= 90, "only {} distinct starts", starts.len());
    }

    #[test]
    fn deterministic_per_seed() {
        let plan = generate_floorplan(3, &GenParams::default()).unwrap();
        assert_eq!(sample_episode(&plan, 11).unwrap(), sample_episode(&plan, 11).unwrap());
    }

    #[test]
    fn tiny_plan_fails() {
        let mut plan = FloorPlan::closed(12, 12, 0.1);
        plan.carve_cells(1, 1, 11, 11);
        assert!(matches!(sample_episode(&plan, 0), Err(Error::SamplingFailed { .. })));
    }
}
