use crate::agent::EpisodeResult;
use crate::distfn::UNREACHABLE_DISTANCE;
use crate::env::{DistanceField, EpisodeSpec, FloorPlan};
use serde::{Deserialize, Serialize};

/// Stopping within this geodesic distance of the goal is a success.
pub const SUCCESS_RADIUS: f64 = 3.0;

/// Per-episode navigation metrics. `SR` and `OR` are 0 or 1 so that means
/// over episodes are rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(rename = "NE")]
    pub ne: f64,
    #[serde(rename = "TL")]
    pub tl: f64,
    #[serde(rename = "SR")]
    pub sr: f64,
    #[serde(rename = "OR")]
    pub or: f64,
    #[serde(rename = "SPL")]
    pub spl: f64,
}

pub fn spl(sr: f64, tl: f64, geodesic_ref: f64) -> f64 {
    sr * geodesic_ref / tl.max(geodesic_ref)
}

pub fn compute_metrics(result: &EpisodeResult, spec: &EpisodeSpec, plan: &FloorPlan) -> Metrics {
    let field = DistanceField::from_source(plan, spec.goal);
    let dist = |p| field.distance_at(p).map_or(UNREACHABLE_DISTANCE, |d| d.min(UNREACHABLE_DISTANCE));
    let ne = dist(result.final_pose().position());
    let tl = result.trajectory.length();
    let sr = if result.stopped && ne <= SUCCESS_RADIUS { 1.0 } else { 0.0 };
    let closest = result.trajectory.poses.iter().map(|p| dist(p.position())).fold(f64::INFINITY, f64::min);
    let or = if closest <= SUCCESS_RADIUS { 1.0 } else { 0.0 };
    Metrics { ne, tl, sr, or, spl: spl(sr, tl, spec.geodesic_ref) }
}
