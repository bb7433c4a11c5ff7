//! Geometric waypoint prediction: a 120-angle × 12-distance navigability
//! heatmap derived from a depth scan, and non-maximum suppression down to a
//! handful of candidate waypoints.

use crate::env::{Observation, NUM_RAYS};
use crate::geom::Point;
use serde::{Deserialize, Serialize};

pub const ANGLE_BINS: usize = NUM_RAYS;
pub const DIST_BINS: usize = 12;
pub const ANGLE_BIN_DEG: f64 = 3.0;
pub const DIST_BIN_M: f64 = 0.25;
pub const MAX_WAYPOINT_DIST: f64 = DIST_BIN_M * DIST_BINS as f64;
/// Free space required beyond a waypoint along its ray.
pub const CLEARANCE_M: f64 = 0.2;
/// Angle bins suppressed on each side of a selected waypoint (±15°).
pub const SUPPRESS_BINS: usize = 5;
pub const DEFAULT_MAX_WAYPOINTS: usize = 5;

/// Distance of bin `j`: 0.25 m · (j + 1).
pub fn bin_distance(j: usize) -> f64 {
    DIST_BIN_M * (j + 1) as f64
}

/// Nearest angle bin to an absolute bearing in degrees.
pub fn angle_bin_of(deg: f64) -> usize {
    ((deg / ANGLE_BIN_DEG).round() as i64).rem_euclid(ANGLE_BINS as i64) as usize
}

/// Nearest distance bin, or `None` beyond half a bin outside the range.
pub fn dist_bin_of(distance: f64) -> Option<usize> {
    let j = (distance / DIST_BIN_M).round() as i64 - 1;
    (0..DIST_BINS as i64).contains(&j).then_some(j as usize)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaypointHeatmap {
    scores: Vec<[f32; DIST_BINS]>,
}

impl WaypointHeatmap {
    pub fn zeros() -> Self {
        WaypointHeatmap { scores: vec![[0.0; DIST_BINS]; ANGLE_BINS] }
    }

    pub fn score(&self, angle_bin: usize, dist_bin: usize) -> f64 {
        self.scores[angle_bin][dist_bin] as f64
    }

    pub fn set(&mut self, angle_bin: usize, dist_bin: usize, score: f64) {
        self.scores[angle_bin][dist_bin] = score.clamp(0.0, 1.0) as f32;
    }

    pub fn is_navigable(&self, angle_bin: usize, dist_bin: usize) -> bool {
        self.scores[angle_bin][dist_bin] >= 0.5
    }

    /// Whether a point at `offset` from the heatmap origin is marked navigable.
    pub fn detects(&self, offset: Point) -> bool {
        match dist_bin_of(offset.norm()) {
            Some(j) => self.is_navigable(angle_bin_of(offset.bearing_deg()), j),
            None => false,
        }
    }

    pub fn rows(&self) -> &[[f32; DIST_BINS]] {
        &self.scores
    }

    pub fn count_navigable(&self) -> usize {
        self.scores.iter().flatten().filter(|&&s| s >= 0.5).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Point,
    pub angle_bin: usize,
    pub dist_bin: usize,
    pub score: f64,
}

impl Waypoint {
    pub fn from_bins(origin: Point, angle_bin: usize, dist_bin: usize, score: f64) -> Self {
        let position = origin.offset(angle_bin as f64 * ANGLE_BIN_DEG, bin_distance(dist_bin));
        Waypoint { position, angle_bin, dist_bin, score }
    }

    pub fn angle_deg(&self) -> f64 {
        self.angle_bin as f64 * ANGLE_BIN_DEG
    }
}

/// Cell `(i, j)` scores 1 when ray `i` reaches at least `bin_distance(j) + 0.2` m.
pub fn predict_heatmap(obs: &Observation) -> WaypointHeatmap {
    let mut hm = WaypointHeatmap::zeros();
    for (i, row) in hm.scores.iter_mut().enumerate() {
        let ray = obs.ray(i);
        for (j, cell) in row.iter_mut().enumerate() {
            if ray >= bin_distance(j) + CLEARANCE_M {
                *cell = 1.0;
            }
        }
    }
    hm
}

/// Farthest-first non-maximum suppression over angle bins.
///
/// Each round takes the navigable cell with the largest distance bin among
/// unsuppressed angles and suppresses ±5 angle bins around it. Equally far
/// cells go to the angle with the widest gap to the waypoints already taken,
/// then to the lower angle bin.
pub fn select_waypoints(hm: &WaypointHeatmap, origin: Point, k: usize) -> Vec<Waypoint> {
    let mut suppressed = [false; ANGLE_BINS];
    let mut out: Vec<Waypoint> = Vec::with_capacity(k);
    while out.len() < k {
        let gap = |i: usize| out.iter().map(|w| circular_gap(i, w.angle_bin)).min().unwrap_or(0);
        let mut best: Option<(usize, usize, usize)> = None;
        for (i, _) in suppressed.iter().enumerate().filter(|(_, &s)| !s) {
            if let Some(j) = (0..DIST_BINS).rev().find(|&j| hm.is_navigable(i, j)) {
                let g = gap(i);
                if best.is_none_or(|(_, bj, bg)| j > bj || (j == bj && g > bg)) {
                    best = Some((i, j, g));
                }
            }
        }
        let best = best.map(|(i, j, _)| (i, j));
        let Some((i, j)) = best else { break };
        for d in 0..=SUPPRESS_BINS {
            suppressed[(i + d) % ANGLE_BINS] = true;
            suppressed[(i + ANGLE_BINS - d) % ANGLE_BINS] = true;
        }
        out.push(Waypoint::from_bins(origin, i, j, hm.score(i, j)));
    }
    out
}

fn circular_gap(a: usize, b: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(ANGLE_BINS - d)
}
