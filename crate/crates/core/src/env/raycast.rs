use super::{FloorPlan, Pose};
use crate::geom::{unit, Point};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

pub const NUM_RAYS: usize = 120;
pub const RAY_SPACING_DEG: f64 = 3.0;
pub const MAX_RANGE: f64 = 5.0;

/// Panoramic depth scan: ray `i` points along absolute angle `3°·i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Observation {
    rays: Vec<f64>,
}

impl Observation {
    /// Builds a scan from ray distances, clamping each to `[0, MAX_RANGE]`.
    pub fn from_rays(rays: Vec<f64>) -> Result<Self> {
        if rays.len() != NUM_RAYS {
            return Err(Error::Malformed(format!("scan has {} rays, expected {NUM_RAYS}", rays.len())));
        }
        if rays.iter().any(|r| r.is_nan()) {
            return Err(Error::Malformed("scan contains NaN".into()));
        }
        Ok(Observation { rays: rays.into_iter().map(|r| r.clamp(0.0, MAX_RANGE)).collect() })
    }

    pub fn uniform(distance: f64) -> Self {
        Observation { rays: vec![distance.clamp(0.0, MAX_RANGE); NUM_RAYS] }
    }

    /// The scan seen from inside an obstacle.
    pub fn blocked() -> Self {
        Self::uniform(0.0)
    }

    pub fn rays(&self) -> &[f64] {
        &self.rays
    }

    pub fn ray(&self, i: usize) -> f64 {
        self.rays[i]
    }

    /// Per-ray root mean squared difference.
    pub fn rmse(&self, other: &Observation) -> f64 {
        let sum: f64 = self.rays.iter().zip(&other.rays).map(|(a, b)| (a - b) * (a - b)).sum();
        (sum / NUM_RAYS as f64).sqrt()
    }
}

impl TryFrom<Vec<f64>> for Observation {
    type Error = Error;
    fn try_from(rays: Vec<f64>) -> Result<Self> {
        Observation::from_rays(rays)
    }
}

impl From<Observation> for Vec<f64> {
    fn from(o: Observation) -> Vec<f64> {
        o.rays
    }
}

/// Depth scan at the pose. Independent of heading: rays are indexed by
/// absolute world angle.
pub fn observe(plan: &FloorPlan, pose: Pose) -> Result<Observation> {
    observe_at(plan, pose.position())
}

pub(crate) fn observe_at(plan: &FloorPlan, p: Point) -> Result<Observation> {
    if !plan.is_free(p) {
        return Err(Error::PoseInObstacle { x: p.x, y: p.y });
    }
    let rays = (0..NUM_RAYS).map(|i| cast(plan, p, i as f64 * RAY_SPACING_DEG)).collect();
    Ok(Observation { rays })
}

/// Scan at an arbitrary point; an all-zero scan when the point is inside an
/// obstacle or outside the plan.
pub fn raycast_or_blocked(plan: &FloorPlan, p: Point) -> Observation {
    observe_at(plan, p).unwrap_or_else(|_| Observation::blocked())
}

/// Grid traversal (Amanatides–Woo) to the first occupied cell.
fn cast(plan: &FloorPlan, origin: Point, deg: f64) -> f64 {
    let cs = plan.cell_size();
    let (dx, dy) = unit(deg);
    let gx = origin.x / cs;
    let gy = origin.y / cs;
    let mut ix = gx.floor() as i64;
    let mut iy = gy.floor() as i64;
    let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
    let axis = |g: f64, i: i64, d: f64| -> (f64, f64) {
        if d == 0.0 {
            (f64::INFINITY, f64::INFINITY)
        } else {
            let boundary = if d > 0.0 { (i + 1) as f64 } else { i as f64 };
            (((boundary - g) / d) * cs, cs / d.abs())
        }
    };
    let (mut t_max_x, t_delta_x) = axis(gx, ix, dx);
    let (mut t_max_y, t_delta_y) = axis(gy, iy, dy);
    loop {
        let t = if t_max_x < t_max_y {
            ix += step_x;
            let t = t_max_x;
            t_max_x += t_delta_x;
            t
        } else {
            iy += step_y;
            let t = t_max_y;
            t_max_y += t_delta_y;
            t
        };
        if t >= MAX_RANGE {
            return MAX_RANGE;
        }
        if plan.is_occupied(ix, iy) {
            return t;
        }
    }
}
