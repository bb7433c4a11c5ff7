//! Continuous 2D worlds backed by a metric occupancy grid.
//!
//! The floor plan is the single source of truth for collision, depth scans
//! and geodesic distance. Everything here is a pure function of its inputs.

mod episode;
mod geodesic;
pub mod io;
mod plan;
mod raycast;

pub use episode::{sample_episode, EpisodeSpec, MAX_GEODESIC, MIN_GEODESIC};
pub use geodesic::{geodesic_distance, DistanceField};
pub use plan::{generate_floorplan, FloorPlan, GenParams, Room, DEFAULT_CELL_SIZE};
pub use raycast::{observe, raycast_or_blocked, Observation, MAX_RANGE, NUM_RAYS, RAY_SPACING_DEG};

use crate::geom::{unit, Point};
use serde::{Deserialize, Serialize};

pub const STEP_LENGTH: f64 = 0.25;
pub const TURN_DEG: u16 = 15;
/// Heading resolution shared with the waypoint heatmap angle bins.
pub const HEADING_RESOLUTION_DEG: u16 = 3;

/// Agent pose; `heading` is in whole degrees, always a multiple of 3.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: u16,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: u16) -> Self {
        let heading = heading % 360;
        debug_assert_eq!(heading % HEADING_RESOLUTION_DEG, 0);
        Pose { x, y, heading }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    fn with_position(self, p: Point) -> Pose {
        Pose { x: p.x, y: p.y, ..self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LowLevelAction {
    TurnLeft15,
    TurnRight15,
    Forward025,
    Stop,
}

/// Applies one low-level action. Forward motion slides along the free axis
/// when the straight move would collide; a fully blocked move is a no-op.
pub fn step(plan: &FloorPlan, pose: Pose, action: LowLevelAction) -> Pose {
    match action {
        LowLevelAction::TurnLeft15 => Pose::new(pose.x, pose.y, (pose.heading + TURN_DEG) % 360),
        LowLevelAction::TurnRight15 => Pose::new(pose.x, pose.y, (pose.heading + 360 - TURN_DEG) % 360),
        LowLevelAction::Stop => pose,
        LowLevelAction::Forward025 => {
            let from = pose.position();
            let (c, s) = unit(pose.heading as f64);
            let (dx, dy) = (STEP_LENGTH * c, STEP_LENGTH * s);
            let straight = Point::new(from.x + dx, from.y + dy);
            if plan.segment_free(from, straight) {
                return pose.with_position(straight);
            }
            // Axis projection, larger component first.
            let mut slides = [Point::new(from.x + dx, from.y), Point::new(from.x, from.y + dy)];
            if dy.abs() > dx.abs() {
                slides.swap(0, 1);
            }
            for target in slides {
                if target != from && plan.segment_free(from, target) {
                    return pose.with_position(target);
                }
            }
            pose
        }
    }
}
