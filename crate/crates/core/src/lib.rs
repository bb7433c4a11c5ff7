//! Mental planning over a world model for continuous 2D navigation.
//!
//! The agent keeps an episodic environment graph of the waypoints it has
//! seen, imagines observations at unvisited waypoints through a scene
//! synthesizer, and runs Monte Carlo Tree Search over imagined graph states
//! before committing to low-level motion in the continuous world.
//!
//! Module map:
//!
//! - [`env`]: procedural floor plans, motion dynamics, depth scans and the
//!   geodesic-distance oracle.
//! - [`waypoint`]: the 120×12 waypoint heatmap and candidate selection.
//! - [`worldmodel`]: the environment graph and scene synthesizers.
//! - [`distfn`]: the graph-attention distance function, its oracle variants
//!   and training.
//! - [`planner`]: MCTS mental planning.
//! - [`agent`]: the episode control loop.
//! - [`harness`]: metrics, benchmark suites and report export.

// Negated float comparisons reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod distfn;
pub mod env;
mod error;
pub mod geom;
pub mod harness;
pub mod planner;
pub mod seed;
pub mod waypoint;
pub mod worldmodel;

pub use error::{Error, Result};
