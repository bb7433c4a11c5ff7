//! Episode metrics, benchmark suites over shared episode sets, the
//! synthesis-error curve, distance-function training runs and search-tree
//! export.

mod metrics;
mod suite;
mod synthesis;
mod training;

pub use metrics::{compute_metrics, spl, Metrics, SUCCESS_RADIUS};
pub use suite::{
    run_suite, run_suite_on, run_suite_with, BenchmarkConfig, EpisodeRow, EpisodeSet, SuiteReport, Variant,
    VariantSummary,
};
pub use synthesis::{scan_rmse, synthesis_error_curve, SynthesisCurve};
pub use training::{train_distance, TrainingOutcome, TrainingSetup};

use crate::agent::EpisodeResult;
use crate::planner::dot::to_dot;
use crate::{Error, Result};
use std::path::Path;

/// Graphviz text for the search tree behind decision `decision`.
pub fn export_tree(result: &EpisodeResult, decision: usize) -> Result<String> {
    let tree = result
        .trajectory
        .decisions
        .get(decision)
        .and_then(|d| d.tree.as_ref())
        .ok_or(Error::UnknownExport(decision))?;
    Ok(to_dot(tree))
}

pub fn write_tree(result: &EpisodeResult, decision: usize, path: &Path) -> Result<()> {
    let text = export_tree(result, decision)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
