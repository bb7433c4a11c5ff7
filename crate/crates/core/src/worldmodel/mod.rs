//! The world model: an episodic environment graph plus a scene synthesizer
//! that imagines observations at waypoints the agent has not visited.

mod graph;
mod synth;

pub use graph::{
    EdgeDump, EdgeEmbedding, EgNode, EnvGraph, GraphDump, Inserted, NodeDump, NodeId, NodeStatus, Percept, MERGE_RADIUS,
};
pub use synth::{SceneSynthesizer, SynthesizerKind, WorldOracle};

use crate::waypoint::{select_waypoints, DEFAULT_MAX_WAYPOINTS};
use crate::Result;

/// Detects waypoints around `node` from its (possibly synthesized) scan,
/// imagines each one through the synthesizer and inserts it with `status`.
///
/// Returns the ids of newly created nodes. A node is expanded at most once;
/// later calls are no-ops.
pub fn expand_node(
    g: &mut EnvGraph,
    node: NodeId,
    synth: &SceneSynthesizer,
    oracle: &WorldOracle<'_>,
    status: NodeStatus,
) -> Result<Vec<NodeId>> {
    let source = g.node(node)?.clone();
    if source.expanded {
        return Ok(Vec::new());
    }
    g.mark_expanded(node);
    let mut created = Vec::new();
    for wp in select_waypoints(source.heatmap(), source.position, DEFAULT_MAX_WAYPOINTS) {
        // Known places are not re-imagined.
        if let Some(existing) = g.nearest_within(wp.position, MERGE_RADIUS) {
            if existing != node {
                g.connect(node, existing);
            }
            continue;
        }
        let percept = synth.synthesize(oracle, g, &source, wp.position)?;
        if let Inserted::New(id) = g.add_waypoint(node, &wp, percept, status)? {
            created.push(id);
        }
    }
    Ok(created)
}

/// Imagination step used inside planning: expands `node` with Imagined
/// waypoints.
pub fn imagined_expand(
    g: &mut EnvGraph,
    node: NodeId,
    synth: &SceneSynthesizer,
    oracle: &WorldOracle<'_>,
) -> Result<Vec<NodeId>> {
    expand_node(g, node, synth, oracle, NodeStatus::Imagined)
}
