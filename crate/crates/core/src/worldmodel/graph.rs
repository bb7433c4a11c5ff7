use crate::env::Observation;
use crate::geom::Point;
use crate::waypoint::{predict_heatmap, Waypoint, WaypointHeatmap, DIST_BIN_M, MAX_WAYPOINT_DIST};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Waypoints closer than this to an existing node are merged into it.
pub const MERGE_RADIUS: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeStatus {
    /// Physically reached; carries a real observation.
    Visited,
    /// Detected from a visited node but not reached yet.
    Frontier,
    /// Exists only inside a planning snapshot.
    Imagined,
}

/// An observation together with how many imagination hops produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Percept {
    pub observation: Observation,
    pub synthesis_depth: u32,
}

impl Percept {
    pub fn real(observation: Observation) -> Self {
        Percept { observation, synthesis_depth: 0 }
    }
}

static NEXT_VIEW_KEY: AtomicU64 = AtomicU64::new(1);

/// Immutable per-node payload, shared between graph snapshots.
#[derive(Debug)]
struct View {
    key: u64,
    observation: Observation,
    heatmap: WaypointHeatmap,
}

impl View {
    fn new(observation: Observation) -> Arc<View> {
        let heatmap = predict_heatmap(&observation);
        Arc::new(View { key: NEXT_VIEW_KEY.fetch_add(1, Ordering::Relaxed), observation, heatmap })
    }
}

#[derive(Clone, Debug)]
pub struct EgNode {
    pub id: NodeId,
    /// Position relative to the episode start, meters.
    pub position: Point,
    pub status: NodeStatus,
    pub synthesis_depth: u32,
    /// Whether waypoints around this node have been detected and inserted.
    pub expanded: bool,
    view: Arc<View>,
}

impl EgNode {
    pub fn observation(&self) -> &Observation {
        &self.view.observation
    }

    pub fn heatmap(&self) -> &WaypointHeatmap {
        &self.view.heatmap
    }

    /// Process-unique key of the node's observation payload. Two nodes with
    /// the same key and position have identical input features.
    pub fn view_key(&self) -> u64 {
        self.view.key
    }
}

impl PartialEq for EgNode {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.position == other.position
            && self.status == other.status
            && self.synthesis_depth == other.synthesis_depth
            && self.expanded == other.expanded
            && self.view.observation == other.view.observation
    }
}

/// `(cos θ, sin θ, distance)` of the displacement from one node to another.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeEmbedding {
    pub cos: f64,
    pub sin: f64,
    pub dist: f64,
}

impl EdgeEmbedding {
    pub fn between(from: Point, to: Point) -> Self {
        let d = to - from;
        let dist = d.norm();
        if dist == 0.0 {
            return EdgeEmbedding { cos: 1.0, sin: 0.0, dist: 0.0 };
        }
        EdgeEmbedding { cos: d.x / dist, sin: d.y / dist, dist }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.cos, self.sin, self.dist]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Inserted {
    New(NodeId),
    Merged(NodeId),
}

impl Inserted {
    pub fn id(self) -> NodeId {
        match self {
            Inserted::New(id) | Inserted::Merged(id) => id,
        }
    }
}

/// Episodic graph of waypoints. Node ids are dense indices in insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvGraph {
    nodes: Vec<EgNode>,
    adj: Vec<Vec<(NodeId, EdgeEmbedding)>>,
    start: NodeId,
}

impl EnvGraph {
    /// A graph holding only the start node, visited, at the origin.
    pub fn new(start_obs: Observation) -> Self {
        let start = EgNode {
            id: NodeId(0),
            position: Point::ORIGIN,
            status: NodeStatus::Visited,
            synthesis_depth: 0,
            expanded: false,
            view: View::new(start_obs),
        };
        EnvGraph { nodes: vec![start], adj: vec![Vec::new()], start: NodeId(0) }
    }

    pub fn start(&self) -> NodeId {
        self.start
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[EgNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&EgNode> {
        self.nodes.get(id.0).ok_or(Error::UnknownNode(id.0))
    }

    pub fn neighbors(&self, id: NodeId) -> &[(NodeId, EdgeEmbedding)] {
        &self.adj[id.0]
    }

    /// Number of directed edges.
    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    pub fn edge(&self, from: NodeId, to: NodeId) -> Option<EdgeEmbedding> {
        self.adj.get(from.0)?.binary_search_by_key(&to, |(id, _)| *id).ok().map(|i| self.adj[from.0][i].1)
    }

    pub fn nearest_within(&self, p: Point, radius: f64) -> Option<NodeId> {
        self.nodes
            .iter()
            .map(|n| (n.position.distance(p), n.id))
            .filter(|(d, _)| *d <= radius)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, id)| id)
    }

    pub(crate) fn mark_expanded(&mut self, id: NodeId) {
        self.nodes[id.0].expanded = true;
    }

    /// Adds the undirected adjacency `u ↔ v` (two directed edges).
    pub fn connect(&mut self, u: NodeId, v: NodeId) {
        if u == v || self.edge(u, v).is_some() {
            return;
        }
        let (pu, pv) = (self.nodes[u.0].position, self.nodes[v.0].position);
        insert_sorted(&mut self.adj[u.0], v, EdgeEmbedding::between(pu, pv));
        insert_sorted(&mut self.adj[v.0], u, EdgeEmbedding::between(pv, pu));
    }

    fn mutually_detected(&self, u: NodeId, v: NodeId) -> bool {
        let (a, b) = (&self.nodes[u.0], &self.nodes[v.0]);
        let offset = b.position - a.position;
        offset.norm() <= MAX_WAYPOINT_DIST + DIST_BIN_M / 2.0
            && a.heatmap().detects(offset)
            && b.heatmap().detects(a.position - b.position)
    }

    /// Inserts a waypoint detected from `from`, linking it to `from` and to
    /// every node it mutually detects. A waypoint within the merge radius of
    /// an existing node is merged into that node instead.
    pub fn add_waypoint(
        &mut self,
        from: NodeId,
        wp: &Waypoint,
        percept: Percept,
        status: NodeStatus,
    ) -> Result<Inserted> {
        self.node(from)?;
        if let Some(existing) = self.nearest_within(wp.position, MERGE_RADIUS) {
            self.connect(from, existing);
            return Ok(Inserted::Merged(existing));
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(EgNode {
            id,
            position: wp.position,
            status,
            synthesis_depth: percept.synthesis_depth,
            expanded: false,
            view: View::new(percept.observation),
        });
        self.adj.push(Vec::new());
        self.connect(from, id);
        self.link_mutual(id);
        Ok(Inserted::New(id))
    }

    fn link_mutual(&mut self, id: NodeId) {
        for other in 0..self.nodes.len() {
            let other = NodeId(other);
            if other != id && self.mutually_detected(id, other) {
                self.connect(id, other);
            }
        }
    }

    /// Records that the agent physically reached `id` at `position` and saw
    /// `observation`. Incident edge embeddings follow the corrected position.
    pub fn mark_visited(&mut self, id: NodeId, position: Point, observation: Observation) -> Result<()> {
        self.node(id)?;
        {
            let n = &mut self.nodes[id.0];
            n.position = position;
            n.status = NodeStatus::Visited;
            n.synthesis_depth = 0;
            n.view = View::new(observation);
        }
        let neighbours: Vec<NodeId> = self.adj[id.0].iter().map(|(v, _)| *v).collect();
        for v in neighbours {
            let pv = self.nodes[v.0].position;
            let fwd = EdgeEmbedding::between(position, pv);
            let back = EdgeEmbedding::between(pv, position);
            set_edge(&mut self.adj[id.0], v, fwd);
            set_edge(&mut self.adj[v.0], id, back);
        }
        self.link_mutual(id);
        Ok(())
    }

    /// Edge-length shortest path from `from` to `to`. Intermediate hops are
    /// restricted to nodes satisfying `pass`.
    pub fn route(&self, from: NodeId, to: NodeId, pass: impl Fn(&EgNode) -> bool) -> Option<Vec<NodeId>> {
        let n = self.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut done = vec![false; n];
        dist[from.0] = 0.0;
        // Graphs are small; O(n²) Dijkstra keeps tie-breaking obvious.
        while let Some(u) = (0..n)
            .filter(|&i| !done[i] && dist[i].is_finite())
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)))
        {
            done[u] = true;
            if u == to.0 {
                break;
            }
            if u != from.0 && !pass(&self.nodes[u]) {
                continue;
            }
            for (v, e) in &self.adj[u] {
                let nd = dist[u] + e.dist;
                if nd < dist[v.0] {
                    dist[v.0] = nd;
                    prev[v.0] = u;
                }
            }
        }
        if !dist[to.0].is_finite() {
            return None;
        }
        let mut path = vec![to];
        let mut cur = to.0;
        while cur != from.0 {
            cur = prev[cur];
            path.push(NodeId(cur));
        }
        path.reverse();
        Some(path)
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([self.start]);
        seen[self.start.0] = true;
        while let Some(u) = queue.pop_front() {
            for (v, _) in &self.adj[u.0] {
                if !seen[v.0] {
                    seen[v.0] = true;
                    queue.push_back(*v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Checks edge symmetry, unit-circle embeddings, geometric consistency,
    /// connectivity and status/depth consistency.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for (u, edges) in self.adj.iter().enumerate() {
            for (v, e) in edges {
                let unit = e.cos * e.cos + e.sin * e.sin;
                if e.dist > 0.0 && (unit - 1.0).abs() > 1e-9 {
                    return Err(format!("edge {u}->{v}: cos²+sin² = {unit}"));
                }
                let Some(back) = self.edge(*v, NodeId(u)) else {
                    return Err(format!("edge {u}->{v} has no reverse"));
                };
                if back.dist != e.dist || back.cos != -e.cos || back.sin != -e.sin {
                    return Err(format!("edge {u}->{v} reverse is not antipodal"));
                }
                let expected = EdgeEmbedding::between(self.nodes[u].position, self.nodes[v.0].position);
                if (expected.dist - e.dist).abs() > 1e-9 {
                    return Err(format!("edge {u}->{v} distance is stale"));
                }
            }
        }
        for n in &self.nodes {
            let ok = match n.status {
                NodeStatus::Visited => n.synthesis_depth == 0,
                NodeStatus::Frontier | NodeStatus::Imagined => n.synthesis_depth >= 1,
            };
            if !ok {
                return Err(format!("node {} status {:?} with depth {}", n.id, n.status, n.synthesis_depth));
            }
        }
        if !self.is_connected() {
            return Err("graph is not connected".into());
        }
        Ok(())
    }

    pub fn dump(&self) -> GraphDump {
        GraphDump {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDump {
                    id: n.id,
                    position: n.position,
                    status: n.status,
                    synthesis_depth: n.synthesis_depth,
                })
                .collect(),
            edges: self
                .adj
                .iter()
                .enumerate()
                .flat_map(|(u, es)| es.iter().map(move |(v, e)| EdgeDump { from: NodeId(u), to: *v, embedding: *e }))
                .collect(),
        }
    }
}

fn insert_sorted(list: &mut Vec<(NodeId, EdgeEmbedding)>, id: NodeId, e: EdgeEmbedding) {
    let at = list.partition_point(|(x, _)| *x < id);
    list.insert(at, (id, e));
}

fn set_edge(list: &mut [(NodeId, EdgeEmbedding)], id: NodeId, e: EdgeEmbedding) {
    if let Ok(i) = list.binary_search_by_key(&id, |(x, _)| *x) {
        list[i].1 = e;
    }
}

/// JSON-friendly view of a graph for result files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDump {
    pub nodes: Vec<NodeDump>,
    pub edges: Vec<EdgeDump>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDump {
    pub id: NodeId,
    pub position: Point,
    pub status: NodeStatus,
    pub synthesis_depth: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeDump {
    pub from: NodeId,
    pub to: NodeId,
    pub embedding: EdgeEmbedding,
}
