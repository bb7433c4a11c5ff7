//! Navigation as a search problem: states are imagined environment graphs,
//! actions move to an unvisited waypoint or stop at a visited one.

use super::SearchModel;
use crate::distfn::{min_distance, Scorer};
use crate::worldmodel::{imagined_expand, EnvGraph, NodeId, SceneSynthesizer, WorldOracle};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

/// Estimated distance at or below which stopping is rewarded.
pub const STOP_RADIUS: f64 = 3.0;
pub const STOP_REWARD: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "node", rename_all = "snake_case")]
pub enum PlanAction {
    Move(NodeId),
    Stop(NodeId),
}

impl PlanAction {
    pub fn node(&self) -> NodeId {
        match *self {
            PlanAction::Move(v) | PlanAction::Stop(v) => v,
        }
    }
}

impl fmt::Display for PlanAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanAction::Move(v) => write!(f, "move {v}"),
            PlanAction::Stop(v) => write!(f, "stop {v}"),
        }
    }
}

/// One imagined world: the graph, the nodes visited so far in this dream,
/// and the per-node distance estimates of that graph.
#[derive(Clone, Debug)]
pub struct WorldState {
    pub graph: EnvGraph,
    pub visited: BTreeSet<NodeId>,
    pub depth: usize,
    /// Where the agent stands in this world.
    pub current: NodeId,
    estimates: Arc<Vec<f64>>,
}

impl WorldState {
    pub fn new(graph: EnvGraph, visited: BTreeSet<NodeId>, depth: usize, current: NodeId, scorer: &Scorer<'_>) -> Self {
        let estimates = Arc::new(scorer.estimates(&graph));
        WorldState { graph, visited, depth, current, estimates }
    }

    /// Root state over a real graph: its Visited nodes form the visited set.
    pub fn root(graph: EnvGraph, current: NodeId, scorer: &Scorer<'_>) -> Self {
        let visited =
            graph.nodes().iter().filter(|n| n.status == crate::worldmodel::NodeStatus::Visited).map(|n| n.id).collect();
        WorldState::new(graph, visited, 0, current, scorer)
    }

    pub fn estimate(&self, v: NodeId) -> f64 {
        self.estimates[v.0]
    }

    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }

    /// Best estimated distance among the visited nodes.
    pub fn visited_distance(&self) -> f64 {
        let ds: Vec<f64> = self.visited.iter().map(|v| self.estimate(*v)).collect();
        min_distance(&ds)
    }

    /// Move actions to every unvisited node, then stop actions at every
    /// visited node, each in id order.
    pub fn actions(&self) -> Vec<PlanAction> {
        let moves = self.graph.nodes().iter().filter(|n| !self.visited.contains(&n.id)).map(|n| PlanAction::Move(n.id));
        moves.chain(self.visited.iter().map(|&v| PlanAction::Stop(v))).collect()
    }

    /// Actions available from where the agent stands: moves to unvisited
    /// neighbours of `current` (every unvisited node when there are none),
    /// and stops at `current` or a visited neighbour. Ordered by estimate,
    /// then id, so ties resolve toward the closest-looking node.
    pub fn local_actions(&self) -> Vec<PlanAction> {
        let near: BTreeSet<NodeId> = self.graph.neighbors(self.current).iter().map(|(v, _)| *v).collect();
        let unvisited = || self.graph.nodes().iter().map(|n| n.id).filter(|id| !self.visited.contains(id));
        let mut moves: Vec<PlanAction> = unvisited().filter(|id| near.contains(id)).map(PlanAction::Move).collect();
        if moves.is_empty() {
            moves = unvisited().map(PlanAction::Move).collect();
        }
        let stops =
            self.visited.iter().filter(|v| **v == self.current || near.contains(v)).map(|&v| PlanAction::Stop(v));
        let mut all: Vec<PlanAction> = moves.into_iter().chain(stops).collect();
        all.sort_by(|a, b| self.estimate(a.node()).total_cmp(&self.estimate(b.node())).then(a.cmp(b)));
        all
    }

    pub fn actions_in(&self, scope: ActionScope) -> Vec<PlanAction> {
        match scope {
            ActionScope::Global => self.actions(),
            ActionScope::Local => self.local_actions(),
        }
    }
}

/// Which actions the planner considers in each imagined state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionScope {
    /// Every unvisited node and every visited node, by id.
    Global,
    /// Only the surroundings of the current node; see [`WorldState::local_actions`].
    #[default]
    Local,
}

pub fn stop_reward(estimate: f64) -> f64 {
    if estimate <= STOP_RADIUS {
        STOP_REWARD
    } else {
        -STOP_REWARD
    }
}

pub struct NavModel<'a> {
    pub scorer: &'a Scorer<'a>,
    pub synth: &'a SceneSynthesizer,
    pub oracle: &'a WorldOracle<'a>,
    pub scope: ActionScope,
}

impl<'a> NavModel<'a> {
    pub fn new(
        scorer: &'a Scorer<'a>,
        synth: &'a SceneSynthesizer,
        oracle: &'a WorldOracle<'a>,
        scope: ActionScope,
    ) -> Self {
        NavModel { scorer, synth, oracle, scope }
    }
}

impl SearchModel for NavModel<'_> {
    type State = WorldState;
    type Action = PlanAction;

    fn actions(&self, s: &WorldState) -> Result<Vec<PlanAction>> {
        Ok(s.actions_in(self.scope))
    }

    fn is_stop(&self, a: &PlanAction) -> bool {
        matches!(a, PlanAction::Stop(_))
    }

    fn step(&self, s: &WorldState, a: &PlanAction) -> Result<(WorldState, f64)> {
        match *a {
            PlanAction::Stop(v) => {
                if !s.visited.contains(&v) {
                    return Err(Error::UnknownNode(v.0));
                }
                let mut next = s.clone();
                next.depth += 1;
                Ok((next, stop_reward(s.estimate(v))))
            }
            PlanAction::Move(x) => {
                s.graph.node(x)?;
                let mut graph = s.graph.clone();
                imagined_expand(&mut graph, x, self.synth, self.oracle)?;
                let mut visited = s.visited.clone();
                visited.insert(x);
                let next = WorldState::new(graph, visited, s.depth + 1, x, self.scorer);
                let reward = s.visited_distance() - next.visited_distance();
                Ok((next, reward))
            }
        }
    }

    fn rollout_scores(&self, s: &WorldState, actions: &[PlanAction]) -> Result<Vec<f64>> {
        Ok(actions.iter().map(|a| s.estimate(a.node())).collect())
    }

    fn action_label(&self, a: &PlanAction) -> String {
        a.to_string()
    }
}

/// One-step decision without search: the action over the whole graph whose
/// node has the smallest estimate. A visited node wins ties, which means
/// stopping there; `None` only for an empty graph.
pub fn greedy_action(s: &WorldState) -> Option<PlanAction> {
    s.actions().into_iter().min_by(|a, b| {
        let stop_first = matches!(b, PlanAction::Stop(_)).cmp(&matches!(a, PlanAction::Stop(_)));
        s.estimate(a.node()).total_cmp(&s.estimate(b.node())).then(stop_first).then(a.node().cmp(&b.node()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distfn::{DistanceEstimator, GoalDescriptor};
    use crate::env::{DistanceField, FloorPlan, DEFAULT_CELL_SIZE};
    use crate::geom::Point;
    use crate::planner::{plan, PlannerConfig};
    use crate::worldmodel::{expand_node, NodeStatus, SynthesizerKind};

    struct World {
        plan: FloorPlan,
        field: DistanceField,
        origin: Point,
        goal: Point,
    }

    fn world(goal_offset: Point) -> World {
        let mut plan = FloorPlan::closed(200, 200, DEFAULT_CELL_SIZE);
        plan.carve_cells(1, 1, 199, 199);
        let origin = Point::new(10.0, 10.0);
        let field = DistanceField::from_source(&plan, origin + goal_offset);
        World { plan, field, origin, goal: goal_offset }
    }

    fn root(w: &World, scorer: &Scorer<'_>) -> WorldState {
        let oracle = WorldOracle::new(&w.plan, w.origin);
        let synth = SceneSynthesizer::new(SynthesizerKind::Perfect, 0);
        let mut g = EnvGraph::new(oracle.scan(Point::ORIGIN));
        expand_node(&mut g, NodeId(0), &synth, &oracle, NodeStatus::Frontier).unwrap();
        WorldState::root(g, NodeId(0), scorer)
    }

    #[test]
    fn root_action_space() {
        let w = world(Point::new(6.0, 0.0));
        let est = DistanceEstimator::oracle();
        let scorer = Scorer::new(&est, &w.field, w.origin, GoalDescriptor::new(w.goal).unwrap(), 0);
        let s = root(&w, &scorer);
        let actions = s.actions();
        assert_eq!(actions.len(), 6);
        assert_eq!(actions[5], PlanAction::Stop(NodeId(0)));
        assert!(actions[..5].iter().all(|a| matches!(a, PlanAction::Move(_))));
        assert_eq!(actions, root(&w, &scorer).actions());
    }

    #[test]
    fn local_actions_surround_the_current_node() {
        let w = world(Point::new(6.0, 0.0));
        let est = DistanceEstimator::oracle();
        let scorer = Scorer::new(&est, &w.field, w.origin, GoalDescriptor::new(w.goal).unwrap(), 0);
        let oracle = WorldOracle::new(&w.plan, w.origin);
        let synth = SceneSynthesizer::new(SynthesizerKind::Perfect, 0);
        let model = NavModel::new(&scorer, &synth, &oracle, ActionScope::Local);
        let s = root(&w, &scorer);
        let mut global = s.actions();
        let local = s.local_actions();
        let by_estimate = |a: &Vec<PlanAction>, st: &WorldState| {
            a.windows(2).all(|p| st.estimate(p[0].node()) <= st.estimate(p[1].node()))
        };
        assert!(by_estimate(&local, &s));
        global.sort();
        let mut sorted = local.clone();
        sorted.sort();
        assert_eq!(sorted, global);

        let x = match local[0] {
            PlanAction::Move(x) => x,
            a => panic!("expected a move first, got {a:?}"),
        };
        let (next, _) = model.step(&s, &PlanAction::Move(x)).unwrap();
        let near: Vec<NodeId> = next.graph.neighbors(x).iter().map(|(v, _)| *v).collect();
        let acts = model.actions(&next).unwrap();
        assert!(by_estimate(&acts, &next));
        assert!(acts.contains(&PlanAction::Stop(x)));
        for a in &acts {
            match *a {
                PlanAction::Move(v) => assert!(near.contains(&v) && !next.visited.contains(&v)),
                PlanAction::Stop(v) => assert!(v == x || near.contains(&v)),
            }
        }

        let mut visited = next.visited.clone();
        visited.extend(near.iter().copied());
        let boxed_in = WorldState::new(next.graph.clone(), visited, 1, x, &scorer);
        let moves: BTreeSet<NodeId> =
            boxed_in.local_actions().iter().filter(|a| matches!(a, PlanAction::Move(_))).map(|a| a.node()).collect();
        let unvisited: BTreeSet<NodeId> =
            boxed_in.graph.nodes().iter().map(|n| n.id).filter(|v| !boxed_in.visited.contains(v)).collect();
        assert!(!unvisited.is_empty());
        assert_eq!(moves, unvisited);
    }

    #[test]
    fn greedy_takes_the_smallest_estimate() {
        let w = world(Point::new(6.0, 0.0));
        let est = DistanceEstimator::oracle();
        let scorer = Scorer::new(&est, &w.field, w.origin, GoalDescriptor::new(w.goal).unwrap(), 0);
        let s = root(&w, &scorer);
        let best =
            s.graph.nodes().iter().map(|n| n.id).min_by(|a, b| s.estimate(*a).total_cmp(&s.estimate(*b))).unwrap();
        assert_eq!(greedy_action(&s), Some(PlanAction::Move(best)));
        let mut all_visited = s.clone();
        all_visited.visited = s.graph.nodes().iter().map(|n| n.id).collect();
        assert_eq!(greedy_action(&all_visited), Some(PlanAction::Stop(best)));
    }

    #[test]
    fn stop_rewards() {
        assert_eq!(stop_reward(2.5), 5.0);
        assert_eq!(stop_reward(3.0), 5.0);
        assert_eq!(stop_reward(3.01), -5.0);
    }

    #[test]
    fn move_step_extends_visited_and_rewards_progress() {
        let w = world(Point::new(6.0, 0.0));
        let est = DistanceEstimator::oracle();
        let scorer = Scorer::new(&est, &w.field, w.origin, GoalDescriptor::new(w.goal).unwrap(), 0);
        let oracle = WorldOracle::new(&w.plan, w.origin);
        let synth = SceneSynthesizer::new(SynthesizerKind::Perfect, 0);
        let model = NavModel::new(&scorer, &synth, &oracle, ActionScope::Local);
        let s = root(&w, &scorer);
        let x = greedy_action(&s).unwrap();
        let PlanAction::Move(x) = x else { panic!("expected a move, got {x:?}") };
        let (next, r) = model.step(&s, &PlanAction::Move(x)).unwrap();
        assert!(next.visited.contains(&x) && next.visited.len() == 2);
        assert_eq!(next.depth, 1);
        assert!(next.graph.len() > s.graph.len());
        let expected = s.estimate(NodeId(0)) - next.estimate(x);
        assert!((r - expected).abs() < 1e-12 && r > 0.0);
        assert!(next.graph.check_invariants().is_ok());
    }

    #[test]
    fn stop_step_is_terminal_and_unexpanded() {
        let w = world(Point::new(1.0, 0.0));
        let est = DistanceEstimator::oracle();
        let scorer = Scorer::new(&est, &w.field, w.origin, GoalDescriptor::new(w.goal).unwrap(), 0);
        let oracle = WorldOracle::new(&w.plan, w.origin);
        let synth = SceneSynthesizer::new(SynthesizerKind::Perfect, 0);
        let model = NavModel::new(&scorer, &synth, &oracle, ActionScope::Local);
        let s = root(&w, &scorer);
        assert!(model.is_stop(&PlanAction::Stop(NodeId(0))));
        let (next, r) = model.step(&s, &PlanAction::Stop(NodeId(0))).unwrap();
        assert_eq!(r, 5.0);
        assert_eq!(next.graph.len(), s.graph.len());
        assert_eq!(greedy_action(&s), Some(PlanAction::Stop(NodeId(0))));
    }

    #[test]
    fn search_heads_toward_goal() {
        let w = world(Point::new(7.0, 0.0));
        let est = DistanceEstimator::oracle();
        let scorer = Scorer::new(&est, &w.field, w.origin, GoalDescriptor::new(w.goal).unwrap(), 0);
        let oracle = WorldOracle::new(&w.plan, w.origin);
        let synth = SceneSynthesizer::new(SynthesizerKind::Perfect, 0);
        let model = NavModel::new(&scorer, &synth, &oracle, ActionScope::Local);
        let s = root(&w, &scorer);
        let out = plan(&model, s.clone(), &PlannerConfig::default()).unwrap();
        assert_eq!(out.stats.invariant_violations, 0);
        let PlanAction::Move(x) = out.action else { panic!("stopped too early") };
        assert!(s.estimate(x) < s.estimate(NodeId(0)));
        let again = plan(&model, s, &PlannerConfig::default()).unwrap();
        assert_eq!(again.action, out.action);
    }
}
