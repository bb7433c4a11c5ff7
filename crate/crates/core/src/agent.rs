//! The episode loop: plan over imagined graphs, then drive to the chosen
//! waypoint with low-level actions and fold the real scan back into the
//! graph.

use crate::distfn::{DistanceEstimator, GoalDescriptor, Scorer};
use crate::env::{
    raycast_or_blocked, step, DistanceField, EpisodeSpec, FloorPlan, LowLevelAction, Pose, STEP_LENGTH, TURN_DEG,
};
use crate::geom::{angle_diff_deg, Point};
use crate::planner::nav::{greedy_action, ActionScope, NavModel, PlanAction, WorldState, STOP_RADIUS};
use crate::planner::{self, PlannerConfig, TreeSummary};
use crate::seed;
use crate::worldmodel::{
    expand_node, EnvGraph, GraphDump, NodeId, NodeStatus, SceneSynthesizer, SynthesizerKind, WorldOracle,
};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Heading error tolerated before walking, degrees.
pub const AIM_TOLERANCE_DEG: f64 = 7.5;
/// The controller stops once this close to its target.
pub const ARRIVAL_RADIUS: f64 = STEP_LENGTH / 2.0;
/// A waypoint counts as reached within one step length.
pub const REACHED_RADIUS: f64 = STEP_LENGTH;
/// Forward steps in a row that may fail to get closer before giving up.
const NO_PROGRESS_LIMIT: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct NavigateOutcome {
    pub actions: Vec<LowLevelAction>,
    /// Pose after each action.
    pub poses: Vec<Pose>,
    pub reached: bool,
    pub budget_exhausted: bool,
}

impl NavigateOutcome {
    pub fn final_pose(&self, start: Pose) -> Pose {
        self.poses.last().copied().unwrap_or(start)
    }
}

/// Turn toward `target` in 15° steps until within 7.5°, then step forward,
/// re-aiming after every step. A forward step that goes nowhere makes the
/// controller turn one step past the bearing and keep that heading until it
/// gets closer again, so a corner can be slid around. Never takes more than
/// `budget` actions.
pub fn navigate_to(plan: &FloorPlan, pose: Pose, target: Point, budget: usize) -> NavigateOutcome {
    let mut out = NavigateOutcome { actions: Vec::new(), poses: Vec::new(), reached: false, budget_exhausted: false };
    let mut pose = pose;
    let mut best = pose.position().distance(target);
    let mut stalled = 0;
    let mut tolerance = AIM_TOLERANCE_DEG;
    loop {
        let d = pose.position().distance(target);
        if d < ARRIVAL_RADIUS || stalled >= NO_PROGRESS_LIMIT {
            break;
        }
        if out.actions.len() >= budget {
            out.budget_exhausted = true;
            break;
        }
        let diff = angle_diff_deg(pose.heading as f64, (target - pose.position()).bearing_deg());
        let action = if diff > tolerance {
            LowLevelAction::TurnLeft15
        } else if diff < -tolerance {
            LowLevelAction::TurnRight15
        } else {
            LowLevelAction::Forward025
        };
        let before = pose;
        pose = step(plan, pose, action);
        out.actions.push(action);
        out.poses.push(pose);
        if action == LowLevelAction::Forward025 {
            let d = pose.position().distance(target);
            if d < best - 1e-9 {
                best = d;
                stalled = 0;
                tolerance = AIM_TOLERANCE_DEG;
            } else {
                stalled += 1;
            }
            if pose == before && out.actions.len() < budget {
                let past = if diff >= 0.0 { LowLevelAction::TurnLeft15 } else { LowLevelAction::TurnRight15 };
                pose = step(plan, pose, past);
                out.actions.push(past);
                out.poses.push(pose);
                tolerance = AIM_TOLERANCE_DEG + TURN_DEG as f64;
            }
        }
    }
    out.reached = pose.position().distance(target) <= REACHED_RADIUS;
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub max_low_level_steps: usize,
    pub max_rounds: usize,
    pub success_radius: f64,
    pub planner: PlannerConfig,
    pub synthesizer: SynthesizerKind,
    pub seed: u64,
    pub action_scope: ActionScope,
    /// Keep a summary of every search tree in the result.
    pub record_trees: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            max_low_level_steps: 500,
            max_rounds: 50,
            success_radius: 3.0,
            planner: PlannerConfig::default(),
            synthesizer: SynthesizerKind::Perfect,
            seed: 0,
            action_scope: ActionScope::Local,
            record_trees: true,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_low_level_steps == 0 || self.max_rounds == 0 || !(self.success_radius > 0.0) {
            return Err(Error::ParameterOutOfRange("episode budgets and success radius must be positive".into()));
        }
        self.planner.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Stopped,
    DeadEnd,
    StepBudget,
    RoundLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub round: usize,
    /// Size of the real graph the decision was planned on.
    pub graph_nodes: usize,
    pub action: PlanAction,
    /// Root `Q` of the chosen action; absent for greedy decisions.
    pub q: Option<f64>,
    pub estimate: f64,
    /// Graph-frame position the agent actually ended at.
    pub arrived_at: Point,
    pub reached: bool,
    pub invariant_violations: usize,
    pub tree: Option<TreeSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub poses: Vec<Pose>,
    pub actions: Vec<LowLevelAction>,
    pub decisions: Vec<Decision>,
}

impl Trajectory {
    /// Sum of straight segments between consecutive poses.
    pub fn length(&self) -> f64 {
        self.poses.windows(2).map(|w| w[0].position().distance(w[1].position())).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub termination: Termination,
    pub stopped: bool,
    pub trajectory: Trajectory,
    pub final_graph: GraphDump,
    /// Planning rounds that ran a tree search (or greedy selection).
    pub plan_steps: usize,
    pub invariant_violations: usize,
    pub invariant_checks: usize,
    /// Wall time spent deciding, seconds. Not serialised so results stay
    /// reproducible.
    #[serde(skip)]
    pub planning_seconds: f64,
}

impl EpisodeResult {
    pub fn final_pose(&self) -> Pose {
        *self.trajectory.poses.last().expect("trajectory starts with the initial pose")
    }

    pub fn seconds_per_step(&self) -> f64 {
        if self.plan_steps == 0 {
            0.0
        } else {
            self.planning_seconds / self.plan_steps as f64
        }
    }
}

struct Runner<'a> {
    plan: &'a FloorPlan,
    cfg: &'a EpisodeConfig,
    origin: Point,
    pose: Pose,
    traj: Trajectory,
}

impl Runner<'_> {
    fn budget_left(&self) -> usize {
        self.cfg.max_low_level_steps.saturating_sub(self.traj.actions.len())
    }

    /// Walks node to node along `route`; one step is kept in reserve for
    /// the final stop.
    fn walk(&mut self, g: &EnvGraph, route: &[NodeId]) -> (bool, bool) {
        let mut reached = true;
        for &v in route {
            let target = self.origin + g.nodes()[v.0].position;
            let out = navigate_to(self.plan, self.pose, target, self.budget_left().saturating_sub(1));
            self.pose = out.final_pose(self.pose);
            self.traj.actions.extend(&out.actions);
            self.traj.poses.extend(&out.poses);
            reached = out.reached;
            if out.budget_exhausted {
                return (reached, true);
            }
        }
        (reached, false)
    }
}

/// Runs one navigation episode. Failures to reach the goal are outcomes,
/// not errors; errors mean inconsistent inputs.
pub fn run_episode(
    plan: &FloorPlan,
    spec: &EpisodeSpec,
    cfg: &EpisodeConfig,
    estimator: &DistanceEstimator,
) -> Result<EpisodeResult> {
    cfg.validate()?;
    let origin = spec.start.position();
    let field = DistanceField::from_source(plan, spec.goal);
    let goal = GoalDescriptor::new(spec.goal - origin)?;
    let episode_key = seed::str_key(&spec.episode_id);
    let scorer = Scorer::new(estimator, &field, origin, goal, seed::derive(cfg.seed, &[episode_key, 1]));
    let oracle = WorldOracle::new(plan, origin);
    let synth = SceneSynthesizer::new(cfg.synthesizer, seed::derive(cfg.seed, &[episode_key, 2]));
    let model = NavModel::new(&scorer, &synth, &oracle, cfg.action_scope);

    let mut g = EnvGraph::new(raycast_or_blocked(plan, origin));
    let mut current = g.start();
    let mut runner = Runner {
        plan,
        cfg,
        origin,
        pose: spec.start,
        traj: Trajectory { poses: vec![spec.start], actions: Vec::new(), decisions: Vec::new() },
    };
    let mut termination = Termination::RoundLimit;
    let mut stopped = false;
    let mut plan_steps = 0;
    let mut planning_seconds = 0.0;
    let (mut violations, mut checks) = (0, 0);

    for round in 0..cfg.max_rounds {
        expand_node(&mut g, current, &synth, &oracle, NodeStatus::Frontier)?;
        let started = Instant::now();
        let root = WorldState::root(g.clone(), current, &scorer);
        let has_frontier = root.visited.len() < g.len();
        if !has_frontier && root.visited_distance() > STOP_RADIUS {
            termination = Termination::DeadEnd;
            break;
        }
        let (action, q, tree, bad) = if cfg.planner.is_greedy() {
            let a = greedy_action(&root).ok_or(Error::DeadEnd)?;
            (a, None, None, 0)
        } else {
            let pcfg = PlannerConfig {
                seed: seed::derive(cfg.planner.seed, &[episode_key, round as u64]),
                ..cfg.planner.clone()
            };
            let out = planner::plan(&model, root.clone(), &pcfg)?;
            checks += out.stats.invariant_checks;
            let tree = cfg.record_trees.then(|| out.tree.summary());
            (out.action, Some(out.q), tree, out.stats.invariant_violations)
        };
        planning_seconds += started.elapsed().as_secs_f64();
        plan_steps += 1;
        violations += bad;

        let target = action.node();
        let route = g
            .route(current, target, |n| n.status == NodeStatus::Visited || n.id == target)
            .ok_or(Error::UnknownNode(target.0))?;
        let (reached, exhausted) = runner.walk(&g, &route[1..]);
        let arrived_at = runner.pose.position() - origin;
        runner.traj.decisions.push(Decision {
            round,
            graph_nodes: g.len(),
            action,
            q,
            estimate: root.estimate(target),
            arrived_at,
            reached,
            invariant_violations: bad,
            tree,
        });
        if exhausted {
            termination = Termination::StepBudget;
            break;
        }
        match action {
            PlanAction::Stop(_) => {
                runner.traj.actions.push(LowLevelAction::Stop);
                runner.traj.poses.push(runner.pose);
                termination = Termination::Stopped;
                stopped = true;
                break;
            }
            PlanAction::Move(x) => {
                g.mark_visited(x, arrived_at, raycast_or_blocked(plan, runner.pose.position()))?;
                current = x;
            }
        }
        if runner.budget_left() <= 1 {
            termination = Termination::StepBudget;
            break;
        }
    }

    Ok(EpisodeResult {
        episode_id: spec.episode_id.clone(),
        termination,
        stopped,
        trajectory: runner.traj,
        final_graph: g.dump(),
        plan_steps,
        invariant_violations: violations,
        invariant_checks: checks,
        planning_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::DEFAULT_CELL_SIZE;
    use LowLevelAction::*;

    fn open_plan(w: usize, h: usize) -> FloorPlan {
        let mut plan = FloorPlan::closed(w, h, DEFAULT_CELL_SIZE);
        plan.carve_cells(1, 1, w - 1, h - 1);
        plan
    }

    fn spec(start: Pose, goal: Point, plan: &FloorPlan) -> EpisodeSpec {
        EpisodeSpec {
            episode_id: "test".into(),
            plan_seed: 0,
            start,
            goal,
            geodesic_ref: crate::env::geodesic_distance(plan, start.position(), goal).unwrap_or(f64::INFINITY),
        }
    }

    #[test]
    fn straight_ahead() {
        let plan = open_plan(60, 60);
        let out = navigate_to(&plan, Pose::new(2.0, 3.0, 0), Point::new(3.0, 3.0), 100);
        assert_eq!(out.actions, vec![Forward025; 4]);
        assert!(out.reached);
        assert!(out.final_pose(Pose::new(2.0, 3.0, 0)).position().distance(Point::new(3.0, 3.0)) <= 0.25);
    }

    #[test]
    fn quarter_turn_left() {
        let plan = open_plan(60, 60);
        let out = navigate_to(&plan, Pose::new(3.0, 3.0, 0), Point::new(3.0, 3.5), 100);
        let mut expected = vec![TurnLeft15; 6];
        expected.extend([Forward025; 2]);
        assert_eq!(out.actions, expected);
    }

    #[test]
    fn budget_is_never_exceeded() {
        let plan = open_plan(60, 60);
        let out = navigate_to(&plan, Pose::new(1.0, 1.0, 180), Point::new(4.0, 4.0), 5);
        assert_eq!(out.actions.len(), 5);
        assert!(out.budget_exhausted && !out.reached);
    }

    #[test]
    fn slides_around_a_wall_stub() {
        // A wall segment between start and target, open above it.
        let mut plan = open_plan(60, 60);
        for iy in 1..32 {
            plan.set_occupied(30, iy, true);
        }
        let start = Pose::new(2.5, 2.0, 0);
        let target = Point::new(3.5, 3.6);
        let out = navigate_to(&plan, start, target, 200);
        let end = out.final_pose(start).position();
        assert!(end.distance(target) <= 0.5, "ended at {end:?}");
        assert!(out.poses.iter().all(|p| plan.is_free(p.position())));
    }

    #[test]
    fn rounds_a_corner_into_a_corridor() {
        // Solid below y = 5 except a corridor at 5.1 <= x < 6.1. Aiming
        // straight down from just left of the opening walks into the corner.
        let mut plan = open_plan(100, 100);
        for iy in 1..50 {
            for ix in (1..51).chain(61..99) {
                plan.set_occupied(ix, iy, true);
            }
        }
        let start = Pose::new(5.0, 5.1, 270);
        let target = Point::new(5.3, 2.1);
        assert!(step(&plan, start, Forward025) == start);
        let out = navigate_to(&plan, start, target, 200);
        assert!(out.reached, "ended at {:?}", out.final_pose(start));
        assert!(out.poses.iter().all(|p| plan.is_free(p.position())));
    }

    #[test]
    fn short_open_episode_succeeds() {
        // Open-space waypoints all lie about 3 m out, none nearer the goal
        // than the start, and stopping within 3 m earns the full reward.
        let plan = open_plan(100, 100);
        let s = spec(Pose::new(5.0, 5.0, 0), Point::new(6.0, 5.0), &plan);
        let cfg = EpisodeConfig::default();
        let r = run_episode(&plan, &s, &cfg, &DistanceEstimator::oracle()).unwrap();
        assert!(r.stopped);
        assert_eq!(r.termination, Termination::Stopped);
        assert_eq!(r.trajectory.decisions.len(), 1);
        let ne = r.final_pose().position().distance(s.goal);
        assert!(ne <= 1.0 + 1e-12, "NE {ne}");
    }

    #[test]
    fn reaches_a_distant_goal_and_keeps_invariants() {
        let plan = open_plan(150, 100);
        let s = spec(Pose::new(2.0, 5.0, 90), Point::new(13.0, 5.0), &plan);
        let cfg = EpisodeConfig::default();
        let r = run_episode(&plan, &s, &cfg, &DistanceEstimator::oracle()).unwrap();
        assert!(r.stopped);
        assert!(r.final_pose().position().distance(s.goal) <= cfg.success_radius);
        assert_eq!(r.trajectory.actions.len() + 1, r.trajectory.poses.len());
        assert!(r.trajectory.actions.len() <= cfg.max_low_level_steps);
        assert_eq!(r.invariant_violations, 0);
        assert!(r.invariant_checks > 0);
        assert!(r.final_graph.nodes.iter().all(|n| n.status != NodeStatus::Imagined));
        for n in r.final_graph.nodes.iter().filter(|n| n.status == NodeStatus::Visited) {
            let p = s.start.position() + n.position;
            let near = r.trajectory.poses.iter().any(|q| q.position().distance(p) <= 0.5);
            assert!(near, "visited node {} far from the trajectory", n.id);
        }
    }

    #[test]
    fn sealed_goal_fails() {
        let mut plan = open_plan(100, 100);
        for i in 60..80 {
            plan.set_occupied(i, 60, true);
            plan.set_occupied(i, 79, true);
            plan.set_occupied(60, i, true);
            plan.set_occupied(79, i, true);
        }
        let s = spec(Pose::new(2.0, 2.0, 0), Point::new(7.0, 7.0), &plan);
        let r = run_episode(&plan, &s, &EpisodeConfig::default(), &DistanceEstimator::oracle()).unwrap();
        assert!(matches!(r.termination, Termination::DeadEnd | Termination::StepBudget | Termination::RoundLimit));
        assert!(!r.stopped);
    }

    #[test]
    fn episodes_are_reproducible() {
        let plan = open_plan(120, 120);
        let s = spec(Pose::new(2.0, 2.0, 45), Point::new(9.0, 8.0), &plan);
        let cfg = EpisodeConfig { synthesizer: SynthesizerKind::Noisy { sigma0: 0.3 }, ..EpisodeConfig::default() };
        let est = DistanceEstimator::new(crate::distfn::EstimatorKind::NoisyOracle { sigma: 1.0 }, None).unwrap();
        let a = run_episode(&plan, &s, &cfg, &est).unwrap();
        let b = run_episode(&plan, &s, &cfg, &est).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn greedy_config_skips_search() {
        let plan = open_plan(100, 100);
        let s = spec(Pose::new(2.0, 5.0, 0), Point::new(8.0, 5.0), &plan);
        let cfg = EpisodeConfig {
            planner: PlannerConfig { horizon: 0, ..PlannerConfig::default() },
            ..EpisodeConfig::default()
        };
        let r = run_episode(&plan, &s, &cfg, &DistanceEstimator::oracle()).unwrap();
        assert!(r.stopped);
        assert!(r.trajectory.decisions.iter().all(|d| d.q.is_none() && d.tree.is_none()));
        assert_eq!(r.invariant_checks, 0);
    }
}
