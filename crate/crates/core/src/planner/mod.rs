//! Monte Carlo tree search over imagined world states.
//!
//! The search itself is generic over a [`SearchModel`]; [`nav`] supplies the
//! navigation model built on environment graphs, and [`dot`] renders trees.

pub mod dot;
pub mod nav;

use crate::seed;
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Debug;

pub use nav::{greedy_action, NavModel, PlanAction, WorldState};

/// Tolerance of the back-up identity checks.
pub const INVARIANT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub iterations: usize,
    /// Tree depth plus rollout depth never exceeds this.
    pub horizon: usize,
    /// UCT exploration constant.
    pub c: f64,
    pub gamma: f64,
    /// Rollout softmax temperature, meters.
    pub tau: f64,
    pub seed: u64,
    /// Verify the back-up identities after every iteration.
    pub check_invariants: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig { iterations: 50, horizon: 4, c: 1.0, gamma: 0.98, tau: 1.0, seed: 0, check_invariants: true }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0) || !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.tau >= 0.0) {
            return Err(Error::ParameterOutOfRange(format!(
                "planner needs C ≥ 0, γ ∈ (0, 1], τ ≥ 0 (got C={}, γ={}, τ={})",
                self.c, self.gamma, self.tau
            )));
        }
        Ok(())
    }

    /// Zero iterations or zero horizon means no search: greedy selection.
    pub fn is_greedy(&self) -> bool {
        self.iterations == 0 || self.horizon == 0
    }
}

/// A deterministic decision problem the tree search can explore.
pub trait SearchModel {
    type State: Clone;
    type Action: Clone + Debug;

    /// Available actions in a fixed order.
    fn actions(&self, s: &Self::State) -> Result<Vec<Self::Action>>;
    /// Whether taking `a` ends the episode.
    fn is_stop(&self, a: &Self::Action) -> bool;
    /// Successor state and immediate reward.
    fn step(&self, s: &Self::State, a: &Self::Action) -> Result<(Self::State, f64)>;
    /// Estimated distance-to-go per action; rollouts favour small values.
    fn rollout_scores(&self, s: &Self::State, actions: &[Self::Action]) -> Result<Vec<f64>>;

    fn action_label(&self, a: &Self::Action) -> String {
        format!("{a:?}")
    }
}

pub fn uct(q: f64, n_s: u64, n_sa: u64, c: f64) -> f64 {
    if n_sa == 0 {
        return f64::INFINITY;
    }
    q + c * ((n_s as f64).ln() / n_sa as f64).sqrt()
}

/// `Σ_k γ^(k−1) R_k`.
pub fn leaf_value(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

/// `softmax(−score / τ)`; `τ = 0` puts all mass on the first minimum.
pub fn rollout_distribution(scores: &[f64], tau: f64) -> Vec<f64> {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    if tau == 0.0 {
        let first = scores.iter().position(|&s| s == min).unwrap_or(0);
        return (0..scores.len()).map(|i| if i == first { 1.0 } else { 0.0 }).collect();
    }
    let w: Vec<f64> = scores.iter().map(|s| (-(s - min) / tau).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

fn sample(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeStats {
    pub label: String,
    pub n: u64,
    pub q: f64,
    /// Immediate reward, set on expansion.
    pub r: f64,
    pub child: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct TreeNode<S, A> {
    pub state: S,
    pub depth: usize,
    pub n: u64,
    pub v: f64,
    pub terminal: bool,
    pub actions: Vec<A>,
    pub edges: Vec<EdgeStats>,
}

#[derive(Clone, Debug)]
pub struct SearchTree<S, A> {
    pub nodes: Vec<TreeNode<S, A>>,
}

impl<S, A> SearchTree<S, A> {
    /// Checks `N(s) = 1 + Σ N(s,a)`, `V(s) = Σ N(s,a)Q(s,a) / N(s)` and the
    /// edge identities `N(s,a) = N(s')`, `Q(s,a) = R + γV(s')` on every node
    /// that has at least one expanded child. Returns the number of failures.
    pub fn count_violations(&self, gamma: f64) -> usize {
        let mut bad = 0;
        for node in &self.nodes {
            if node.edges.iter().all(|e| e.child.is_none()) {
                continue;
            }
            let sum_n: u64 = node.edges.iter().map(|e| e.n).sum();
            if node.n != 1 + sum_n {
                bad += 1;
            }
            let mean = node.edges.iter().map(|e| e.n as f64 * e.q).sum::<f64>() / node.n as f64;
            if (node.v - mean).abs() > INVARIANT_TOL {
                bad += 1;
            }
            for e in &node.edges {
                if let Some(c) = e.child {
                    let child = &self.nodes[c];
                    if e.n != child.n || (e.q - (e.r + gamma * child.v)).abs() > INVARIANT_TOL {
                        bad += 1;
                    }
                }
            }
        }
        bad
    }

    pub fn summary(&self) -> TreeSummary {
        TreeSummary {
            nodes: self
                .nodes
                .iter()
                .map(|n| SummaryNode { depth: n.depth, n: n.n, v: n.v, terminal: n.terminal, edges: n.edges.clone() })
                .collect(),
        }
    }
}

/// State-free copy of a search tree for reports and visualisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeSummary {
    pub nodes: Vec<SummaryNode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryNode {
    pub depth: usize,
    pub n: u64,
    pub v: f64,
    pub terminal: bool,
    pub edges: Vec<EdgeStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub iterations: usize,
    pub tree_nodes: usize,
    /// Back-up identity failures summed over all iterations (checked only
    /// when enabled).
    pub invariant_violations: usize,
    pub invariant_checks: usize,
}

#[derive(Clone, Debug)]
pub struct PlanOutcome<S, A> {
    pub action: A,
    pub action_index: usize,
    pub q: f64,
    pub tree: SearchTree<S, A>,
    pub stats: PlanStats,
}

struct Search<'m, M: SearchModel> {
    model: &'m M,
    cfg: &'m PlannerConfig,
    tree: SearchTree<M::State, M::Action>,
    rng: rand_chacha::ChaCha8Rng,
}

impl<M: SearchModel> Search<'_, M> {
    fn make_node(&self, state: M::State, depth: usize, stop: bool) -> Result<TreeNode<M::State, M::Action>> {
        let actions = if stop || depth >= self.cfg.horizon { Vec::new() } else { self.model.actions(&state)? };
        let edges = actions
            .iter()
            .map(|a| EdgeStats { label: self.model.action_label(a), n: 0, q: 0.0, r: 0.0, child: None })
            .collect();
        Ok(TreeNode { state, depth, n: 1, v: 0.0, terminal: actions.is_empty(), actions, edges })
    }

    fn select_edge(&self, node: usize) -> usize {
        let node = &self.tree.nodes[node];
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, e) in node.edges.iter().enumerate() {
            let val = uct(e.q, node.n, e.n, self.cfg.c);
            if val > best_val {
                best = i;
                best_val = val;
            }
        }
        best
    }

    fn rollout(&mut self, leaf: usize) -> Result<f64> {
        let node = &self.tree.nodes[leaf];
        let k = self.cfg.horizon.saturating_sub(node.depth);
        let mut state = node.state.clone();
        let mut actions = node.actions.clone();
        let mut rewards = Vec::with_capacity(k);
        for step in 0..k {
            if step > 0 {
                actions = self.model.actions(&state)?;
            }
            if actions.is_empty() {
                break;
            }
            let scores = self.model.rollout_scores(&state, &actions)?;
            let i = sample(&rollout_distribution(&scores, self.cfg.tau), &mut self.rng);
            let (next, r) = self.model.step(&state, &actions[i])?;
            rewards.push(r);
            if self.model.is_stop(&actions[i]) {
                break;
            }
            state = next;
        }
        Ok(leaf_value(&rewards, self.cfg.gamma))
    }

    fn iterate(&mut self) -> Result<()> {
        let mut path: Vec<(usize, usize)> = Vec::new();
        let mut cur = 0;
        loop {
            if self.tree.nodes[cur].terminal {
                // Revisiting a terminal state only adds to its count.
                if !path.is_empty() || cur != 0 {
                    self.tree.nodes[cur].n += 1;
                }
                break;
            }
            let e = self.select_edge(cur);
            path.push((cur, e));
            if let Some(child) = self.tree.nodes[cur].edges[e].child {
                cur = child;
                continue;
            }
            let parent = &self.tree.nodes[cur];
            let action = parent.actions[e].clone();
            let (state, reward) = self.model.step(&parent.state, &action)?;
            let child = self.make_node(state, parent.depth + 1, self.model.is_stop(&action))?;
            let id = self.tree.nodes.len();
            self.tree.nodes.push(child);
            self.tree.nodes[cur].edges[e].r = reward;
            self.tree.nodes[cur].edges[e].child = Some(id);
            if !self.tree.nodes[id].terminal {
                self.tree.nodes[id].v = self.rollout(id)?;
            }
            break;
        }
        self.backup(&path);
        Ok(())
    }

    fn backup(&mut self, path: &[(usize, usize)]) {
        let gamma = self.cfg.gamma;
        for &(s, e) in path.iter().rev() {
            let child = self.tree.nodes[s].edges[e].child.expect("expanded on the path");
            let (cn, cv) = (self.tree.nodes[child].n, self.tree.nodes[child].v);
            let node = &mut self.tree.nodes[s];
            let edge = &mut node.edges[e];
            edge.n = cn;
            edge.q = edge.r + gamma * cv;
            node.n = 1 + node.edges.iter().map(|e| e.n).sum::<u64>();
            node.v = node.edges.iter().map(|e| e.n as f64 * e.q).sum::<f64>() / node.n as f64;
        }
    }
}

/// Runs `cfg.iterations` select → expand → rollout → back-up cycles from
/// `root` and returns the root action with the highest `Q` among visited
/// edges (ties: lowest index).
pub fn plan<M: SearchModel>(
    model: &M,
    root: M::State,
    cfg: &PlannerConfig,
) -> Result<PlanOutcome<M::State, M::Action>> {
    cfg.validate()?;
    if cfg.is_greedy() {
        return Err(Error::ParameterOutOfRange("tree search needs iterations ≥ 1 and horizon ≥ 1".into()));
    }
    let mut search =
        Search { model, cfg, tree: SearchTree { nodes: Vec::new() }, rng: seed::rng(cfg.seed, &[0x6d63_7473]) };
    let root = search.make_node(root, 0, false)?;
    if root.actions.is_empty() {
        return Err(Error::DeadEnd);
    }
    search.tree.nodes.push(root);
    let mut stats = PlanStats { iterations: 0, tree_nodes: 0, invariant_violations: 0, invariant_checks: 0 };
    for _ in 0..cfg.iterations {
        search.iterate()?;
        stats.iterations += 1;
        if cfg.check_invariants {
            stats.invariant_checks += 1;
            stats.invariant_violations += search.tree.count_violations(cfg.gamma);
        }
    }
    debug_assert_eq!(stats.invariant_violations, 0, "back-up identities violated");
    let root = &search.tree.nodes[0];
    let (action_index, q) = root
        .edges
        .iter()
        .enumerate()
        .filter(|(_, e)| e.n > 0)
        .fold(None, |best: Option<(usize, f64)>, (i, e)| match best {
            Some((_, bq)) if bq >= e.q => best,
            _ => Some((i, e.q)),
        })
        .expect("at least one root edge is visited");
    stats.tree_nodes = search.tree.nodes.len();
    Ok(PlanOutcome { action: root.actions[action_index].clone(), action_index, q, tree: search.tree, stats })
}

#[cfg(test)]
pub(crate) mod toy {
    //! Small explicit decision trees with known rewards.
    use super::*;

    #[derive(Clone, Debug)]
    pub struct ToyNode {
        pub children: Vec<(usize, f64, bool)>,
        pub score: f64,
    }

    /// State = node index; actions = child slots.
    #[derive(Clone, Debug)]
    pub struct Toy {
        pub nodes: Vec<ToyNode>,
    }

    impl SearchModel for Toy {
        type State = usize;
        type Action = usize;

        fn actions(&self, s: &usize) -> Result<Vec<usize>> {
            Ok((0..self.nodes[*s].children.len()).collect())
        }

        fn is_stop(&self, _a: &usize) -> bool {
            false
        }

        fn step(&self, s: &usize, a: &usize) -> Result<(usize, f64)> {
            let (c, r, _) = self.nodes[*s].children[*a];
            Ok((c, r))
        }

        fn rollout_scores(&self, s: &usize, actions: &[usize]) -> Result<Vec<f64>> {
            Ok(actions.iter().map(|a| self.nodes[self.nodes[*s].children[*a].0].score).collect())
        }
    }

    impl Toy {
        pub fn random(seed: u64, depth: usize, branching: usize) -> Toy {
            let mut rng = crate::seed::rng(seed, &[0x746f79]);
            let mut nodes = vec![ToyNode { children: vec![], score: 0.0 }];
            let mut frontier = vec![(0usize, 0usize)];
            while let Some((id, d)) = frontier.pop() {
                if d == depth {
                    continue;
                }
                let b = rng.random_range(1..=branching);
                for _ in 0..b {
                    let c = nodes.len();
                    nodes.push(ToyNode { children: vec![], score: rng.random_range(0.0..5.0) });
                    nodes[id].children.push((c, rng.random_range(-3.0..3.0), false));
                    frontier.push((c, d + 1));
                }
            }
            Toy { nodes }
        }

        /// Exhaustive max-backup value of state `s` with `h` steps left.
        pub fn max_value(&self, s: usize, h: usize, gamma: f64) -> f64 {
            if h == 0 || self.nodes[s].children.is_empty() {
                return 0.0;
            }
            self.nodes[s]
                .children
                .iter()
                .map(|&(c, r, _)| r + gamma * self.max_value(c, h - 1, gamma))
                .fold(f64::NEG_INFINITY, f64::max)
        }
    }
}
