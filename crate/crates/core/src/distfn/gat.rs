//! One-layer graph attention network with an MLP regression head.
//!
//! Parameters live in a single flat vector so the optimizer, gradient
//! checks and checkpoints can treat them uniformly. Forward and backward
//! passes are written out by hand.

use crate::env::{Observation, MAX_RANGE, NUM_RAYS};
use crate::geom::Point;
use crate::seed;
use crate::worldmodel::{EdgeEmbedding, EnvGraph};
use rand::Rng;

use super::GoalDescriptor;

pub const HEADS: usize = 4;
pub const HIDDEN: usize = 32;
pub const MLP_HIDDEN: usize = 64;
pub const NODE_FEATURES: usize = NUM_RAYS + 2;
pub const EDGE_FEATURES: usize = 3;
/// Outputs are `OUTPUT_SCALE · softplus(·)` meters.
pub const OUTPUT_SCALE: f64 = 10.0;
/// Positions and goal offsets are divided by this before entering the net.
pub const POSITION_SCALE: f64 = 10.0;
/// Edge lengths are divided by this.
pub const EDGE_SCALE: f64 = 3.0;
const LEAKY_SLOPE: f64 = 0.2;
const PROJ: usize = HEADS * HIDDEN;

const W_OFF: usize = 0;
const WE_OFF: usize = W_OFF + PROJ * NODE_FEATURES;
const ASRC_OFF: usize = WE_OFF + PROJ * EDGE_FEATURES;
const ADST_OFF: usize = ASRC_OFF + PROJ;
const B1_OFF: usize = ADST_OFF + PROJ;
const W2_OFF: usize = B1_OFF + HIDDEN;
const B2_OFF: usize = W2_OFF + MLP_HIDDEN * HIDDEN;
const W3_OFF: usize = B2_OFF + MLP_HIDDEN;
const B3_OFF: usize = W3_OFF + MLP_HIDDEN;
pub const PARAM_COUNT: usize = B3_OFF + 1;

pub type NodeFeatures = [f64; NODE_FEATURES];
pub type EdgeFeatures = [f64; EDGE_FEATURES];

/// `[scan / 5, (X − p_v) / 10]`.
pub fn node_features(obs: &Observation, position: Point, goal: GoalDescriptor) -> NodeFeatures {
    let mut f = [0.0; NODE_FEATURES];
    for (dst, r) in f.iter_mut().zip(obs.rays()) {
        *dst = r / MAX_RANGE;
    }
    f[NUM_RAYS] = (goal.dx - position.x) / POSITION_SCALE;
    f[NUM_RAYS + 1] = (goal.dy - position.y) / POSITION_SCALE;
    f
}

pub fn edge_features(e: &EdgeEmbedding) -> EdgeFeatures {
    [e.cos, e.sin, e.dist / EDGE_SCALE]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn leaky_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-node linear projection and its attention scalars, reusable across
/// every neighbourhood the node takes part in.
#[derive(Clone, Debug)]
pub struct Projection {
    z: [f64; PROJ],
    src: [f64; HEADS],
    dst: [f64; HEADS],
}

/// A graph prepared for the network: features per node and, per node, its
/// neighbours (itself included with a zero edge) in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphInput {
    pub features: Vec<NodeFeatures>,
    pub neighbors: Vec<Vec<(usize, EdgeFeatures)>>,
}

impl GraphInput {
    pub fn from_graph(g: &EnvGraph, goal: GoalDescriptor) -> Self {
        let features = g.nodes().iter().map(|n| node_features(n.observation(), n.position, goal)).collect();
        let neighbors = g
            .nodes()
            .iter()
            .map(|n| {
                canonical_neighbors(g, n.id.0)
                    .into_iter()
                    .map(|(u, e)| (u, e.map(|e| edge_features(&e)).unwrap_or([0.0; EDGE_FEATURES])))
                    .collect()
            })
            .collect();
        GraphInput { features, neighbors }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Neighbours of `v` plus `v` itself (edge `None`), sorted by position so
/// that floating-point summation order does not depend on node ids.
pub(crate) fn canonical_neighbors(g: &EnvGraph, v: usize) -> Vec<(usize, Option<EdgeEmbedding>)> {
    let nodes = g.nodes();
    let mut list: Vec<(usize, Option<EdgeEmbedding>)> =
        std::iter::once((v, None)).chain(g.neighbors(nodes[v].id).iter().map(|(u, e)| (u.0, Some(*e)))).collect();
    list.sort_by(|a, b| {
        let (pa, pb) = (nodes[a.0].position, nodes[b.0].position);
        pa.x.total_cmp(&pb.x).then(pa.y.total_cmp(&pb.y)).then(a.0.cmp(&b.0))
    });
    list
}

/// Intermediates of one node's forward pass, kept for backprop.
#[derive(Clone, Debug)]
struct NodeTape {
    /// Per neighbour and head: attention weight and pre-activation logit.
    alpha: Vec<f64>,
    logit: Vec<f64>,
    /// Edge projections `W_e e_uv`, per neighbour.
    edge_proj: Vec<[f64; PROJ]>,
    c: [f64; HIDDEN],
    q: [f64; MLP_HIDDEN],
    s: f64,
}

impl Default for NodeTape {
    fn default() -> Self {
        NodeTape {
            alpha: Vec::new(),
            logit: Vec::new(),
            edge_proj: Vec::new(),
            c: [0.0; HIDDEN],
            q: [0.0; MLP_HIDDEN],
            s: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatParams {
    theta: Vec<f64>,
}

impl GatParams {
    /// Glorot-uniform weights; the output bias is set so that the untrained
    /// net predicts roughly `mean_label` everywhere.
    pub fn init(seed: u64, mean_label: f64) -> Self {
        let mut rng = seed::rng(seed, &[0x676174696e6974]);
        let mut theta = vec![0.0; PARAM_COUNT];
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, fan_out: usize, gain: f64| {
            let limit = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
            for t in &mut theta[range] {
                *t = rng.random_range(-limit..limit);
            }
        };
        fill(W_OFF..WE_OFF, NODE_FEATURES, HIDDEN, 1.0);
        fill(WE_OFF..ASRC_OFF, EDGE_FEATURES, HIDDEN, 1.0);
        fill(ASRC_OFF..B1_OFF, HIDDEN, 1, 1.0);
        fill(W2_OFF..B2_OFF, HIDDEN, MLP_HIDDEN, 1.0);
        fill(W3_OFF..B3_OFF, MLP_HIDDEN, 1, 0.1);
        let y = (mean_label / OUTPUT_SCALE).max(1e-3);
        // softplus⁻¹(y) = ln(eʸ − 1).
        theta[B3_OFF] = y.exp_m1().ln();
        GatParams { theta }
    }

    pub fn from_vec(theta: Vec<f64>) -> crate::Result<Self> {
        if theta.len() != PARAM_COUNT {
            return Err(crate::Error::Malformed(format!("expected {PARAM_COUNT} parameters, found {}", theta.len())));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(crate::Error::Malformed("non-finite parameter".into()));
        }
        Ok(GatParams { theta })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn project(&self, h: &NodeFeatures) -> Projection {
        let w = &self.theta[W_OFF..WE_OFF];
        let mut z = [0.0; PROJ];
        for (r, zr) in z.iter_mut().enumerate() {
            *zr = dot(&w[r * NODE_FEATURES..(r + 1) * NODE_FEATURES], h);
        }
        let mut src = [0.0; HEADS];
        let mut dst = [0.0; HEADS];
        for k in 0..HEADS {
            let zk = &z[k * HIDDEN..(k + 1) * HIDDEN];
            src[k] = dot(&self.theta[ASRC_OFF + k * HIDDEN..ASRC_OFF + (k + 1) * HIDDEN], zk);
            dst[k] = dot(&self.theta[ADST_OFF + k * HIDDEN..ADST_OFF + (k + 1) * HIDDEN], zk);
        }
        Projection { z, src, dst }
    }

    fn edge_projection(&self, e: &EdgeFeatures) -> [f64; PROJ] {
        let we = &self.theta[WE_OFF..ASRC_OFF];
        let mut g = [0.0; PROJ];
        if e.iter().all(|&x| x == 0.0) {
            return g;
        }
        for (r, gr) in g.iter_mut().enumerate() {
            *gr = dot(&we[r * EDGE_FEATURES..(r + 1) * EDGE_FEATURES], e);
        }
        g
    }

    /// Output of node `own` given its canonical neighbourhood (self included).
    pub fn node_output(&self, own: &Projection, nbrs: &[(&Projection, EdgeFeatures)]) -> f64 {
        self.node_forward(own, nbrs, None)
    }

    fn node_forward(
        &self,
        own: &Projection,
        nbrs: &[(&Projection, EdgeFeatures)],
        mut tape: Option<&mut NodeTape>,
    ) -> f64 {
        let n = nbrs.len();
        let edge_proj: Vec<[f64; PROJ]> = nbrs.iter().map(|(_, e)| self.edge_projection(e)).collect();
        let mut c = [0.0; HIDDEN];
        let mut alpha = vec![0.0; n * HEADS];
        let mut logit = vec![0.0; n * HEADS];
        for k in 0..HEADS {
            let a_src = &self.theta[ASRC_OFF + k * HIDDEN..ASRC_OFF + (k + 1) * HIDDEN];
            let mut max = f64::NEG_INFINITY;
            for (u, (p, _)) in nbrs.iter().enumerate() {
                let l = own.dst[k] + p.src[k] + dot(a_src, &edge_proj[u][k * HIDDEN..(k + 1) * HIDDEN]);
                logit[u * HEADS + k] = l;
                max = max.max(leaky(l));
            }
            let mut z = 0.0;
            for u in 0..n {
                let w = (leaky(logit[u * HEADS + k]) - max).exp();
                alpha[u * HEADS + k] = w;
                z += w;
            }
            for (u, (p, _)) in nbrs.iter().enumerate() {
                let a = alpha[u * HEADS + k] / z;
                alpha[u * HEADS + k] = a;
                for i in 0..HIDDEN {
                    c[i] += a * (p.z[k * HIDDEN + i] + edge_proj[u][k * HIDDEN + i]) / HEADS as f64;
                }
            }
        }
        for (i, ci) in c.iter_mut().enumerate() {
            *ci += self.theta[B1_OFF + i];
        }
        let t: Vec<f64> = c.iter().map(|&x| elu(x)).collect();
        let mut q = [0.0; MLP_HIDDEN];
        for (j, qj) in q.iter_mut().enumerate() {
            *qj = dot(&self.theta[W2_OFF + j * HIDDEN..W2_OFF + (j + 1) * HIDDEN], &t) + self.theta[B2_OFF + j];
        }
        let s = q.iter().enumerate().map(|(j, &x)| self.theta[W3_OFF + j] * elu(x)).sum::<f64>() + self.theta[B3_OFF];
        if let Some(tape) = &mut tape {
            tape.alpha = alpha;
            tape.logit = logit;
            tape.edge_proj = edge_proj;
            tape.c = c;
            tape.q = q;
            tape.s = s;
        }
        OUTPUT_SCALE * softplus(s)
    }

    /// Per-node predicted distances in meters.
    pub fn forward(&self, input: &GraphInput) -> Vec<f64> {
        let proj: Vec<Projection> = input.features.iter().map(|h| self.project(h)).collect();
        input
            .neighbors
            .iter()
            .enumerate()
            .map(|(v, nb)| {
                let nbrs: Vec<(&Projection, EdgeFeatures)> = nb.iter().map(|(u, e)| (&proj[*u], *e)).collect();
                self.node_output(&proj[v], &nbrs)
            })
            .collect()
    }

    /// Adds `weight · Σ_v (F(v) − y_v)²` to the loss and its gradient to `grad`.
    /// Returns the weighted loss contribution.
    pub fn loss_and_grad(&self, input: &GraphInput, labels: &[f64], weight: f64, grad: &mut [f64]) -> f64 {
        assert_eq!(labels.len(), input.len());
        assert_eq!(grad.len(), PARAM_COUNT);
        let proj: Vec<Projection> = input.features.iter().map(|h| self.project(h)).collect();
        let mut dz = vec![[0.0; PROJ]; input.len()];
        let mut dsrc = vec![[0.0; HEADS]; input.len()];
        let mut ddst = vec![[0.0; HEADS]; input.len()];
        let mut loss = 0.0;
        let mut tape = NodeTape::default();
        for (v, nb) in input.neighbors.iter().enumerate() {
            let nbrs: Vec<(&Projection, EdgeFeatures)> = nb.iter().map(|(u, e)| (&proj[*u], *e)).collect();
            let out = self.node_forward(&proj[v], &nbrs, Some(&mut tape));
            let err = out - labels[v];
            loss += weight * err * err;
            let dout = 2.0 * weight * err;

            // Head.
            let ds = dout * OUTPUT_SCALE * sigmoid(tape.s);
            grad[B3_OFF] += ds;
            let mut dq = [0.0; MLP_HIDDEN];
            for j in 0..MLP_HIDDEN {
                grad[W3_OFF + j] += ds * elu(tape.q[j]);
                dq[j] = ds * self.theta[W3_OFF + j] * elu_grad(tape.q[j]);
            }
            let t: Vec<f64> = tape.c.iter().map(|&x| elu(x)).collect();
            let mut dt = [0.0; HIDDEN];
            for j in 0..MLP_HIDDEN {
                grad[B2_OFF + j] += dq[j];
                let row = W2_OFF + j * HIDDEN;
                for i in 0..HIDDEN {
                    grad[row + i] += dq[j] * t[i];
                    dt[i] += dq[j] * self.theta[row + i];
                }
            }
            let mut dc = [0.0; HIDDEN];
            for i in 0..HIDDEN {
                dc[i] = dt[i] * elu_grad(tape.c[i]);
                grad[B1_OFF + i] += dc[i];
            }

            // Attention.
            for k in 0..HEADS {
                let do_k: Vec<f64> = dc.iter().map(|d| d / HEADS as f64).collect();
                let a_src = &self.theta[ASRC_OFF + k * HIDDEN..ASRC_OFF + (k + 1) * HIDDEN];
                let msg = |u: usize, i: usize| nbrs[u].0.z[k * HIDDEN + i] + tape.edge_proj[u][k * HIDDEN + i];
                let dalpha: Vec<f64> = (0..nb.len()).map(|u| (0..HIDDEN).map(|i| do_k[i] * msg(u, i)).sum()).collect();
                let mean: f64 = (0..nb.len()).map(|u| tape.alpha[u * HEADS + k] * dalpha[u]).sum();
                for (u, &(src_node, e)) in nb.iter().enumerate() {
                    let a = tape.alpha[u * HEADS + k];
                    let dl = a * (dalpha[u] - mean) * leaky_grad(tape.logit[u * HEADS + k]);
                    ddst[v][k] += dl;
                    dsrc[src_node][k] += dl;
                    for i in 0..HIDDEN {
                        // Logit term a_src · (W_e e): a_src and the edge projection.
                        grad[ASRC_OFF + k * HIDDEN + i] += dl * tape.edge_proj[u][k * HIDDEN + i];
                        let dm_edge = a * do_k[i] + dl * a_src[i];
                        dz[src_node][k * HIDDEN + i] += a * do_k[i];
                        if e.iter().any(|&x| x != 0.0) {
                            let row = WE_OFF + (k * HIDDEN + i) * EDGE_FEATURES;
                            for (j, ej) in e.iter().enumerate() {
                                grad[row + j] += dm_edge * ej;
                            }
                        }
                    }
                }
            }
        }

        // Attention scalars src = a_src·z, dst = a_dst·z feed back into z.
        for v in 0..input.len() {
            for k in 0..HEADS {
                for i in 0..HIDDEN {
                    let zi = proj[v].z[k * HIDDEN + i];
                    grad[ASRC_OFF + k * HIDDEN + i] += dsrc[v][k] * zi;
                    grad[ADST_OFF + k * HIDDEN + i] += ddst[v][k] * zi;
                    dz[v][k * HIDDEN + i] += dsrc[v][k] * self.theta[ASRC_OFF + k * HIDDEN + i]
                        + ddst[v][k] * self.theta[ADST_OFF + k * HIDDEN + i];
                }
            }
            let h = &input.features[v];
            for r in 0..PROJ {
                let d = dz[v][r];
                if d != 0.0 {
                    let row = &mut grad[W_OFF + r * NODE_FEATURES..W_OFF + (r + 1) * NODE_FEATURES];
                    for (g, x) in row.iter_mut().zip(h) {
                        *g += d * x;
                    }
                }
            }
        }
        loss
    }

    /// `weight · Σ_v (F(v) − y_v)²` without gradients.
    pub fn loss(&self, input: &GraphInput, labels: &[f64], weight: f64) -> f64 {
        self.forward(input).iter().zip(labels).map(|(p, y)| weight * (p - y) * (p - y)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    pub(crate) fn random_input(seed: u64, nodes: usize) -> (GraphInput, Vec<f64>) {
        let mut rng = seed::rng(seed, &[1]);
        let features: Vec<NodeFeatures> = (0..nodes)
            .map(|_| {
                let mut f = [0.0; NODE_FEATURES];
                for x in f.iter_mut() {
                    *x = rng.random_range(-1.0..1.0);
                }
                f
            })
            .collect();
        let mut neighbors: Vec<Vec<(usize, EdgeFeatures)>> = (0..nodes).map(|v| vec![(v, [0.0; 3])]).collect();
        for v in 1..nodes {
            let mut targets = vec![rng.random_range(0..v)];
            if v > 2 && rng.random_bool(0.5) {
                let w = rng.random_range(0..v);
                if w != targets[0] {
                    targets.push(w);
                }
            }
            for b in targets {
                let ang: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let d: f64 = rng.random_range(0.2..1.0);
                neighbors[v].push((b, [ang.cos(), ang.sin(), d]));
                neighbors[b].push((v, [-ang.cos(), -ang.sin(), d]));
            }
        }
        let labels = (0..nodes).map(|_| rng.random_range(0.0..20.0)).collect();
        (GraphInput { features, neighbors }, labels)
    }

    #[test]
    fn init_predicts_mean() {
        let p = GatParams::init(3, 8.0);
        let (input, _) = random_input(1, 6);
        for d in p.forward(&input) {
            assert!((d - 8.0).abs() < 2.0, "{d}");
        }
    }

    #[test]
    fn outputs_nonnegative_and_single_node_defined() {
        let p = GatParams::init(1, 5.0);
        let (input, _) = random_input(2, 1);
        let out = p.forward(&input);
        assert_eq!(out.len(), 1);
        assert!(out[0].is_finite() && out[0] >= 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = GatParams::init(7, 6.0);
        let mut p = p;
        // Perturb so every layer carries signal.
        let mut rng = seed::rng(5, &[]);
        for t in p.as_mut_slice() {
            *t += rng.random_range(-0.05..0.05);
        }
        let (input, labels) = random_input(4, 7);
        let mut grad = vec![0.0; PARAM_COUNT];
        p.loss_and_grad(&input, &labels, 0.1, &mut grad);
        let eps = 1e-5;
        let picks =
            [0, 500, WE_OFF + 7, ASRC_OFF + 3, ADST_OFF + 40, B1_OFF + 2, W2_OFF + 100, B2_OFF + 9, W3_OFF + 5, B3_OFF];
        for &i in &picks {
            let mut plus = p.clone();
            plus.as_mut_slice()[i] += eps;
            let mut minus = p.clone();
            minus.as_mut_slice()[i] -= eps;
            let fd = (plus.loss(&input, &labels, 0.1) - minus.loss(&input, &labels, 0.1)) / (2.0 * eps);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
            assert!(rel < 1e-4, "param {i}: analytic {} vs fd {fd}", grad[i]);
        }
    }
}
