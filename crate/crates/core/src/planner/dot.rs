//! Graphviz rendering of search trees.
//!
//! Node colour encodes `V(s)` and edge colour `Q(s,a)`, both min-max
//! normalised over the tree onto `[0, 1]` (0 = blue, 1 = red). Raw values
//! are kept as attributes so the file can be parsed back.

use super::TreeSummary;
use crate::{Error, Result};
use std::fmt::Write;

fn normalise(values: impl Iterator<Item = f64> + Clone) -> impl Fn(f64) -> f64 {
    let lo = values.clone().fold(f64::INFINITY, f64::min);
    let hi = values.fold(f64::NEG_INFINITY, f64::max);
    move |x| if hi > lo { (x - lo) / (hi - lo) } else { 1.0 }
}

fn hsv(t: f64) -> String {
    format!("{:.3} 0.600 1.000", (1.0 - t) * 2.0 / 3.0)
}

pub fn to_dot(tree: &TreeSummary) -> String {
    let v_scale = normalise(tree.nodes.iter().map(|n| n.v));
    let q_scale = normalise(tree.nodes.iter().flat_map(|n| n.edges.iter().filter(|e| e.child.is_some()).map(|e| e.q)));
    let mut out = String::from("digraph search_tree {\n  node [style=filled];\n");
    for (i, n) in tree.nodes.iter().enumerate() {
        let t = v_scale(n.v);
        let _ = writeln!(
            out,
            "  s{i} [label=\"N={} V={:.3}\", n={}, v={:?}, v_norm={:?}, depth={}, terminal={}, fillcolor=\"{}\"];",
            n.n,
            n.v,
            n.n,
            n.v,
            t,
            n.depth,
            n.terminal,
            hsv(t)
        );
    }
    for (i, n) in tree.nodes.iter().enumerate() {
        for e in &n.edges {
            let Some(c) = e.child else { continue };
            let t = q_scale(e.q);
            let _ = writeln!(
                out,
                "  s{i} -> s{c} [label=\"{} N={} Q={:.3}\", n={}, q={:?}, q_norm={:?}, color=\"{}\"];",
                e.label,
                e.n,
                e.q,
                e.n,
                e.q,
                t,
                hsv(t)
            );
        }
    }
    out.push_str("}\n");
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct DotNode {
    pub id: usize,
    pub n: u64,
    pub v: f64,
    pub v_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DotEdge {
    pub from: usize,
    pub to: usize,
    pub n: u64,
    pub q: f64,
    pub q_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DotTree {
    pub nodes: Vec<DotNode>,
    pub edges: Vec<DotEdge>,
}

fn attr<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
    let pat = format!(", {key}=");
    let start = line.find(&pat).ok_or_else(|| Error::Malformed(format!("missing {key} in `{line}`")))? + pat.len();
    let rest = &line[start..];
    let end = rest.find([',', ']']).unwrap_or(rest.len());
    rest[..end].trim().parse().map_err(|_| Error::Malformed(format!("bad {key} in `{line}`")))
}

fn state_id(s: &str) -> Result<usize> {
    s.trim()
        .strip_prefix('s')
        .and_then(|x| x.parse().ok())
        .ok_or_else(|| Error::Malformed(format!("bad state id `{s}`")))
}

/// Reads back the statistics written by [`to_dot`].
pub fn parse_dot(text: &str) -> Result<DotTree> {
    let mut tree = DotTree::default();
    for line in text.lines().map(str::trim) {
        if !line.starts_with('s') {
            continue;
        }
        let head = &line[..line.find('[').unwrap_or(line.len())];
        if let Some((from, to)) = head.split_once("->") {
            tree.edges.push(DotEdge {
                from: state_id(from)?,
                to: state_id(to)?,
                n: attr(line, "n")?,
                q: attr(line, "q")?,
                q_norm: attr(line, "q_norm")?,
            });
        } else {
            tree.nodes.push(DotNode {
                id: state_id(head)?,
                n: attr(line, "n")?,
                v: attr(line, "v")?,
                v_norm: attr(line, "v_norm")?,
            });
        }
    }
    Ok(tree)
}
