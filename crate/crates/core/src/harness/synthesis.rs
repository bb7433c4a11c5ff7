use crate::env::{generate_floorplan, sample_episode, FloorPlan, GenParams, Observation};
use crate::geom::Point;
use crate::seed;
use crate::worldmodel::{imagined_expand, EnvGraph, SceneSynthesizer, SynthesizerKind, WorldOracle};
use crate::Result;
use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

/// Per-ray RMSE between two scans.
pub fn scan_rmse(a: &Observation, b: &Observation) -> f64 {
    let n = a.rays().len().max(1) as f64;
    (a.rays().iter().zip(b.rays()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n).sqrt()
}

/// Synthesis error against imagination depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisCurve {
    pub sigma0: f64,
    pub chains: usize,
    /// Mean scan RMSE at depth `i + 1`.
    pub rmse: Vec<f64>,
    /// Chains that reached depth `i + 1`.
    pub samples: Vec<usize>,
}

/// Imagines `chains` random walks of up to `max_depth` hops from a real
/// scan, each hop synthesized from the previous imagined one, and compares
/// every imagined scan with the ground truth at its position.
pub fn synthesis_error_curve(sigma0: f64, max_depth: u32, chains: usize, seed: u64) -> Result<SynthesisCurve> {
    let plans: Vec<FloorPlan> =
        (0..10).map(|ps| generate_floorplan(ps, &GenParams::default())).collect::<Result<_>>()?;
    let synth = SceneSynthesizer::new(SynthesizerKind::Noisy { sigma0 }, seed);
    let mut sum = vec![0.0; max_depth as usize];
    let mut samples = vec![0usize; max_depth as usize];
    for c in 0..chains {
        let plan = &plans[c % plans.len()];
        let start = sample_episode(plan, seed::derive(seed, &[c as u64]))?.start.position();
        let oracle = WorldOracle::new(plan, start);
        let mut rng = seed::rng(seed, &[c as u64, 0x636861696e]);
        let mut g = EnvGraph::new(oracle.scan(Point::ORIGIN));
        let mut node = g.start();
        for depth in 1..=max_depth {
            let created = imagined_expand(&mut g, node, &synth, &oracle)?;
            let fresh: Vec<_> = created.into_iter().filter(|&id| g.nodes()[id.0].synthesis_depth == depth).collect();
            let Some(&next) = fresh.choose(&mut rng) else { break };
            let n = &g.nodes()[next.0];
            sum[depth as usize - 1] += scan_rmse(n.observation(), &oracle.scan(n.position));
            samples[depth as usize - 1] += 1;
            node = next;
        }
    }
    let rmse = sum.iter().zip(&samples).map(|(s, &k)| if k == 0 { f64::NAN } else { s / k as f64 }).collect();
    Ok(SynthesisCurve { sigma0, chains, rmse, samples })
}
