//! Message cost of the topology kinds over a scripted rollout: agents start
//! uniformly in the unit square, random-walk with step 0.1 and re-draw
//! their weights every step.

use lsc_core::harness::CostSummary;
use lsc_core::topology::{account_cost, build_topology, ClusterConfig, Topology, TopologyKind, WeightAssignment, WEIGHT_LEVELS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct CostRow {
    pub kind: TopologyKind,
    pub n: usize,
    pub summary: CostSummary,
}

impl CostRow {
    pub fn line(&self) -> String {
        let s = &self.summary;
        format!(
            "kind={} n={} steps={} n_msg={} n_step={} mean_bandwidth={} max_bandwidth={} mean_groups={} max_group={}",
            self.kind,
            self.n,
            s.steps,
            fmt_mean(s.mean_msg),
            fmt_mean(s.mean_step),
            fmt_mean(s.mean_bandwidth),
            s.max_bandwidth,
            fmt_mean(s.mean_groups),
            s.max_group
        )
    }
}

fn fmt_mean(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        format!("{x:.3}")
    }
}

/// Random positions for `steps` steps and weights for each, shared by every kind.
fn rollout(n: usize, steps: usize, seed: u64) -> Vec<(Vec<[f64; 2]>, Vec<u8>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let weights = (0..n).map(|_| rng.random_range(0..WEIGHT_LEVELS) as u8).collect();
        out.push((pos.clone(), weights));
        for p in &mut pos {
            let (dx, dy) = [(0.0, 0.1), (0.0, -0.1), (-0.1, 0.0), (0.1, 0.0), (0.0, 0.0)][rng.random_range(0..5)];
            *p = [(p[0] + dx).clamp(0.0, 1.0), (p[1] + dy).clamp(0.0, 1.0)];
        }
    }
    out
}

pub fn cost_rows(kinds: &[TopologyKind], n: usize, steps: usize, radius: f64, seed: u64) -> Result<Vec<CostRow>, CliError> {
    if n == 0 || steps == 0 {
        return Err(CliError::Usage("n and steps must be positive".into()));
    }
    let cluster = ClusterConfig::with_radius(radius);
    cluster.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let script = rollout(n, steps, seed);
    let live: Vec<usize> = (0..n).collect();
    let mut rows = Vec::new();
    for &kind in kinds {
        let mut prev = Topology::empty(kind);
        let mut summary = CostSummary::default();
        for (pos, w) in &script {
            let w = WeightAssignment::new(w.clone()).map_err(|e| CliError::Runtime(e.to_string()))?;
            let t = build_topology(kind, &prev, &w, pos, &live, &cluster).map_err(|e| CliError::Runtime(e.to_string()))?;
            summary.add(&account_cost(&t));
            prev = t;
        }
        rows.push(CostRow { kind, n, summary });
    }
    Ok(rows)
}
