use alloc::collections::BTreeMap;

use super::{Topology, TopologyKind};

/// Message cost of one communication pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CostReport {
    /// Directed messages exchanged.
    pub n_msg: usize,
    /// Sequential communication phases.
    pub n_step: usize,
    /// Largest number of messages one agent sends plus receives.
    pub n_bandwidth: usize,
    /// Number of groups.
    pub k: usize,
    /// Largest group size.
    pub b: usize,
}

/// Counts the messages of one pass over `topology`.
///
/// Every directed edge carries exactly one message per pass. For
/// hierarchical graphs these are the follower-to-leader, leader-to-leader
/// and leader-to-follower messages of the three phases; a leader's
/// update of its own embedding is local and not counted.
pub fn account_cost(topology: &Topology) -> CostReport {
    let mut degree: BTreeMap<usize, usize> = BTreeMap::new();
    for &(a, b) in &topology.edges {
        *degree.entry(a).or_default() += 1;
        *degree.entry(b).or_default() += 1;
    }
    let n_step = match topology.kind {
        TopologyKind::Tree => topology.groups.len().max(1),
        _ => 1,
    };
    CostReport {
        n_msg: topology.edges.len(),
        n_step,
        n_bandwidth: degree.values().copied().max().unwrap_or(0),
        k: topology.groups.len(),
        b: topology.groups.iter().map(|g| g.len()).max().unwrap_or(0),
    }
}
