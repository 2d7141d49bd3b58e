//! Communication graphs: weight-driven hierarchical election, baseline
//! structures, and per-step message cost accounting.

mod baseline;
mod cbrp;
mod cost;

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

pub use baseline::build_baseline;
pub use cbrp::{cbrp, CbrpOutcome};
pub use cost::{account_cost, CostReport};

#[derive(Debug, Clone, PartialEq)]
pub enum TopologyError {
    RoundCapExceeded { rounds: usize, undecided: usize },
    InvalidConfig(String),
    UnknownKind(String),
    BadInput(String),
}

impl fmt::Display for TopologyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyError::RoundCapExceeded { rounds, undecided } => {
                write!(f, "election did not converge in {rounds} rounds ({undecided} agents undecided)")
            }
            TopologyError::InvalidConfig(m) => write!(f, "invalid cluster config: {m}"),
            TopologyError::UnknownKind(k) => write!(f, "unknown topology kind {k:?}"),
            TopologyError::BadInput(m) => write!(f, "bad topology input: {m}"),
        }
    }
}

impl core::error::Error for TopologyError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum TopologyKind {
    Hierarchical,
    FullyConnected,
    Star,
    Neighboring,
    Tree,
    None,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 6] = [
        TopologyKind::Hierarchical,
        TopologyKind::FullyConnected,
        TopologyKind::Star,
        TopologyKind::Neighboring,
        TopologyKind::Tree,
        TopologyKind::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TopologyKind::Hierarchical => "hierarchical",
            TopologyKind::FullyConnected => "fully-connected",
            TopologyKind::Star => "star",
            TopologyKind::Neighboring => "neighboring",
            TopologyKind::Tree => "tree",
            TopologyKind::None => "none",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TopologyKind {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| TopologyError::UnknownKind(s.into()))
    }
}

/// Communication weight of one agent: its bid to become a group leader.
pub type Weight = u8;

/// Number of distinct weight levels.
pub const WEIGHT_LEVELS: usize = 3;

/// Per-agent weights in `{0, 1, 2}`, indexed by agent id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightAssignment {
    weights: Vec<Weight>,
}

impl WeightAssignment {
    pub fn new(weights: Vec<Weight>) -> Result<Self, TopologyError> {
        if let Some(w) = weights.iter().find(|&&w| w as usize >= WEIGHT_LEVELS) {
            return Err(TopologyError::BadInput(alloc::format!("weight {w} outside 0..{WEIGHT_LEVELS}")));
        }
        Ok(Self { weights })
    }

    pub fn get(&self, id: usize) -> Weight {
        self.weights[id]
    }

    pub fn as_slice(&self) -> &[Weight] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// The same weight for all `agents` (the fixed-weight ablation).
pub fn fixed_weights(agents: usize, level: Weight) -> Result<WeightAssignment, TopologyError> {
    WeightAssignment::new(alloc::vec![level; agents])
}

/// The graph of one step for any kind. Only the hierarchical election reads
/// `prev` and `weights`; baselines connect agents closer than `cfg.radius`.
pub fn build_topology(
    kind: TopologyKind,
    prev: &Topology,
    weights: &WeightAssignment,
    positions: &[[f64; 2]],
    live: &[usize],
    cfg: &ClusterConfig,
) -> Result<Topology, TopologyError> {
    match kind {
        TopologyKind::Hierarchical => Ok(cbrp(prev, weights, positions, live, cfg)?.topology),
        _ => build_baseline(kind, positions, live, cfg.radius),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ClusterConfig {
    /// Neighbourhood radius; agents strictly closer than this are neighbours.
    pub radius: f64,
    /// Rounds an undecided agent must go unchallenged before promoting itself.
    pub max_wait_rounds: usize,
    pub rounds_cap: usize,
}

impl ClusterConfig {
    pub fn with_radius(radius: f64) -> Self {
        Self {
            radius,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.radius.is_nan() || self.radius <= 0.0 {
            return Err(TopologyError::InvalidConfig("radius must be positive".into()));
        }
        if self.max_wait_rounds == 0 {
            return Err(TopologyError::InvalidConfig("max_wait_rounds must be at least 1".into()));
        }
        if self.rounds_cap < 2 * self.max_wait_rounds {
            return Err(TopologyError::InvalidConfig("rounds_cap must be at least 2 * max_wait_rounds".into()));
        }
        Ok(())
    }
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            radius: 0.6,
            max_wait_rounds: 2,
            rounds_cap: 16,
        }
    }
}

/// A communication graph over the live agents.
///
/// `groups` lists the communication groups: for hierarchical graphs each
/// group starts with its leader followed by its attached followers; for
/// the tree baseline the group order is the chaining order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub kind: TopologyKind,
    pub high_level: BTreeSet<usize>,
    pub low_level: BTreeSet<usize>,
    pub edges: BTreeSet<(usize, usize)>,
    pub groups: Vec<Vec<usize>>,
}

impl Topology {
    /// No agents, no edges: the state before the first election of an episode.
    pub fn empty(kind: TopologyKind) -> Self {
        Self {
            kind,
            high_level: BTreeSet::new(),
            low_level: BTreeSet::new(),
            edges: BTreeSet::new(),
            groups: Vec::new(),
        }
    }

    pub fn live(&self) -> BTreeSet<usize> {
        self.high_level.union(&self.low_level).copied().collect()
    }

    /// Leader of a hierarchical follower, if attached.
    pub fn leader_of(&self, id: usize) -> Option<usize> {
        if self.kind != TopologyKind::Hierarchical || !self.low_level.contains(&id) {
            return None;
        }
        self.groups
            .iter()
            .find(|g| g.len() > 1 && g[1..].contains(&id))
            .map(|g| g[0])
    }

    /// Checks the structural invariants; returns a description of each violation.
    pub fn violations(&self, live: &[usize], positions: &[[f64; 2]], weights: Option<&WeightAssignment>, radius: f64) -> Vec<String> {
        let mut out = Vec::new();
        let live_set: BTreeSet<usize> = live.iter().copied().collect();
        if self.high_level.intersection(&self.low_level).next().is_some() {
            out.push("high and low sets overlap".into());
        }
        if self.live() != live_set {
            out.push("partition does not cover exactly the live agents".into());
        }
        for &(a, b) in &self.edges {
            if !live_set.contains(&a) || !live_set.contains(&b) || a == b {
                out.push(alloc::format!("edge {a}->{b} has a bad endpoint"));
            }
        }
        if self.kind == TopologyKind::Hierarchical {
            for &i in &self.low_level {
                let near_leader = self.high_level.iter().any(|&h| distance(positions[i], positions[h]) < radius);
                let attached = self.high_level.iter().any(|&h| self.edges.contains(&(i, h)));
                if near_leader && !attached {
                    out.push(alloc::format!("follower {i} has a leader in range but no leader edge"));
                }
            }
            if let Some(w) = weights {
                for &a in &self.high_level {
                    for &b in &self.high_level {
                        if a != b && distance(positions[a], positions[b]) < radius && w.get(b) > w.get(a) {
                            out.push(alloc::format!("leader {a} is dominated by leader {b} within radius"));
                        }
                    }
                }
            }
        }
        out
    }
}

pub(crate) fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    libm::sqrt(dx * dx + dy * dy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse_and_reject_unknown() {
        for k in TopologyKind::ALL {
            assert_eq!(k.as_str().parse::<TopologyKind>().unwrap(), k);
            assert_eq!(TopologyKind::from_code(k.code()), Some(k));
        }
        assert!(matches!("ring".parse::<TopologyKind>(), Err(TopologyError::UnknownKind(_))));
    }

    #[test]
    fn fixed_weight_assignments() {
        assert_eq!(fixed_weights(5, 2).unwrap().as_slice(), &[2; 5]);
        assert!(fixed_weights(0, 1).unwrap().is_empty());
        assert!(fixed_weights(3, 3).is_err());
    }

    #[test]
    fn cluster_config_bounds() {
        assert!(ClusterConfig::default().validate().is_ok());
        assert!(ClusterConfig::with_radius(0.0).validate().is_err());
        let c = ClusterConfig {
            rounds_cap: 3,
            ..ClusterConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
