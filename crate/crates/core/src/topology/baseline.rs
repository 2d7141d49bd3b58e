use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use super::{distance, Topology, TopologyError, TopologyKind};

/// Connected components of the within-radius graph, each sorted, ordered by smallest id.
fn components(live: &[usize], positions: &[[f64; 2]], radius: f64) -> Vec<Vec<usize>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &start in live {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for &j in live {
                if !seen.contains(&j) && distance(positions[i], positions[j]) < radius {
                    seen.insert(j);
                    comp.push(j);
                    stack.push(j);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Builds a non-learned communication structure over the `live` agents.
///
/// - fully-connected: every ordered pair.
/// - star: the lowest live id is the hub, linked both ways with every other agent.
/// - neighboring: both directions between every pair closer than `radius`.
/// - tree: the neighbouring graph plus one link from each component's lowest id
///   to the next component's, chaining components in ascending order.
/// - none: no edges.
pub fn build_baseline(
    kind: TopologyKind,
    positions: &[[f64; 2]],
    live: &[usize],
    radius: f64,
) -> Result<Topology, TopologyError> {
    let mut live: Vec<usize> = live.to_vec();
    live.sort_unstable();
    live.dedup();
    if let Some(&bad) = live.iter().find(|&&i| i >= positions.len()) {
        return Err(TopologyError::BadInput(alloc::format!("agent {bad} has no position")));
    }
    let all: BTreeSet<usize> = live.iter().copied().collect();
    let mut topo = Topology {
        kind,
        high_level: BTreeSet::new(),
        low_level: all.clone(),
        edges: BTreeSet::new(),
        groups: Vec::new(),
    };
    match kind {
        TopologyKind::Hierarchical => {
            return Err(TopologyError::UnknownKind("hierarchical is built by the election".into()))
        }
        TopologyKind::FullyConnected => {
            for &a in &live {
                for &b in &live {
                    if a != b {
                        topo.edges.insert((a, b));
                    }
                }
            }
            if !live.is_empty() {
                topo.groups.push(live.clone());
            }
        }
        TopologyKind::Star => {
            if let Some(&hub) = live.first() {
                topo.low_level.remove(&hub);
                topo.high_level.insert(hub);
                for &i in &live[1..] {
                    topo.edges.insert((i, hub));
                    topo.edges.insert((hub, i));
                }
                topo.groups.push(live.clone());
            }
        }
        TopologyKind::Neighboring | TopologyKind::Tree => {
            for (k, &a) in live.iter().enumerate() {
                for &b in &live[k + 1..] {
                    if distance(positions[a], positions[b]) < radius {
                        topo.edges.insert((a, b));
                        topo.edges.insert((b, a));
                    }
                }
            }
            topo.groups = components(&live, positions, radius);
            if kind == TopologyKind::Tree {
                for pair in topo.groups.windows(2) {
                    topo.edges.insert((pair[0][0], pair[1][0]));
                }
            }
        }
        TopologyKind::None => {
            topo.groups = live.iter().map(|&i| vec![i]).collect();
        }
    }
    Ok(topo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, spacing: f64) -> Vec<[f64; 2]> {
        (0..n).map(|i| [i as f64 * spacing, 0.0]).collect()
    }

    #[test]
    fn fully_connected_edge_count() {
        let t = build_baseline(TopologyKind::FullyConnected, &line(4, 1.0), &[0, 1, 2, 3], 0.5).unwrap();
        assert_eq!(t.edges.len(), 12);
    }

    #[test]
    fn star_edge_count() {
        let t = build_baseline(TopologyKind::Star, &line(5, 1.0), &[0, 1, 2, 3, 4], 0.5).unwrap();
        assert_eq!(t.edges.len(), 8);
        assert!(t.edges.iter().all(|&(a, b)| a == 0 || b == 0));
    }

    #[test]
    fn neighboring_links_only_adjacent_collinear_agents() {
        // Adjacent gaps of 0.3 are within radius 0.5; the outer pair (0.6) is not.
        let t = build_baseline(TopologyKind::Neighboring, &line(3, 0.3), &[0, 1, 2], 0.5).unwrap();
        let edges: Vec<_> = t.edges.iter().copied().collect();
        assert_eq!(edges, vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
    }

    #[test]
    fn tree_chains_components() {
        let pos = [[0.0, 0.0], [0.1, 0.0], [5.0, 0.0], [9.0, 0.0], [9.1, 0.0]];
        let t = build_baseline(TopologyKind::Tree, &pos, &[0, 1, 2, 3, 4], 0.5).unwrap();
        assert_eq!(t.groups, vec![vec![0, 1], vec![2], vec![3, 4]]);
        assert!(t.edges.contains(&(0, 2)) && t.edges.contains(&(2, 3)));
        assert_eq!(t.edges.len(), 6);
    }

    #[test]
    fn none_has_no_edges() {
        let t = build_baseline(TopologyKind::None, &line(3, 0.1), &[0, 1, 2], 0.5).unwrap();
        assert!(t.edges.is_empty());
        assert_eq!(t.groups.len(), 3);
    }

    #[test]
    fn hierarchical_is_not_a_baseline() {
        assert!(build_baseline(TopologyKind::Hierarchical, &line(2, 0.1), &[0, 1], 0.5).is_err());
    }
}
