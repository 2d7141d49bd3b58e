use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use super::{distance, ClusterConfig, Topology, TopologyError, TopologyKind, WeightAssignment};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    High,
    Low,
    Undecided,
}

/// Result of one election, with the number of synchronous election rounds used.
#[derive(Debug, Clone, PartialEq)]
pub struct CbrpOutcome {
    pub topology: Topology,
    pub rounds: usize,
}

/// Runs the cluster-based election over the `live` agents.
///
/// The distributed protocol is simulated as synchronous rounds:
///
/// 1. Maintenance. A leader steps down when a neighbouring leader has a
///    strictly larger weight (all leaders decide on the same snapshot).
///    Followers with no leader in range become undecided.
/// 2. Election. Each round, an undecided agent that hears from a
///    neighbouring leader joins as follower. Otherwise, once it has seen no
///    larger undecided neighbour for `max_wait_rounds` consecutive rounds it
///    promotes itself. Equal weights are ordered by the lower id.
/// 3. Links. Each follower attaches to its nearest leader in range (lower id
///    on ties) with edges both ways; leaders are linked all-to-all.
///
/// Neighbours are agents strictly closer than `cfg.radius`.
pub fn cbrp(
    prev: &Topology,
    weights: &WeightAssignment,
    positions: &[[f64; 2]],
    live: &[usize],
    cfg: &ClusterConfig,
) -> Result<CbrpOutcome, TopologyError> {
    cfg.validate()?;
    let n = positions.len();
    if weights.len() != n {
        return Err(TopologyError::BadInput(alloc::format!(
            "{} weights for {n} positions",
            weights.len()
        )));
    }
    let mut live: Vec<usize> = live.to_vec();
    live.sort_unstable();
    live.dedup();
    if let Some(&bad) = live.iter().find(|&&i| i >= n) {
        return Err(TopologyError::BadInput(alloc::format!("agent {bad} has no position")));
    }

    let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, &i) in live.iter().enumerate() {
        for &j in &live[k + 1..] {
            if distance(positions[i], positions[j]) < cfg.radius {
                neighbours[i].push(j);
                neighbours[j].push(i);
            }
        }
    }
    let w = |i: usize| weights.get(i);
    let outranks = |j: usize, i: usize| w(j) > w(i) || (w(j) == w(i) && j < i);

    let mut role = vec![Role::Low; n];
    for &i in &live {
        if prev.high_level.contains(&i) {
            role[i] = Role::High;
        }
    }

    // Maintenance.
    let demote: Vec<usize> = live
        .iter()
        .copied()
        .filter(|&i| role[i] == Role::High && neighbours[i].iter().any(|&j| role[j] == Role::High && w(j) > w(i)))
        .collect();
    for i in demote {
        role[i] = Role::Low;
    }
    let orphaned: Vec<usize> = live
        .iter()
        .copied()
        .filter(|&i| role[i] == Role::Low && !neighbours[i].iter().any(|&j| role[j] == Role::High))
        .collect();
    for i in orphaned {
        role[i] = Role::Undecided;
    }

    // Election.
    let mut clear = vec![0usize; n];
    let mut rounds = 0;
    loop {
        let undecided: Vec<usize> = live.iter().copied().filter(|&i| role[i] == Role::Undecided).collect();
        if undecided.is_empty() {
            break;
        }
        if rounds == cfg.rounds_cap {
            return Err(TopologyError::RoundCapExceeded {
                rounds,
                undecided: undecided.len(),
            });
        }
        rounds += 1;
        let mut joined = Vec::new();
        for &i in &undecided {
            if neighbours[i].iter().any(|&j| role[j] == Role::High) {
                joined.push(i);
            }
        }
        for &i in &joined {
            role[i] = Role::Low;
        }
        let mut promoted = Vec::new();
        for &i in &undecided {
            if role[i] != Role::Undecided {
                continue;
            }
            let challenged = neighbours[i].iter().any(|&j| role[j] == Role::Undecided && outranks(j, i));
            clear[i] = if challenged { 0 } else { clear[i] + 1 };
            if clear[i] >= cfg.max_wait_rounds {
                promoted.push(i);
            }
        }
        for i in promoted {
            role[i] = Role::High;
        }
    }

    // Links.
    let high_level: BTreeSet<usize> = live.iter().copied().filter(|&i| role[i] == Role::High).collect();
    let low_level: BTreeSet<usize> = live.iter().copied().filter(|&i| role[i] == Role::Low).collect();
    let mut edges = BTreeSet::new();
    let mut groups: Vec<Vec<usize>> = high_level.iter().map(|&h| vec![h]).collect();
    let leader_slot = |h: usize| high_level.iter().position(|&x| x == h).unwrap();
    let mut unattached = Vec::new();
    for &i in &low_level {
        let leader = neighbours[i]
            .iter()
            .copied()
            .filter(|&j| role[j] == Role::High)
            .min_by(|&a, &b| {
                distance(positions[i], positions[a])
                    .total_cmp(&distance(positions[i], positions[b]))
                    .then(a.cmp(&b))
            });
        match leader {
            Some(h) => {
                edges.insert((i, h));
                edges.insert((h, i));
                groups[leader_slot(h)].push(i);
            }
            None => unattached.push(vec![i]),
        }
    }
    for &a in &high_level {
        for &b in &high_level {
            if a != b {
                edges.insert((a, b));
            }
        }
    }
    groups.extend(unattached);
    Ok(CbrpOutcome {
        topology: Topology {
            kind: TopologyKind::Hierarchical,
            high_level,
            low_level,
            edges,
            groups,
        },
        rounds,
    })
}
