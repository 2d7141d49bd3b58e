use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::topology::{Topology, TopologyKind};

/// One graph of a batch: its live agents in ascending id order and the
/// topology connecting them. Observation rows are supplied separately in the
/// same order.
#[derive(Debug, Clone, Copy)]
pub struct GraphSample<'a> {
    pub agents: &'a [usize],
    pub topology: &'a Topology,
}

/// Row-level index lists for a batch of graphs.
///
/// Leaders are numbered by "slot" in `leaders`; receivers of the
/// intra-group sharing phase are numbered in `receivers`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchIndex {
    pub rows: usize,
    /// First row of each sample.
    pub offsets: Vec<usize>,
    /// Row of each leader.
    pub leaders: Vec<usize>,
    /// Follower row → leader slot.
    pub up_src: Vec<usize>,
    pub up_dst: Vec<usize>,
    /// Leader slot → leader slot.
    pub inter_src: Vec<usize>,
    pub inter_dst: Vec<usize>,
    /// Leader slot → receiver slot (including each leader's self-message).
    pub down_src: Vec<usize>,
    pub down_dst: Vec<usize>,
    /// For each down message, the up message index it answers (self-messages: `None`).
    pub down_reply_to: Vec<Option<usize>>,
    /// Row of each receiver.
    pub receivers: Vec<usize>,
    /// Single-round baseline edges, row → slot in `flat_rows`.
    pub flat_src: Vec<usize>,
    pub flat_dst: Vec<usize>,
    /// Rows updated by the baseline round.
    pub flat_rows: Vec<usize>,
}

impl BatchIndex {
    pub fn build(samples: &[GraphSample<'_>]) -> Self {
        let mut ix = BatchIndex::default();
        for s in samples {
            let base = ix.rows;
            ix.offsets.push(base);
            let row_of: BTreeMap<usize, usize> = s.agents.iter().enumerate().map(|(k, &id)| (id, base + k)).collect();
            ix.rows += s.agents.len();
            let t = s.topology;
            match t.kind {
                TopologyKind::None => {}
                TopologyKind::Hierarchical => {
                    let first_slot = ix.leaders.len();
                    let slot_of: BTreeMap<usize, usize> = t
                        .high_level
                        .iter()
                        .enumerate()
                        .map(|(k, &id)| (id, first_slot + k))
                        .collect();
                    ix.leaders.extend(t.high_level.iter().map(|id| row_of[id]));
                    let mut up_of: BTreeMap<(usize, usize), usize> = BTreeMap::new();
                    for &(a, b) in &t.edges {
                        if t.low_level.contains(&a) && t.high_level.contains(&b) {
                            up_of.insert((a, b), ix.up_src.len());
                            ix.up_src.push(row_of[&a]);
                            ix.up_dst.push(slot_of[&b]);
                        } else if t.high_level.contains(&a) && t.high_level.contains(&b) {
                            ix.inter_src.push(slot_of[&a]);
                            ix.inter_dst.push(slot_of[&b]);
                        }
                    }
                    // Receivers: every leader (self-update) and every follower with a leader edge.
                    let mut recv_slot: BTreeMap<usize, usize> = BTreeMap::new();
                    for &id in t.high_level.iter() {
                        recv_slot.insert(id, ix.receivers.len());
                        ix.receivers.push(row_of[&id]);
                        ix.down_src.push(slot_of[&id]);
                        ix.down_dst.push(recv_slot[&id]);
                        ix.down_reply_to.push(None);
                    }
                    for &(a, b) in &t.edges {
                        if t.high_level.contains(&a) && t.low_level.contains(&b) {
                            let slot = *recv_slot.entry(b).or_insert_with(|| {
                                ix.receivers.push(row_of[&b]);
                                ix.receivers.len() - 1
                            });
                            ix.down_src.push(slot_of[&a]);
                            ix.down_dst.push(slot);
                            ix.down_reply_to.push(up_of.get(&(b, a)).copied());
                        }
                    }
                }
                _ => {
                    let flat_base = ix.flat_rows.len();
                    for &(a, b) in &t.edges {
                        ix.flat_src.push(row_of[&a]);
                        ix.flat_dst.push(flat_base + row_of[&b] - base);
                    }
                    ix.flat_rows.extend(base..base + s.agents.len());
                }
            }
        }
        ix
    }

    pub fn samples(&self) -> usize {
        self.offsets.len()
    }
}
