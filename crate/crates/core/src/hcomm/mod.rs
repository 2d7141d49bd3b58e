//! Hierarchical message passing and the Q-value heads.
//!
//! A pass runs over a batch of independent graphs laid out as rows of one
//! matrix, so a whole minibatch is a single forward and backward sweep.
//!
//! For hierarchical graphs, with `v` the local embedding, `c` the cluster
//! perception and `g` the global perception of a leader:
//!
//! | phase | edges | message | node update |
//! |---|---|---|---|
//! | intra-group aggregation | follower → leader | `up_edge(v_i)` | `c_j = up_node(Σe, v_j)` |
//! | inter-group sharing | leader → leader | `inter_edge(c_i, v_i)` | `g_j = inter_node(Σe, v_j)` |
//! | intra-group sharing | leader → follower, leader → itself | `down_edge(g_i, c_i, v_i)` | `v_j = down_node(Σe, v_j)` |
//!
//! Baseline graphs run one `up_edge` / sum / `down_node` round over their
//! edges. Every function is a single affine layer followed by ReLU.

mod batch;
mod net;

pub use batch::{BatchIndex, GraphSample};
pub use net::{Encoder, NetConfig, NodeFeatures, ObsBatch, PassRecord, PolicyNet, QNetwork};
