use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::batch::{BatchIndex, GraphSample};
use crate::env::{ObsLayout, Observation};
use crate::numcore::{Mlp, NumError, ParamId, ParamSet, PatchGeometry, Tape, Tensor, Var};
use crate::topology::{Topology, WEIGHT_LEVELS};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct NetConfig {
    /// Width of the local, cluster and global features.
    pub hidden: usize,
    pub msg_dim: usize,
    /// Hidden widths of the Q head.
    pub q_hidden: Vec<usize>,
    /// Feature maps of each convolution stage (grid observations only).
    pub conv_features: usize,
    /// Feed the follower's own upward message into the downward message it receives.
    pub down_edge_reads_reply: bool,
}

impl NetConfig {
    pub fn spread() -> Self {
        Self {
            hidden: 32,
            msg_dim: 3,
            q_hidden: vec![64, 64],
            conv_features: 8,
            down_edge_reads_reply: false,
        }
    }

    pub fn battle() -> Self {
        Self {
            q_hidden: vec![128, 64],
            ..Self::spread()
        }
    }
}

type Affine = (ParamId, ParamId);

/// Observation encoder shared by every agent.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    /// One affine + ReLU over the flat vector.
    Dense { layer: Affine },
    /// Two 3×3 convolutions over the grid window, then an affine + ReLU over
    /// the convolved map concatenated with the remaining features.
    Conv {
        first: (PatchGeometry, Affine),
        second: (PatchGeometry, Affine),
        head: Affine,
    },
}

impl Encoder {
    fn build<R: Rng>(
        params: &mut ParamSet,
        prefix: &str,
        layout: &ObsLayout,
        cfg: &NetConfig,
        rng: &mut R,
    ) -> Result<Self, NumError> {
        let vec_dim = layout.relative_dim + layout.self_dim;
        match layout.grid {
            None => Ok(Encoder::Dense {
                layer: params.insert_affine(&alloc::format!("{prefix}.dense"), vec_dim, cfg.hidden, rng)?,
            }),
            Some(g) => {
                let g1 = PatchGeometry {
                    height: g.side,
                    width: g.side,
                    channels: g.channels,
                    kernel: 3,
                };
                let g2 = PatchGeometry {
                    height: g1.out_height(),
                    width: g1.out_width(),
                    channels: cfg.conv_features,
                    kernel: 3,
                };
                let c1 = params.insert_affine(&alloc::format!("{prefix}.conv1"), g1.patch_len(), cfg.conv_features, rng)?;
                let c2 = params.insert_affine(&alloc::format!("{prefix}.conv2"), g2.patch_len(), cfg.conv_features, rng)?;
                let head_in = g2.positions() * cfg.conv_features + vec_dim;
                let head = params.insert_affine(&alloc::format!("{prefix}.head"), head_in, cfg.hidden, rng)?;
                Ok(Encoder::Conv {
                    first: (g1, c1),
                    second: (g2, c2),
                    head,
                })
            }
        }
    }

    fn apply(&self, tape: &mut Tape, params: &ParamSet, inputs: &ObsInputs) -> Result<Var, NumError> {
        match self {
            Encoder::Dense { layer } => {
                let a = tape.affine(inputs.vector, params, layer.0, layer.1)?;
                tape.relu(a)
            }
            Encoder::Conv { first, second, head } => {
                let grid = inputs.grid.ok_or_else(|| NumError::Shape {
                    op: "encoder",
                    detail: "grid input missing".into(),
                })?;
                let rows = inputs.rows;
                let mut x = grid;
                for (geom, (w, b)) in [first, second] {
                    let p = tape.patches(x, *geom)?;
                    let a = tape.affine(p, params, *w, *b)?;
                    let r = tape.relu(a)?;
                    x = tape.reshape_rows(r, rows)?;
                }
                let joined = tape.concat(&[x, inputs.vector])?;
                let a = tape.affine(joined, params, head.0, head.1)?;
                tape.relu(a)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ObsInputs {
    grid: Option<Var>,
    vector: Var,
    rows: usize,
}

/// Observation matrices aligned with batch rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsBatch {
    layout: ObsLayout,
    grid: Vec<f64>,
    vector: Vec<f64>,
    rows: usize,
}

impl ObsBatch {
    pub fn new(layout: ObsLayout) -> Self {
        Self {
            layout,
            grid: Vec::new(),
            vector: Vec::new(),
            rows: 0,
        }
    }

    pub fn from_observations<'a>(layout: ObsLayout, obs: impl IntoIterator<Item = &'a Observation>) -> Self {
        let mut b = Self::new(layout);
        for o in obs {
            b.push(o);
        }
        b
    }

    fn grid_len(&self) -> usize {
        self.layout.grid.map_or(0, |g| g.side * g.side * g.channels)
    }

    pub fn push(&mut self, obs: &Observation) {
        self.grid.extend_from_slice(&obs.window);
        self.vector.extend_from_slice(&obs.relative);
        self.vector.extend_from_slice(&obs.self_features);
        self.rows += 1;
    }

    /// Appends one flattened observation (see [`Observation::flat`]).
    pub fn push_flat<T: Copy + Into<f64>>(&mut self, flat: &[T]) {
        let g = self.grid_len();
        self.grid.extend(flat[..g].iter().map(|&v| v.into()));
        self.vector.extend(flat[g..].iter().map(|&v| v.into()));
        self.rows += 1;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    fn record(&self, tape: &mut Tape) -> Result<ObsInputs, NumError> {
        let vec_dim = self.layout.relative_dim + self.layout.self_dim;
        if self.vector.len() != self.rows * vec_dim || self.grid.len() != self.rows * self.grid_len() {
            return Err(NumError::Shape {
                op: "observations",
                detail: alloc::format!("{} rows do not match layout {:?}", self.rows, self.layout),
            });
        }
        let grid = match self.layout.grid {
            Some(_) => Some(tape.input(Tensor::matrix(self.rows, self.grid_len(), self.grid.clone())?)?),
            None => None,
        };
        let vector = tape.input(Tensor::matrix(self.rows, vec_dim, self.vector.clone())?)?;
        Ok(ObsInputs {
            grid,
            vector,
            rows: self.rows,
        })
    }
}

/// Per-agent features of one graph. `cluster` and `global` rows follow the
/// ascending ids in `leaders`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    pub agents: Vec<usize>,
    pub embed: Tensor,
    pub leaders: Vec<usize>,
    pub cluster: Option<Tensor>,
    pub global: Option<Tensor>,
}

/// Tape handles of every intermediate of one pass, for inspection.
#[derive(Debug, Clone, Default)]
pub struct PassRecord {
    pub encoded: Option<Var>,
    pub up_messages: Option<Var>,
    pub cluster: Option<Var>,
    pub inter_messages: Option<Var>,
    pub global: Option<Var>,
    pub down_messages: Option<Var>,
    pub flat_messages: Option<Var>,
    pub embed: Option<Var>,
    pub q: Option<Var>,
}

/// Encoder, message-passing functions and Q head of the action policy.
/// Parameters are registered as `gnn.*` and `q.*` in one [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub layout: ObsLayout,
    pub actions: usize,
    pub cfg: NetConfig,
    encoder: Encoder,
    comm: Option<CommFns>,
    q: Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct CommFns {
    up_edge: Affine,
    up_node: Affine,
    inter_edge: Affine,
    inter_node: Affine,
    down_edge: Affine,
    down_node: Affine,
}

fn dense<R: Rng>(p: &mut ParamSet, name: &str, i: usize, o: usize, rng: &mut R) -> Result<Affine, NumError> {
    p.insert_affine(name, i, o, rng)
}

fn phi(tape: &mut Tape, params: &ParamSet, x: Var, f: Affine) -> Result<Var, NumError> {
    let a = tape.affine(x, params, f.0, f.1)?;
    tape.relu(a)
}

impl PolicyNet {
    /// With `communicate` false no message functions are registered and the
    /// network only accepts topologies without edges.
    pub fn new<R: Rng>(
        layout: ObsLayout,
        actions: usize,
        cfg: NetConfig,
        communicate: bool,
        params: &mut ParamSet,
        rng: &mut R,
    ) -> Result<Self, NumError> {
        let (h, m) = (cfg.hidden, cfg.msg_dim);
        let encoder = Encoder::build(params, "gnn.enc", &layout, &cfg, rng)?;
        let comm = if communicate {
            let down_in = 3 * h + if cfg.down_edge_reads_reply { m } else { 0 };
            Some(CommFns {
                up_edge: dense(params, "gnn.up_edge", h, m, rng)?,
                up_node: dense(params, "gnn.up_node", m + h, h, rng)?,
                inter_edge: dense(params, "gnn.inter_edge", 2 * h, m, rng)?,
                inter_node: dense(params, "gnn.inter_node", m + h, h, rng)?,
                down_edge: dense(params, "gnn.down_edge", down_in, m, rng)?,
                down_node: dense(params, "gnn.down_node", m + h, h, rng)?,
            })
        } else {
            None
        };
        let mut dims = vec![h];
        dims.extend_from_slice(&cfg.q_hidden);
        dims.push(actions);
        let q = Mlp::build(params, "q", &dims, rng)?;
        Ok(Self {
            layout,
            actions,
            cfg,
            encoder,
            comm,
            q,
        })
    }

    /// Rebuilds the network description for parameters loaded from elsewhere,
    /// checking names and shapes.
    pub fn bind(layout: ObsLayout, actions: usize, cfg: NetConfig, params: &ParamSet) -> Result<Self, NumError> {
        let mut fresh = ParamSet::new();
        let mut rng = rand_chacha::ChaCha8Rng::from_seed_zero();
        let communicate = params.id("gnn.up_edge.w").is_some();
        let net = Self::new(layout, actions, cfg, communicate, &mut fresh, &mut rng)?;
        if !fresh.same_layout(params) {
            return Err(NumError::ParamMismatch("policy parameters do not match the network layout".into()));
        }
        Ok(net)
    }

    fn encode_on(&self, tape: &mut Tape, params: &ParamSet, obs: &ObsBatch) -> Result<Var, NumError> {
        let inputs = obs.record(tape)?;
        self.encoder.apply(tape, params, &inputs)
    }

    fn up_phase(&self, c: &CommFns, tape: &mut Tape, params: &ParamSet, ix: &BatchIndex, embed: Var, lead: Var) -> Result<(Var, Var), NumError> {
        let src = tape.gather(embed, &ix.up_src)?;
        let msgs = phi(tape, params, src, c.up_edge)?;
        let agg = tape.segment_sum(msgs, &ix.up_dst, ix.leaders.len())?;
        let joined = tape.concat(&[agg, lead])?;
        Ok((msgs, phi(tape, params, joined, c.up_node)?))
    }

    fn inter_phase(&self, c: &CommFns, tape: &mut Tape, params: &ParamSet, ix: &BatchIndex, cluster: Var, lead: Var) -> Result<(Var, Var), NumError> {
        let feat = tape.concat(&[cluster, lead])?;
        let src = tape.gather(feat, &ix.inter_src)?;
        let msgs = phi(tape, params, src, c.inter_edge)?;
        let agg = tape.segment_sum(msgs, &ix.inter_dst, ix.leaders.len())?;
        let joined = tape.concat(&[agg, lead])?;
        Ok((msgs, phi(tape, params, joined, c.inter_node)?))
    }

    #[allow(clippy::too_many_arguments)]
    fn down_phase(
        &self,
        c: &CommFns,
        tape: &mut Tape,
        params: &ParamSet,
        ix: &BatchIndex,
        embed: Var,
        lead: Var,
        cluster: Var,
        global: Var,
        up_msgs: Var,
    ) -> Result<(Var, Var), NumError> {
        let feat = tape.concat(&[global, cluster, lead])?;
        let mut src = tape.gather(feat, &ix.down_src)?;
        if self.cfg.down_edge_reads_reply {
            let zeros = tape.input(Tensor::zeros(&[ix.down_src.len(), self.cfg.msg_dim]))?;
            let (at, from): (Vec<usize>, Vec<usize>) = ix
                .down_reply_to
                .iter()
                .enumerate()
                .filter_map(|(k, r)| r.map(|u| (k, u)))
                .unzip();
            let replies = tape.gather(up_msgs, &from)?;
            let reply = tape.overwrite(zeros, &at, replies)?;
            src = tape.concat(&[src, reply])?;
        }
        let msgs = phi(tape, params, src, c.down_edge)?;
        let agg = tape.segment_sum(msgs, &ix.down_dst, ix.receivers.len())?;
        let own = tape.gather(embed, &ix.receivers)?;
        let joined = tape.concat(&[agg, own])?;
        let updated = phi(tape, params, joined, c.down_node)?;
        Ok((msgs, tape.overwrite(embed, &ix.receivers, updated)?))
    }

    fn flat_phase(&self, c: &CommFns, tape: &mut Tape, params: &ParamSet, ix: &BatchIndex, embed: Var) -> Result<(Var, Var), NumError> {
        let src = tape.gather(embed, &ix.flat_src)?;
        let msgs = phi(tape, params, src, c.up_edge)?;
        let agg = tape.segment_sum(msgs, &ix.flat_dst, ix.flat_rows.len())?;
        let own = tape.gather(embed, &ix.flat_rows)?;
        let joined = tape.concat(&[agg, own])?;
        let updated = phi(tape, params, joined, c.down_node)?;
        Ok((msgs, tape.overwrite(embed, &ix.flat_rows, updated)?))
    }

    /// Records the full pass for a batch of graphs and returns the Q matrix
    /// `[rows × actions]`, rows ordered as in [`BatchIndex`].
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        obs: &ObsBatch,
        samples: &[GraphSample<'_>],
    ) -> Result<(Var, BatchIndex, PassRecord), NumError> {
        let ix = BatchIndex::build(samples);
        if ix.rows != obs.rows() {
            return Err(NumError::Shape {
                op: "hcomm",
                detail: alloc::format!("{} observation rows for {} agents", obs.rows(), ix.rows),
            });
        }
        let mut rec = PassRecord::default();
        let mut embed = self.encode_on(tape, params, obs)?;
        rec.encoded = Some(embed);
        if !ix.leaders.is_empty() {
            let c = self.comm()?;
            let lead = tape.gather(embed, &ix.leaders)?;
            let (up, cluster) = self.up_phase(c, tape, params, &ix, embed, lead)?;
            let (inter, global) = self.inter_phase(c, tape, params, &ix, cluster, lead)?;
            let (down, e) = self.down_phase(c, tape, params, &ix, embed, lead, cluster, global, up)?;
            embed = e;
            rec.up_messages = Some(up);
            rec.cluster = Some(cluster);
            rec.inter_messages = Some(inter);
            rec.global = Some(global);
            rec.down_messages = Some(down);
        }
        if !ix.flat_rows.is_empty() {
            let c = self.comm()?;
            let (msgs, e) = self.flat_phase(c, tape, params, &ix, embed)?;
            embed = e;
            rec.flat_messages = Some(msgs);
        }
        rec.embed = Some(embed);
        let q = self.q.apply(tape, embed, params)?;
        rec.q = Some(q);
        Ok((q, ix, rec))
    }

    /// Q-values for one graph, one vector per live agent in `agents` order.
    pub fn q_values(
        &self,
        params: &ParamSet,
        agents: &[usize],
        observations: &[Observation],
        topology: &Topology,
    ) -> Result<Vec<Vec<f64>>, NumError> {
        let obs = ObsBatch::from_observations(self.layout, observations);
        let mut tape = Tape::new();
        let sample = GraphSample { agents, topology };
        let (q, _, _) = self.forward(&mut tape, params, &obs, &[sample])?;
        let qt = tape.value(q);
        Ok((0..qt.rows()).map(|r| qt.row(r).to_vec()).collect())
    }

    /// Local embeddings of one graph before any communication.
    pub fn encode(&self, params: &ParamSet, agents: &[usize], observations: &[Observation]) -> Result<NodeFeatures, NumError> {
        let obs = ObsBatch::from_observations(self.layout, observations);
        let mut tape = Tape::new();
        let e = self.encode_on(&mut tape, params, &obs)?;
        Ok(NodeFeatures {
            agents: agents.to_vec(),
            embed: tape.value(e).clone(),
            leaders: Vec::new(),
            cluster: None,
            global: None,
        })
    }

    fn comm(&self) -> Result<&CommFns, NumError> {
        self.comm.as_ref().ok_or_else(|| NumError::Shape {
            op: "hcomm",
            detail: "network built without message functions".into(),
        })
    }

    fn staged(&self, f: &NodeFeatures, topology: &Topology) -> Result<(Tape, BatchIndex, Var, &CommFns), NumError> {
        let c = self.comm()?;
        let sample = GraphSample {
            agents: &f.agents,
            topology,
        };
        let ix = BatchIndex::build(&[sample]);
        let mut tape = Tape::new();
        let embed = tape.input(f.embed.clone())?;
        Ok((tape, ix, embed, c))
    }

    /// Followers report to leaders; leaders form their cluster perception.
    pub fn intra_aggregate(&self, params: &ParamSet, f: &NodeFeatures, topology: &Topology) -> Result<NodeFeatures, NumError> {
        let (mut tape, ix, embed, c) = self.staged(f, topology)?;
        let lead = tape.gather(embed, &ix.leaders)?;
        let (_, cluster) = self.up_phase(c, &mut tape, params, &ix, embed, lead)?;
        Ok(NodeFeatures {
            leaders: topology.high_level.iter().copied().collect(),
            cluster: Some(tape.value(cluster).clone()),
            ..f.clone()
        })
    }

    /// Leaders exchange cluster perceptions and form their global perception.
    pub fn inter_share(&self, params: &ParamSet, f: &NodeFeatures, topology: &Topology) -> Result<NodeFeatures, NumError> {
        let (mut tape, ix, embed, c) = self.staged(f, topology)?;
        let lead = tape.gather(embed, &ix.leaders)?;
        let cluster = tape.input(stage_input(&f.cluster, "cluster")?)?;
        let (_, global) = self.inter_phase(c, &mut tape, params, &ix, cluster, lead)?;
        Ok(NodeFeatures {
            global: Some(tape.value(global).clone()),
            ..f.clone()
        })
    }

    /// Leaders broadcast to their followers and update themselves.
    pub fn intra_share(&self, params: &ParamSet, f: &NodeFeatures, topology: &Topology) -> Result<NodeFeatures, NumError> {
        let (mut tape, ix, embed, c) = self.staged(f, topology)?;
        let lead = tape.gather(embed, &ix.leaders)?;
        let cluster = tape.input(stage_input(&f.cluster, "cluster")?)?;
        let global = tape.input(stage_input(&f.global, "global")?)?;
        let up = if self.cfg.down_edge_reads_reply {
            self.up_phase(c, &mut tape, params, &ix, embed, lead)?.0
        } else {
            tape.input(Tensor::zeros(&[ix.up_src.len(), self.cfg.msg_dim]))?
        };
        let (_, e) = self.down_phase(c, &mut tape, params, &ix, embed, lead, cluster, global, up)?;
        Ok(NodeFeatures {
            embed: tape.value(e).clone(),
            ..f.clone()
        })
    }

    /// Q-values from final embeddings.
    pub fn q_head(&self, params: &ParamSet, embed: &Tensor) -> Result<Tensor, NumError> {
        let mut tape = Tape::new();
        let e = tape.input(embed.clone())?;
        let q = self.q.apply(&mut tape, e, params)?;
        Ok(tape.value(q).clone())
    }
}

fn stage_input(t: &Option<Tensor>, what: &str) -> Result<Tensor, NumError> {
    t.clone().ok_or_else(|| NumError::Shape {
        op: "hcomm",
        detail: alloc::format!("{what} features missing; run the earlier phase first"),
    })
}

/// Independent Q-network over local observations: the weight generator.
/// Parameters are registered as `wgen.*`.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub layout: ObsLayout,
    pub outputs: usize,
    encoder: Encoder,
    head: Mlp,
}

impl QNetwork {
    pub fn new<R: Rng>(
        layout: ObsLayout,
        outputs: usize,
        cfg: &NetConfig,
        params: &mut ParamSet,
        rng: &mut R,
    ) -> Result<Self, NumError> {
        let encoder = Encoder::build(params, "wgen.enc", &layout, cfg, rng)?;
        let mut dims = vec![cfg.hidden];
        dims.extend_from_slice(&cfg.q_hidden);
        dims.push(outputs);
        let head = Mlp::build(params, "wgen.q", &dims, rng)?;
        Ok(Self {
            layout,
            outputs,
            encoder,
            head,
        })
    }

    /// Weight generator over [`WEIGHT_LEVELS`] outputs.
    pub fn weight_generator<R: Rng>(layout: ObsLayout, cfg: &NetConfig, params: &mut ParamSet, rng: &mut R) -> Result<Self, NumError> {
        Self::new(layout, WEIGHT_LEVELS, cfg, params, rng)
    }

    pub fn bind(layout: ObsLayout, outputs: usize, cfg: &NetConfig, params: &ParamSet) -> Result<Self, NumError> {
        let mut fresh = ParamSet::new();
        let mut rng = rand_chacha::ChaCha8Rng::from_seed_zero();
        let net = Self::new(layout, outputs, cfg, &mut fresh, &mut rng)?;
        if !fresh.same_layout(params) {
            return Err(NumError::ParamMismatch("weight-generator parameters do not match the network layout".into()));
        }
        Ok(net)
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, obs: &ObsBatch) -> Result<Var, NumError> {
        let inputs = obs.record(tape)?;
        let e = self.encoder.apply(tape, params, &inputs)?;
        self.head.apply(tape, e, params)
    }

    pub fn q_values(&self, params: &ParamSet, observations: &[Observation]) -> Result<Vec<Vec<f64>>, NumError> {
        let obs = ObsBatch::from_observations(self.layout, observations);
        let mut tape = Tape::new();
        let q = self.forward(&mut tape, params, &obs)?;
        let qt = tape.value(q);
        Ok((0..qt.rows()).map(|r| qt.row(r).to_vec()).collect())
    }
}

trait SeedZero {
    fn from_seed_zero() -> Self;
}

impl SeedZero for rand_chacha::ChaCha8Rng {
    fn from_seed_zero() -> Self {
        <Self as rand::SeedableRng>::seed_from_u64(0)
    }
}
