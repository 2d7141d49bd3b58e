use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::Rng;

use super::{LearnError, LearnerConfig, Transition, WeightTarget};
use crate::env::ObsLayout;
use crate::hcomm::{GraphSample, NetConfig, ObsBatch, PolicyNet, QNetwork};
use crate::numcore::{adam_step, soft_update, AdamConfig, ParamSet, Tape, Tensor};
use crate::topology::{build_topology, ClusterConfig, Topology, TopologyKind, WeightAssignment};

/// How the communication graph of a step is formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Structure {
    pub kind: TopologyKind,
    pub cluster: ClusterConfig,
}

impl Structure {
    pub fn build(
        &self,
        prev_leaders: &[usize],
        weights: &[u8],
        positions: &[[f64; 2]],
        alive: &[bool],
    ) -> Result<Topology, LearnError> {
        let prev = Topology {
            high_level: prev_leaders.iter().copied().collect::<BTreeSet<_>>(),
            ..Topology::empty(self.kind)
        };
        let w = WeightAssignment::new(weights.to_vec())?;
        let live: Vec<usize> = (0..alive.len()).filter(|&i| alive[i]).collect();
        Ok(build_topology(self.kind, &prev, &w, positions, &live, &self.cluster)?)
    }

    /// Graphs of the stored step and of the step after it. The latter is
    /// elected from the former with the same weights at the next positions.
    pub fn rebuild(&self, t: &Transition) -> Result<(Topology, Topology), LearnError> {
        let now = self.build(&t.prev_leaders, &t.weights, &t.positions, &t.alive)?;
        let leaders: Vec<usize> = now.high_level.iter().copied().collect();
        let next = self.build(&leaders, &t.weights, &t.next_positions, &t.next_alive)?;
        Ok((now, next))
    }
}

/// `r + γ·next_max`, or `r` when there is no next value (terminal or dead).
pub fn bellman_target(reward: f64, gamma: f64, next_max: Option<f64>) -> f64 {
    match next_max {
        Some(m) => reward + gamma * m,
        None => reward,
    }
}

fn row_max(q: &Tensor, row: usize) -> f64 {
    q.row(row).iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn check(t: &Transition, layout: &ObsLayout, actions: Option<usize>) -> Result<(), LearnError> {
    if !t.is_consistent() || t.obs_dim() != layout.flat_dim() {
        return Err(LearnError::Malformed(alloc::format!(
            "expected {} observation values per agent",
            layout.flat_dim()
        )));
    }
    if let Some(a) = actions {
        if let Some(bad) = t.actions.iter().zip(&t.alive).find(|(&x, &alive)| alive && x >= a) {
            return Err(LearnError::Malformed(alloc::format!("action {} out of {a}", bad.0)));
        }
    }
    Ok(())
}

/// Writes squared-residual gradients for the chosen entries of `q` and
/// returns the loss, both scaled by `1 / batch`.
fn residuals(q: &Tensor, picks: &[(usize, usize, f64)], batch: usize) -> (f64, Tensor) {
    let mut grad = Tensor::zeros(q.shape());
    let mut loss = 0.0;
    let scale = 1.0 / batch as f64;
    for &(row, col, y) in picks {
        let d = q.get2(row, col) - y;
        loss += d * d;
        grad.row_mut(row)[col] = 2.0 * d * scale;
    }
    (loss * scale, grad)
}

/// Next-step targets for every agent alive in each transition, in batch row order.
fn targets(batch: &[&Transition], next_live: &[Vec<usize>], next_q: &Tensor, offsets: &[usize], gamma: f64) -> Vec<f64> {
    let mut ys = Vec::new();
    for (k, t) in batch.iter().enumerate() {
        for i in t.live() {
            let next = match next_live[k].binary_search(&i) {
                Ok(p) if !t.terminal => Some(row_max(next_q, offsets[k] + p)),
                _ => None,
            };
            ys.push(bellman_target(t.rewards[i], gamma, next));
        }
    }
    ys
}

/// Squared Bellman error of the weight generator, summed over agents and
/// averaged over the batch. Gradients are added into `params`. With
/// `target` absent the next-step maximum uses `params` as well.
pub fn weight_generator_loss(
    net: &QNetwork,
    params: &mut ParamSet,
    target: Option<&ParamSet>,
    batch: &[&Transition],
    gamma: f64,
) -> Result<f64, LearnError> {
    if batch.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    let mut now = ObsBatch::new(net.layout);
    let mut next = ObsBatch::new(net.layout);
    let mut next_live = Vec::with_capacity(batch.len());
    let mut offsets = Vec::with_capacity(batch.len());
    for t in batch {
        check(t, &net.layout, None)?;
        if let Some(bad) = t.weights.iter().find(|&&w| w as usize >= net.outputs) {
            return Err(LearnError::Malformed(alloc::format!("weight {bad} out of range")));
        }
        for i in t.live() {
            now.push_flat(t.observation(i));
        }
        offsets.push(next.rows());
        let nl = t.next_live();
        for &i in &nl {
            next.push_flat(t.next_observation(i));
        }
        next_live.push(nl);
    }
    let next_q = {
        let mut tape = Tape::new();
        let q = net.forward(&mut tape, target.unwrap_or(&*params), &next)?;
        tape.value(q).clone()
    };
    let ys = targets(batch, &next_live, &next_q, &offsets, gamma);
    let mut tape = Tape::new();
    let q = net.forward(&mut tape, params, &now)?;
    let mut picks = Vec::with_capacity(ys.len());
    let mut row = 0;
    for t in batch {
        for i in t.live() {
            picks.push((row, t.weights[i] as usize, ys[row]));
            row += 1;
        }
    }
    let (loss, grad) = residuals(tape.value(q), &picks, batch.len());
    tape.backward(q, &grad, params)?;
    Ok(loss)
}

/// Squared Bellman error of the communicating policy, summed over agents
/// and averaged over the batch. Each step's graph is re-elected from the
/// stored record; gradients flow through the whole message pass into
/// `params`.
pub fn policy_loss(
    net: &PolicyNet,
    params: &mut ParamSet,
    target: &ParamSet,
    batch: &[&Transition],
    structure: &Structure,
    gamma: f64,
) -> Result<f64, LearnError> {
    if batch.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    let mut live = Vec::with_capacity(batch.len());
    let mut next_live = Vec::with_capacity(batch.len());
    let mut graphs = Vec::with_capacity(batch.len());
    let mut now = ObsBatch::new(net.layout);
    let mut next = ObsBatch::new(net.layout);
    for t in batch {
        check(t, &net.layout, Some(net.actions))?;
        graphs.push(structure.rebuild(t)?);
        let l = t.live();
        for &i in &l {
            now.push_flat(t.observation(i));
        }
        let nl = t.next_live();
        for &i in &nl {
            next.push_flat(t.next_observation(i));
        }
        live.push(l);
        next_live.push(nl);
    }
    let (next_q, next_offsets) = {
        let samples: Vec<GraphSample> = graphs
            .iter()
            .zip(&next_live)
            .map(|((_, g), a)| GraphSample { agents: a, topology: g })
            .collect();
        let mut tape = Tape::new();
        let (q, ix, _) = net.forward(&mut tape, target, &next, &samples)?;
        (tape.value(q).clone(), ix.offsets)
    };
    let ys = targets(batch, &next_live, &next_q, &next_offsets, gamma);
    let samples: Vec<GraphSample> = graphs
        .iter()
        .zip(&live)
        .map(|((g, _), a)| GraphSample { agents: a, topology: g })
        .collect();
    let mut tape = Tape::new();
    let (q, ix, _) = net.forward(&mut tape, params, &now, &samples)?;
    let mut picks = Vec::with_capacity(ys.len());
    let mut y = ys.iter();
    for (k, t) in batch.iter().enumerate() {
        for (p, &i) in live[k].iter().enumerate() {
            picks.push((ix.offsets[k] + p, t.actions[i], *y.next().unwrap()));
        }
    }
    let (loss, grad) = residuals(tape.value(q), &picks, batch.len());
    tape.backward(q, &grad, params)?;
    Ok(loss)
}

/// Weight generator with its parameters and tracking copy.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightLearner {
    pub net: QNetwork,
    pub params: ParamSet,
    pub target: ParamSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub weight_loss: Option<f64>,
    pub policy_loss: f64,
}

/// Online and target parameters of both learned modules.
#[derive(Debug, Clone, PartialEq)]
pub struct Learner {
    pub cfg: LearnerConfig,
    pub structure: Structure,
    pub policy: PolicyNet,
    pub params: ParamSet,
    pub target: ParamSet,
    pub weights: Option<WeightLearner>,
}

impl Learner {
    /// Initializes the policy first, then the weight generator when
    /// `learn_weights` is set, both from `rng`.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        layout: ObsLayout,
        actions: usize,
        net: NetConfig,
        cfg: LearnerConfig,
        structure: Structure,
        learn_weights: bool,
        rng: &mut R,
    ) -> Result<Self, LearnError> {
        cfg.validate()?;
        structure.cluster.validate()?;
        let mut params = ParamSet::new();
        let communicate = structure.kind != TopologyKind::None;
        let policy = PolicyNet::new(layout, actions, net.clone(), communicate, &mut params, rng)?;
        let weights = if learn_weights {
            let mut wp = ParamSet::new();
            let wnet = QNetwork::weight_generator(layout, &net, &mut wp, rng)?;
            Some(WeightLearner {
                net: wnet,
                target: wp.detached(),
                params: wp,
            })
        } else {
            None
        };
        Ok(Self {
            cfg,
            structure,
            policy,
            target: params.detached(),
            params,
            weights,
        })
    }

    /// One gradient step on each module from the same batch.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<UpdateStats, LearnError> {
        let adam = AdamConfig::with_lr(self.cfg.lr);
        let weight_loss = match &mut self.weights {
            Some(w) => {
                let target = match self.cfg.weight_target {
                    WeightTarget::Target => Some(&w.target),
                    WeightTarget::Online => None,
                };
                let l = weight_generator_loss(&w.net, &mut w.params, target, batch, self.cfg.gamma)?;
                adam_step(&mut w.params, &adam);
                Some(l)
            }
            None => None,
        };
        let policy_loss = policy_loss(
            &self.policy,
            &mut self.params,
            &self.target,
            batch,
            &self.structure,
            self.cfg.gamma,
        )?;
        adam_step(&mut self.params, &adam);
        Ok(UpdateStats {
            weight_loss,
            policy_loss,
        })
    }

    /// Soft update of every target copy with the configured `tau`.
    pub fn update_targets(&mut self) -> Result<(), LearnError> {
        soft_update(&mut self.target, &self.params, self.cfg.tau)?;
        if let Some(w) = &mut self.weights {
            soft_update(&mut w.target, &w.params, self.cfg.tau)?;
        }
        Ok(())
    }
}
