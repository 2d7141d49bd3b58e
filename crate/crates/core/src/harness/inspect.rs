use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::run::{decide, derive_seed, joint_action, STREAM_EVAL_ACT, STREAM_EVAL_EPISODE};
use super::{HarnessError, RunConfig};
use crate::hcomm::{GraphSample, ObsBatch};
use crate::learner::Learner;
use crate::numcore::{Tape, Tensor};
use crate::topology::{account_cost, CostReport, Topology};

/// One batch of messages of a pass, each row tagged with its sender and receiver ids.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageDump {
    pub phase: &'static str,
    pub pairs: Vec<(usize, usize)>,
    pub payload: Tensor,
}

/// Graph and message payloads of one step of a greedy rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub agents: Vec<usize>,
    pub weights: Vec<u8>,
    pub topology: Topology,
    pub cost: CostReport,
    pub messages: Vec<MessageDump>,
    pub q: Tensor,
}

/// Rolls the greedy policy on evaluation trial 0 of `seed` and records the
/// pass at `step` (or at the last step if the episode ends first).
pub fn inspect(learner: &Learner, cfg: &RunConfig, seed: u64, step: usize) -> Result<Snapshot, HarnessError> {
    let scen = &cfg.scenario;
    if learner.policy.actions != scen.action_count() || learner.policy.layout != scen.obs_layout() {
        return Err(HarnessError::Checkpoint("policy does not match the scenario's action or observation space".into()));
    }
    let n = scen.controlled();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_EVAL_ACT, 0));
    let mut state = scen.reset(derive_seed(seed, STREAM_EVAL_EPISODE, 0))?;
    let mut obs = scen.observe_controlled(&state)?;
    let mut prev: Vec<usize> = Vec::new();
    let mut t = 0;
    loop {
        let d = decide(cfg, learner, &state, &obs, &prev, 0.0, &mut rng)?;
        if t == step {
            let agents: Vec<usize> = (0..n).filter(|&i| state.is_alive(i)).collect();
            let live: Vec<_> = agents.iter().map(|&i| obs[i].clone()).collect();
            let batch = ObsBatch::from_observations(learner.policy.layout, &live);
            let mut tape = Tape::new();
            let sample = GraphSample {
                agents: &agents,
                topology: &d.topology,
            };
            let (q, ix, rec) = learner.policy.forward(&mut tape, &learner.params, &batch, &[sample])?;
            let id = |row: usize| agents[row];
            let lead = |slot: usize| agents[ix.leaders[slot]];
            let recv = |slot: usize| agents[ix.receivers[slot]];
            let flat = |slot: usize| agents[ix.flat_rows[slot]];
            let mut messages = Vec::new();
            let mut dump = |phase, var: Option<_>, pairs: Vec<(usize, usize)>| {
                if let Some(v) = var {
                    messages.push(MessageDump {
                        phase,
                        pairs,
                        payload: tape.value(v).clone(),
                    });
                }
            };
            dump("up", rec.up_messages, ix.up_src.iter().zip(&ix.up_dst).map(|(&s, &d)| (id(s), lead(d))).collect());
            dump("inter", rec.inter_messages, ix.inter_src.iter().zip(&ix.inter_dst).map(|(&s, &d)| (lead(s), lead(d))).collect());
            dump("down", rec.down_messages, ix.down_src.iter().zip(&ix.down_dst).map(|(&s, &d)| (lead(s), recv(d))).collect());
            dump("flat", rec.flat_messages, ix.flat_src.iter().zip(&ix.flat_dst).map(|(&s, &d)| (id(s), flat(d))).collect());
            return Ok(Snapshot {
                step: t,
                cost: account_cost(&d.topology),
                agents,
                weights: d.weights,
                topology: d.topology,
                messages,
                q: tape.value(q).clone(),
            });
        }
        let joint = joint_action(scen, &mut state, &d.actions)?;
        let res = scen.step(&mut state, &joint)?;
        prev = d.topology.high_level.iter().copied().collect();
        obs = res.next_observations[..n].to_vec();
        t += 1;
        if res.done {
            return inspect(learner, cfg, seed, t - 1);
        }
    }
}
