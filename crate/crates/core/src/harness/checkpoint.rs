use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{HarnessError, RunConfig};
use crate::hcomm::{PolicyNet, QNetwork};
use crate::learner::{Learner, WeightLearner};
use crate::numcore::{decode_checkpoint, encode_checkpoint, ParamSet, Tensor};
use crate::topology::{TopologyKind, WEIGHT_LEVELS};

const SECTIONS: [&str; 4] = ["policy/", "policy_target/", "wgen/", "wgen_target/"];

/// What a checkpoint was trained for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub topology: TopologyKind,
    pub scenario: &'static str,
    pub agents: usize,
    pub actions: usize,
    pub obs_dim: usize,
    pub learns_weights: bool,
}

impl CheckpointMeta {
    pub fn of(cfg: &RunConfig) -> Self {
        Self {
            topology: cfg.topology,
            scenario: cfg.scenario.name(),
            agents: cfg.scenario.controlled(),
            actions: cfg.scenario.action_count(),
            obs_dim: cfg.scenario.obs_layout().flat_dim(),
            learns_weights: cfg.learns_weights(),
        }
    }

    fn tensors(&self) -> [(&'static str, Tensor); 2] {
        let scen = if self.scenario == "battle" { 0.0 } else { 1.0 };
        [
            ("meta/topology", Tensor::vector(vec![self.topology.code() as f64])),
            (
                "meta/scenario",
                Tensor::vector(vec![
                    scen,
                    self.agents as f64,
                    self.actions as f64,
                    self.obs_dim as f64,
                    self.learns_weights as u8 as f64,
                ]),
            ),
        ]
    }

    fn parse(entries: &[(String, Tensor)]) -> Result<Self, HarnessError> {
        let find = |name: &str| {
            entries
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.data())
                .ok_or_else(|| HarnessError::Checkpoint(alloc::format!("missing {name}")))
        };
        let topo = find("meta/topology")?;
        let scen = find("meta/scenario")?;
        if topo.len() != 1 || scen.len() != 5 {
            return Err(HarnessError::Checkpoint("malformed metadata".into()));
        }
        let topology = TopologyKind::from_code(topo[0] as u8)
            .ok_or_else(|| HarnessError::Checkpoint(alloc::format!("unknown topology code {}", topo[0])))?;
        Ok(Self {
            topology,
            scenario: if scen[0] == 0.0 { "battle" } else { "spread" },
            agents: scen[1] as usize,
            actions: scen[2] as usize,
            obs_dim: scen[3] as usize,
            learns_weights: scen[4] != 0.0,
        })
    }

    /// Reads only the metadata of an encoded checkpoint.
    pub fn read(bytes: &[u8]) -> Result<Self, HarnessError> {
        let entries = decode_checkpoint(bytes).map_err(|e| HarnessError::Checkpoint(alloc::format!("{e}")))?;
        Self::parse(&entries)
    }
}

/// Encodes metadata plus online and target parameters of both modules.
/// Optimizer moments are not kept.
pub fn save_learner(learner: &Learner, cfg: &RunConfig) -> Vec<u8> {
    let meta = CheckpointMeta::of(cfg).tensors();
    let mut named: Vec<(String, &Tensor)> = meta.iter().map(|(n, t)| (String::from(*n), t)).collect();
    let mut sets: Vec<&ParamSet> = vec![&learner.params, &learner.target];
    if let Some(w) = &learner.weights {
        sets.push(&w.params);
        sets.push(&w.target);
    }
    for (prefix, set) in SECTIONS.iter().zip(sets) {
        for (name, value) in set.iter() {
            named.push((alloc::format!("{prefix}{name}"), value));
        }
    }
    encode_checkpoint(named.iter().map(|(n, t)| (n.as_str(), *t)))
}

fn section(entries: &[(String, Tensor)], prefix: &str) -> Result<ParamSet, HarnessError> {
    let mut set = ParamSet::new();
    for (name, t) in entries {
        if let Some(rest) = name.strip_prefix(prefix) {
            set.insert(rest, t.clone())
                .map_err(|e| HarnessError::Checkpoint(alloc::format!("{e}")))?;
        }
    }
    Ok(set)
}

/// Decodes a checkpoint written by [`save_learner`] for the same run setup.
pub fn load_learner(bytes: &[u8], cfg: &RunConfig) -> Result<Learner, HarnessError> {
    let entries = decode_checkpoint(bytes).map_err(|e| HarnessError::Checkpoint(alloc::format!("{e}")))?;
    let meta = CheckpointMeta::parse(&entries)?;
    let want = CheckpointMeta::of(cfg);
    if meta != want {
        return Err(HarnessError::Checkpoint(alloc::format!(
            "checkpoint is for {meta:?}, run expects {want:?}"
        )));
    }
    let mismatch = |e: crate::numcore::NumError| HarnessError::Checkpoint(alloc::format!("{e}"));
    let layout = cfg.scenario.obs_layout();
    let params = section(&entries, SECTIONS[0])?;
    let target = section(&entries, SECTIONS[1])?;
    let policy = PolicyNet::bind(layout, meta.actions, cfg.net.clone(), &params).map_err(mismatch)?;
    if !target.same_layout(&params) {
        return Err(HarnessError::Checkpoint("target parameters differ from online ones".into()));
    }
    let weights = if meta.learns_weights {
        let wp = section(&entries, SECTIONS[2])?;
        let wt = section(&entries, SECTIONS[3])?;
        let net = QNetwork::bind(layout, WEIGHT_LEVELS, &cfg.net, &wp).map_err(mismatch)?;
        if !wt.same_layout(&wp) {
            return Err(HarnessError::Checkpoint("weight target differs from online weights".into()));
        }
        Some(WeightLearner {
            net,
            params: wp,
            target: wt,
        })
    } else {
        None
    };
    Ok(Learner {
        cfg: cfg.learner.clone(),
        structure: cfg.structure(),
        policy,
        params,
        target,
        weights,
    })
}
