//! The training loop, greedy evaluation, checkpoints and sweep summaries.

mod checkpoint;
mod inspect;
mod report;
mod run;
mod sweep;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::env::{EnvError, Scenario};
use crate::hcomm::NetConfig;
use crate::learner::{LearnError, LearnerConfig, Structure};
use crate::numcore::NumError;
use crate::topology::{ClusterConfig, TopologyError, TopologyKind, WEIGHT_LEVELS};

pub use checkpoint::{load_learner, save_learner, CheckpointMeta};
pub use inspect::{inspect, MessageDump, Snapshot};
pub use report::{CostSummary, EpisodeMetrics, EvalReport, StepTrace, TrialReport};
pub use run::{derive_seed, evaluate, train, NullObserver, TrainObserver, TrainOutcome};
pub use sweep::{aggregate, summarize, tenth, AggregateRow, RunSummary, Variant};

#[derive(Debug, Clone, PartialEq)]
pub enum HarnessError {
    Config(String),
    Env(EnvError),
    Learn(LearnError),
    /// A step's graph broke a structural invariant.
    Invariant { episode: usize, step: usize, detail: String },
    /// An update produced a non-finite value.
    Diverged { episode: usize, detail: String },
    Checkpoint(String),
    Observer(String),
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(m) => write!(f, "run config: {m}"),
            HarnessError::Env(e) => write!(f, "{e}"),
            HarnessError::Learn(e) => write!(f, "{e}"),
            HarnessError::Invariant { episode, step, detail } => {
                write!(f, "episode {episode} step {step}: {detail}")
            }
            HarnessError::Diverged { episode, detail } => {
                write!(f, "training diverged after episode {episode}: {detail}")
            }
            HarnessError::Checkpoint(m) => write!(f, "checkpoint: {m}"),
            HarnessError::Observer(m) => write!(f, "{m}"),
        }
    }
}

impl core::error::Error for HarnessError {}

impl From<EnvError> for HarnessError {
    fn from(e: EnvError) -> Self {
        HarnessError::Env(e)
    }
}

impl From<LearnError> for HarnessError {
    fn from(e: LearnError) -> Self {
        HarnessError::Learn(e)
    }
}

impl From<NumError> for HarnessError {
    fn from(e: NumError) -> Self {
        HarnessError::Learn(LearnError::Num(e))
    }
}

impl From<TopologyError> for HarnessError {
    fn from(e: TopologyError) -> Self {
        HarnessError::Learn(LearnError::Topology(e))
    }
}

/// Everything one training run needs besides its seed.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct RunConfig {
    pub scenario: Scenario,
    pub topology: TopologyKind,
    /// Use this weight for every agent instead of learning weights.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub fixed_weight: Option<u8>,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub learner: LearnerConfig,
    pub cluster: ClusterConfig,
    pub net: NetConfig,
    /// Write a checkpoint and run an evaluation every this many episodes (0: only at the end).
    pub eval_every: usize,
    pub eval_trials: usize,
    pub output_dir: String,
}

impl RunConfig {
    /// Desk-scale defaults for a scenario.
    pub fn preset(scenario: Scenario) -> Self {
        let battle = matches!(scenario, Scenario::Battle(_));
        let radius = scenario.default_radius();
        Self {
            topology: TopologyKind::Hierarchical,
            fixed_weight: None,
            episodes: if battle { 1500 } else { 3000 },
            seeds: vec![0],
            learner: LearnerConfig {
                lr: if battle { 5e-4 } else { 1e-4 },
                batch_size: if battle { 32 } else { 64 },
                update_rounds: if battle { 16 } else { 4 },
                ..LearnerConfig::default()
            },
            cluster: ClusterConfig::with_radius(radius),
            net: if battle { NetConfig::battle() } else { NetConfig::spread() },
            eval_every: 0,
            eval_trials: 50,
            output_dir: "runs".into(),
            scenario,
        }
    }

    pub fn horizon(&self) -> usize {
        self.scenario.horizon()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.scenario.validate()?;
        self.learner.validate()?;
        self.cluster.validate()?;
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.episodes == 0 || self.horizon() == 0 {
            return bad("episodes and horizon must be positive");
        }
        if self.seeds.is_empty() {
            return bad("seed list is empty");
        }
        if self.eval_trials == 0 {
            return bad("eval_trials must be positive");
        }
        if self.net.hidden == 0 || self.net.msg_dim == 0 || self.net.conv_features == 0 {
            return bad("network widths must be positive");
        }
        if self.net.q_hidden.contains(&0) {
            return bad("q_hidden widths must be positive");
        }
        if let Some(w) = self.fixed_weight {
            if w as usize >= WEIGHT_LEVELS {
                return bad("fixed_weight must be 0, 1 or 2");
            }
            if self.topology != TopologyKind::Hierarchical {
                return bad("fixed_weight only applies to the hierarchical topology");
            }
        }
        Ok(())
    }

    pub fn structure(&self) -> Structure {
        Structure {
            kind: self.topology,
            cluster: self.cluster,
        }
    }

    /// Whether a weight generator is trained.
    pub fn learns_weights(&self) -> bool {
        self.topology == TopologyKind::Hierarchical && self.fixed_weight.is_none()
    }
}

#[cfg(test)]
mod tests;
