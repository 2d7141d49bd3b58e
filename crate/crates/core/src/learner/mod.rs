//! Replay, exploration, the two Q-learning losses and target tracking.

mod loss;
mod replay;

use alloc::string::String;
use core::fmt;

use rand::Rng;

use crate::numcore::NumError;
use crate::topology::TopologyError;

pub use loss::{bellman_target, policy_loss, weight_generator_loss, Learner, Structure, UpdateStats, WeightLearner};
pub use replay::{ReplayBuffer, Transition};

#[derive(Debug, Clone, PartialEq)]
pub enum LearnError {
    EmptyBatch,
    Config(String),
    Num(NumError),
    Topology(TopologyError),
    /// A transition does not fit the network it is fed to.
    Malformed(String),
}

impl fmt::Display for LearnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnError::EmptyBatch => write!(f, "empty batch"),
            LearnError::Config(m) => write!(f, "learner config: {m}"),
            LearnError::Num(e) => write!(f, "{e}"),
            LearnError::Topology(e) => write!(f, "{e}"),
            LearnError::Malformed(m) => write!(f, "malformed transition: {m}"),
        }
    }
}

impl core::error::Error for LearnError {}

impl From<NumError> for LearnError {
    fn from(e: NumError) -> Self {
        LearnError::Num(e)
    }
}

impl From<TopologyError> for LearnError {
    fn from(e: TopologyError) -> Self {
        LearnError::Topology(e)
    }
}

/// Which parameters evaluate the next-step maximum of the weight generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum WeightTarget {
    #[default]
    Target,
    Online,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct LearnerConfig {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub lr: f64,
    /// Sampled-batch updates after each episode.
    pub update_rounds: usize,
    pub replay_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of the training episodes over which exploration decays.
    pub epsilon_decay_fraction: f64,
    pub weight_target: WeightTarget,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            tau: 0.01,
            batch_size: 32,
            lr: 1e-3,
            update_rounds: 4,
            replay_capacity: 50_000,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_decay_fraction: 0.6,
            weight_target: WeightTarget::Target,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::Config(m.into()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.replay_capacity == 0 {
            return bad("batch_size and replay_capacity must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..=1.0).contains(&self.epsilon_end) || !(self.epsilon_end..=1.0).contains(&self.epsilon_start) {
            return bad("need 0 <= epsilon_end <= epsilon_start <= 1");
        }
        if !(0.0..=1.0).contains(&self.epsilon_decay_fraction) {
            return bad("epsilon_decay_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    /// Exploration schedule over `episodes` training episodes.
    pub fn epsilon(&self, episodes: usize) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            end: self.epsilon_end,
            decay_steps: libm::ceil(episodes as f64 * self.epsilon_decay_fraction) as usize,
        }
    }
}

/// Linear decay from `start` to `end` over `decay_steps`, then constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: usize,
}

impl EpsilonSchedule {
    pub fn value(&self, step: usize) -> f64 {
        if step >= self.decay_steps {
            return self.end;
        }
        self.start + (self.end - self.start) * step as f64 / self.decay_steps as f64
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// ε-greedy choice. Always draws one uniform number, plus the random index
/// when exploring.
pub fn select_discrete<R: Rng>(q_values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    assert!(!q_values.is_empty(), "no actions to choose from");
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..q_values.len())
    } else {
        argmax(q_values)
    }
}
