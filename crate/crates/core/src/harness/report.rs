use alloc::vec::Vec;

use crate::topology::CostReport;

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub steps: usize,
    pub epsilon: f64,
    /// Sum over steps of the mean reward of the controlled agents.
    pub episode_reward: f64,
    pub mean_step_reward: f64,
    /// Means over this episode's update rounds; absent before the first update.
    pub weight_loss: Option<f64>,
    pub policy_loss: Option<f64>,
    pub buffer_size: usize,
    pub kills: usize,
    pub deaths: usize,
    pub hits: usize,
    pub blank_attacks: usize,
    pub successes: usize,
    pub overloads: usize,
    pub mean_leaders: f64,
    pub mean_messages: f64,
}

/// Per-step record for traces.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepTrace {
    pub episode: usize,
    pub step: usize,
    pub weights: Vec<u8>,
    pub leaders: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub state_digest: u64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    pub steps: usize,
    pub episode_reward: f64,
    pub kills: usize,
    pub deaths: usize,
    pub successes: usize,
    pub overloads: usize,
}

/// Message cost averaged over every evaluated step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CostSummary {
    pub steps: usize,
    pub mean_msg: f64,
    pub mean_step: f64,
    pub mean_bandwidth: f64,
    pub max_bandwidth: usize,
    pub mean_groups: f64,
    pub max_group: usize,
}

impl CostSummary {
    pub fn add(&mut self, c: &CostReport) {
        let n = self.steps as f64;
        let upd = |m: f64, x: usize| (m * n + x as f64) / (n + 1.0);
        self.mean_msg = upd(self.mean_msg, c.n_msg);
        self.mean_step = upd(self.mean_step, c.n_step);
        self.mean_bandwidth = upd(self.mean_bandwidth, c.n_bandwidth);
        self.mean_groups = upd(self.mean_groups, c.k);
        self.max_bandwidth = self.max_bandwidth.max(c.n_bandwidth);
        self.max_group = self.max_group.max(c.b);
        self.steps += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    /// Battle: mean per-step reward of the controlled agents. Spread: mean episode reward.
    pub mean_reward: f64,
    pub n_kills: usize,
    pub n_deaths: usize,
    /// Kills over deaths; kills alone when nobody died.
    pub kd_ratio: f64,
    pub n_success: usize,
    pub n_overload: usize,
    pub cost: CostSummary,
    pub trials: Vec<TrialReport>,
}

impl EvalReport {
    pub fn kd(kills: usize, deaths: usize) -> f64 {
        kills as f64 / deaths.max(1) as f64
    }
}
