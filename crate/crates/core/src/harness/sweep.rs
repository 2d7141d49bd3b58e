use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::report::{EpisodeMetrics, EvalReport};
use super::RunConfig;
use crate::topology::TopologyKind;

/// Method variants compared in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Variant {
    /// Learned weights, hierarchical graph.
    Lsc,
    LscStar,
    LscNbor,
    LscFc,
    /// No communication.
    Idqn,
    /// Hierarchical graph with every weight fixed.
    LscFix,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Lsc,
        Variant::LscStar,
        Variant::LscNbor,
        Variant::LscFc,
        Variant::Idqn,
        Variant::LscFix,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Lsc => "lsc",
            Variant::LscStar => "lsc-star",
            Variant::LscNbor => "lsc-nbor",
            Variant::LscFc => "lsc-fc",
            Variant::Idqn => "idqn",
            Variant::LscFix => "lsc-fix",
        }
    }

    /// `base` with this variant's topology and weight source; the fixed
    /// variant uses `fix_level` (or weight 1).
    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        cfg.fixed_weight = None;
        cfg.topology = match self {
            Variant::Lsc | Variant::LscFix => TopologyKind::Hierarchical,
            Variant::LscStar => TopologyKind::Star,
            Variant::LscNbor => TopologyKind::Neighboring,
            Variant::LscFc => TopologyKind::FullyConnected,
            Variant::Idqn => TopologyKind::None,
        };
        if self == Variant::LscFix {
            cfg.fixed_weight = Some(base.fixed_weight.unwrap_or(1));
        }
        cfg
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| alloc::format!("unknown variant {s:?}"))
    }
}

/// One trained run of a sweep.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunSummary {
    pub variant: Variant,
    pub seed: u64,
    pub episodes: usize,
    /// Mean episode reward over the first and the last tenth of training.
    pub first_reward: Option<f64>,
    pub final_reward: Option<f64>,
    pub eval_reward: Option<f64>,
    pub kd_ratio: Option<f64>,
    pub n_success: Option<f64>,
    pub n_overload: Option<f64>,
    pub mean_msg: Option<f64>,
    pub error: Option<String>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Number of episodes in a tenth of `episodes`, at least one.
pub fn tenth(episodes: usize) -> usize {
    episodes.div_ceil(10).max(1)
}

pub fn summarize(variant: Variant, seed: u64, metrics: &[EpisodeMetrics], eval: Option<&EvalReport>) -> RunSummary {
    let k = tenth(metrics.len()).min(metrics.len());
    RunSummary {
        variant,
        seed,
        episodes: metrics.len(),
        first_reward: mean(metrics[..k].iter().map(|m| m.episode_reward)),
        final_reward: mean(metrics[metrics.len() - k..].iter().map(|m| m.episode_reward)),
        eval_reward: eval.map(|e| e.mean_reward),
        kd_ratio: eval.map(|e| e.kd_ratio),
        n_success: eval.map(|e| e.n_success as f64),
        n_overload: eval.map(|e| e.n_overload as f64),
        mean_msg: eval.map(|e| e.cost.mean_msg),
        error: None,
    }
}

impl RunSummary {
    pub fn failed(variant: Variant, seed: u64, error: String) -> Self {
        Self {
            variant,
            seed,
            episodes: 0,
            first_reward: None,
            final_reward: None,
            eval_reward: None,
            kd_ratio: None,
            n_success: None,
            n_overload: None,
            mean_msg: None,
            error: Some(error),
        }
    }
}

/// Per-variant means over the runs that finished.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AggregateRow {
    pub variant: Variant,
    pub runs: usize,
    pub failed: usize,
    pub first_reward: Option<f64>,
    pub final_reward: Option<f64>,
    pub eval_reward: Option<f64>,
    pub kd_ratio: Option<f64>,
    pub n_success: Option<f64>,
    pub n_overload: Option<f64>,
    pub mean_msg: Option<f64>,
}

/// One row per variant, in the order variants first appear in `rows`.
pub fn aggregate(rows: &[RunSummary]) -> Vec<AggregateRow> {
    let mut order: Vec<Variant> = Vec::new();
    for r in rows {
        if !order.contains(&r.variant) {
            order.push(r.variant);
        }
    }
    order
        .into_iter()
        .map(|v| {
            let mine: Vec<&RunSummary> = rows.iter().filter(|r| r.variant == v).collect();
            let ok: Vec<&RunSummary> = mine.iter().copied().filter(|r| r.error.is_none()).collect();
            let field = |f: fn(&RunSummary) -> Option<f64>| mean(ok.iter().filter_map(|r| f(r)));
            AggregateRow {
                variant: v,
                runs: ok.len(),
                failed: mine.len() - ok.len(),
                first_reward: field(|r| r.first_reward),
                final_reward: field(|r| r.final_reward),
                eval_reward: field(|r| r.eval_reward),
                kd_ratio: field(|r| r.kd_ratio),
                n_success: field(|r| r.n_success),
                n_overload: field(|r| r.n_overload),
                mean_msg: field(|r| r.mean_msg),
            }
        })
        .collect()
}
