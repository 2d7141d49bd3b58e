//! On-disk formats: metric CSVs with a schema line, JSONL traces, edge lists
//! and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lsc_core::harness::{AggregateRow, EpisodeMetrics, EvalReport, RunSummary, Snapshot, StepTrace};
use lsc_core::topology::Topology;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const METRICS_SCHEMA: &str = "train_metrics/v1";
pub const EVAL_SCHEMA: &str = "eval_trials/v1";
pub const SWEEP_SCHEMA: &str = "sweep/v1";
pub const MANIFEST_SCHEMA: &str = "run_manifest/v1";

/// Hex SHA-256 of `blob <len>\0<bytes>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

fn csv_with_schema<T: Serialize>(schema: &str, rows: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = format!("#schema={schema}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for r in rows {
            w.serialize(r).expect("in-memory csv write");
        }
        w.flush().expect("in-memory csv flush");
    }
    out
}

fn read_csv_with_schema<T: for<'de> Deserialize<'de>>(schema: &str, bytes: &[u8]) -> Result<Vec<T>, CliError> {
    let want = format!("#schema={schema}\n");
    let body = bytes
        .strip_prefix(want.as_bytes())
        .ok_or_else(|| CliError::Schema(format!("expected a {schema} file")))?;
    csv::Reader::from_reader(body)
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::Schema(e.to_string()))
}

pub fn metrics_csv(metrics: &[EpisodeMetrics]) -> Vec<u8> {
    csv_with_schema(METRICS_SCHEMA, metrics)
}

pub fn read_metrics_csv(bytes: &[u8]) -> Result<Vec<EpisodeMetrics>, CliError> {
    read_csv_with_schema(METRICS_SCHEMA, bytes)
}

pub fn eval_csv(report: &EvalReport) -> Vec<u8> {
    csv_with_schema(EVAL_SCHEMA, &report.trials)
}

/// Evaluation totals without the per-trial rows.
#[derive(Debug, Serialize)]
struct EvalSummary<'a> {
    mean_reward: f64,
    n_kills: usize,
    n_deaths: usize,
    kd_ratio: f64,
    n_success: usize,
    n_overload: usize,
    trials: usize,
    cost: &'a lsc_core::harness::CostSummary,
}

pub fn eval_json(report: &EvalReport) -> Vec<u8> {
    let s = EvalSummary {
        mean_reward: report.mean_reward,
        n_kills: report.n_kills,
        n_deaths: report.n_deaths,
        kd_ratio: report.kd_ratio,
        n_success: report.n_success,
        n_overload: report.n_overload,
        trials: report.trials.len(),
        cost: &report.cost,
    };
    let mut out = serde_json::to_vec_pretty(&s).expect("eval summary serializes");
    out.push(b'\n');
    out
}

pub fn trace_line(trace: &StepTrace) -> Vec<u8> {
    let mut out = serde_json::to_vec(trace).expect("traces serialize");
    out.push(b'\n');
    out
}

#[derive(Debug, Serialize)]
struct SweepRow<'a> {
    row: &'static str,
    variant: &'static str,
    seed: Option<u64>,
    runs: usize,
    failed: usize,
    first_reward: Option<f64>,
    final_reward: Option<f64>,
    eval_reward: Option<f64>,
    kd_ratio: Option<f64>,
    n_success: Option<f64>,
    n_overload: Option<f64>,
    mean_msg: Option<f64>,
    error: Option<&'a str>,
}

/// Per-seed rows followed by one aggregate row per variant.
pub fn sweep_csv(rows: &[RunSummary], agg: &[AggregateRow]) -> Vec<u8> {
    let per_seed = rows.iter().map(|r| SweepRow {
        row: "seed",
        variant: r.variant.as_str(),
        seed: Some(r.seed),
        runs: usize::from(r.error.is_none()),
        failed: usize::from(r.error.is_some()),
        first_reward: r.first_reward,
        final_reward: r.final_reward,
        eval_reward: r.eval_reward,
        kd_ratio: r.kd_ratio,
        n_success: r.n_success,
        n_overload: r.n_overload,
        mean_msg: r.mean_msg,
        error: r.error.as_deref(),
    });
    let aggregate = agg.iter().map(|a| SweepRow {
        row: "aggregate",
        variant: a.variant.as_str(),
        seed: None,
        runs: a.runs,
        failed: a.failed,
        first_reward: a.first_reward,
        final_reward: a.final_reward,
        eval_reward: a.eval_reward,
        kd_ratio: a.kd_ratio,
        n_success: a.n_success,
        n_overload: a.n_overload,
        mean_msg: a.mean_msg,
        error: None,
    });
    csv_with_schema(SWEEP_SCHEMA, per_seed.chain(aggregate))
}

/// `a b` per directed edge, after a comment line naming kind and leaders.
pub fn edge_list(t: &Topology) -> String {
    let leaders: Vec<String> = t.high_level.iter().map(|l| l.to_string()).collect();
    let mut out = format!("# kind={} leaders={}\n", t.kind, leaders.join(","));
    for (a, b) in &t.edges {
        out.push_str(&format!("{a} {b}\n"));
    }
    out
}

#[derive(Debug, Serialize)]
struct MessageJson<'a> {
    phase: &'a str,
    from: usize,
    to: usize,
    payload: &'a [f64],
}

#[derive(Debug, Serialize)]
struct SnapshotJson<'a> {
    step: usize,
    agents: &'a [usize],
    weights: &'a [u8],
    leaders: Vec<usize>,
    n_msg: usize,
    n_bandwidth: usize,
    groups: &'a [Vec<usize>],
    messages: Vec<MessageJson<'a>>,
    q: Vec<&'a [f64]>,
}

pub fn snapshot_json(s: &Snapshot) -> Vec<u8> {
    let messages = s
        .messages
        .iter()
        .flat_map(|m| {
            m.pairs.iter().enumerate().map(move |(k, &(from, to))| MessageJson {
                phase: m.phase,
                from,
                to,
                payload: m.payload.row(k),
            })
        })
        .collect();
    let j = SnapshotJson {
        step: s.step,
        agents: &s.agents,
        weights: &s.weights,
        leaders: s.topology.high_level.iter().copied().collect(),
        n_msg: s.cost.n_msg,
        n_bandwidth: s.cost.n_bandwidth,
        groups: &s.topology.groups,
        messages,
        q: (0..s.q.rows()).map(|r| s.q.row(r)).collect(),
    };
    let mut out = serde_json::to_vec_pretty(&j).expect("snapshots serialize");
    out.push(b'\n');
    out
}

/// Record of what a command wrote, for audit and reproducibility checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: String,
    pub config_hash: String,
    pub files: BTreeMap<String, String>,
}

/// An output directory that remembers the hash of every file written to it.
#[derive(Debug)]
pub struct OutDir {
    pub root: PathBuf,
    files: BTreeMap<String, String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
        self.files.insert(name.to_string(), content_hash(bytes));
        Ok(p)
    }

    /// Records a file written by other means.
    pub fn record(&mut self, name: &str) -> Result<(), CliError> {
        let p = self.path(name);
        let bytes = fs::read(&p).map_err(|e| CliError::io(&p, e))?;
        self.files.insert(name.to_string(), content_hash(&bytes));
        Ok(())
    }

    /// Writes `manifest.json` listing every file recorded so far.
    pub fn finish(mut self, command: &str, seed: Option<u64>, config: &str) -> Result<PathBuf, CliError> {
        let m = Manifest {
            schema: MANIFEST_SCHEMA.into(),
            command: command.into(),
            seed,
            config: config.into(),
            config_hash: content_hash(config.as_bytes()),
            files: std::mem::take(&mut self.files),
        };
        let mut bytes = serde_json::to_vec_pretty(&m).expect("manifests serialize");
        bytes.push(b'\n');
        let p = self.path("manifest.json");
        fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
        Ok(p)
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}
