use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lsc_core::harness::{
    evaluate, inspect, load_learner, save_learner, train, EpisodeMetrics, EvalReport, RunConfig, StepTrace,
    TrainObserver, Variant,
};
use lsc_core::learner::Learner;
use lsc_core::topology::TopologyKind;

use crate::config;
use crate::cost::{cost_rows, CostRow};
use crate::error::CliError;
use crate::files::{self, OutDir};
use crate::sweep::run_sweep;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_VAR: &str = "LSC_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "lsc", version, about = "Hierarchical structured communication for multi-agent Q-learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML run config; omitted keys keep the scenario preset.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Dotted override, e.g. `learner.lr=1e-4`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (default: $LSC_OUTPUT_DIR, then the config's output_dir).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one seed and write metrics, checkpoints and a manifest.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Apply a method variant to the config (lsc, lsc-star, lsc-nbor, lsc-fc, idqn, lsc-fix).
        #[arg(long)]
        variant: Option<Variant>,
        /// Also write one JSON line per step.
        #[arg(long)]
        trace: bool,
    },
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train and evaluate several variants over the config's seeds.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "lsc,lsc-star,lsc-nbor,idqn,lsc-fix")]
        variants: Vec<Variant>,
        /// Seeds to run instead of the config's list.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Worker threads (default: one per core).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Message cost of each topology over a scripted random-walk rollout.
    Cost {
        /// Topology kind, or `all`.
        #[arg(long, default_value = "all")]
        kind: String,
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        steps: usize,
        #[arg(long, default_value_t = 0.6)]
        radius: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Dump the graph and message payloads of one rollout step of a checkpoint.
    Inspect {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        step: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn out_root(args: &ConfigArgs, cfg: &RunConfig) -> PathBuf {
    args.out
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_DIR_VAR).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&cfg.output_dir))
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    config::load(args.config.as_deref(), &args.overrides)
}

fn read_checkpoint(path: &Path, cfg: &RunConfig) -> Result<Learner, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))?;
    load_learner(&bytes, cfg).map_err(CliError::from)
}

/// Streams traces and writes periodic checkpoints while training.
struct RunWriter {
    dir: PathBuf,
    cfg: RunConfig,
    trace: Option<BufWriter<fs::File>>,
    written: Vec<String>,
}

impl TrainObserver for RunWriter {
    fn wants_steps(&self) -> bool {
        self.trace.is_some()
    }

    fn on_step(&mut self, t: &StepTrace) -> Result<(), String> {
        match &mut self.trace {
            Some(w) => w.write_all(&files::trace_line(t)).map_err(|e| format!("traces.jsonl: {e}")),
            None => Ok(()),
        }
    }

    fn on_episode(&mut self, _m: &EpisodeMetrics) -> Result<(), String> {
        Ok(())
    }

    fn on_checkpoint(&mut self, episode: usize, learner: &Learner, eval: &EvalReport) -> Result<(), String> {
        let name = format!("checkpoint-{episode:06}.lsc");
        fs::write(self.dir.join(&name), save_learner(learner, &self.cfg)).map_err(|e| format!("{name}: {e}"))?;
        self.written.push(name);
        let name = format!("eval-{episode:06}.json");
        fs::write(self.dir.join(&name), files::eval_json(eval)).map_err(|e| format!("{name}: {e}"))?;
        self.written.push(name);
        Ok(())
    }
}

fn write_eval(out: &mut OutDir, report: &EvalReport) -> Result<(), CliError> {
    out.write("eval.csv", &files::eval_csv(report))?;
    out.write("eval.json", &files::eval_json(report))?;
    Ok(())
}

fn eval_line(report: &EvalReport) -> String {
    format!(
        "mean_reward={:.4} kills={} deaths={} kd_ratio={:.4} successes={} overloads={} mean_msg={:.2}",
        report.mean_reward,
        report.n_kills,
        report.n_deaths,
        report.kd_ratio,
        report.n_success,
        report.n_overload,
        report.cost.mean_msg
    )
}

fn run_train(args: &ConfigArgs, seed: Option<u64>, variant: Option<Variant>, trace: bool) -> Result<Vec<String>, CliError> {
    let mut cfg = load_config(args)?;
    if let Some(v) = variant {
        cfg = v.apply(&cfg);
    }
    let seed = seed.unwrap_or(cfg.seeds[0]);
    let mut out = OutDir::create(&out_root(args, &cfg))?;
    let text = config::to_toml(&cfg);
    out.write("config.toml", text.as_bytes())?;
    let trace = if trace {
        let p = out.path("traces.jsonl");
        Some(BufWriter::new(fs::File::create(&p).map_err(|e| CliError::io(&p, e))?))
    } else {
        None
    };
    let mut writer = RunWriter {
        dir: out.root.clone(),
        cfg: cfg.clone(),
        trace,
        written: Vec::new(),
    };
    let outcome = train(&cfg, seed, &mut writer)?;
    if let Some(mut w) = writer.trace.take() {
        w.flush().map_err(|e| CliError::io(&out.path("traces.jsonl"), e))?;
        drop(w);
        out.record("traces.jsonl")?;
    }
    for name in &writer.written {
        out.record(name)?;
    }
    out.write("metrics.csv", &files::metrics_csv(&outcome.metrics))?;
    out.write("checkpoint.lsc", &save_learner(&outcome.learner, &cfg))?;
    let report = evaluate(&outcome.learner, &cfg, cfg.eval_trials, seed)?;
    write_eval(&mut out, &report)?;
    let root = out.root.clone();
    out.finish("train", Some(seed), &text)?;
    let last = outcome.metrics.last().map(|m| m.episode_reward).unwrap_or(0.0);
    Ok(vec![
        format!(
            "trained scenario={} topology={} seed={} episodes={} transitions={} updates={} last_reward={:.4}",
            cfg.scenario.name(),
            cfg.topology,
            seed,
            outcome.metrics.len(),
            outcome.transitions,
            outcome.updates,
            last
        ),
        format!("eval {}", eval_line(&report)),
        format!("wrote {}", root.display()),
    ])
}

fn run_eval(args: &ConfigArgs, checkpoint: &Path, trials: Option<usize>, seed: u64) -> Result<Vec<String>, CliError> {
    let cfg = load_config(args)?;
    let learner = read_checkpoint(checkpoint, &cfg)?;
    let report = evaluate(&learner, &cfg, trials.unwrap_or(cfg.eval_trials), seed)?;
    let mut out = OutDir::create(&out_root(args, &cfg))?;
    write_eval(&mut out, &report)?;
    let root = out.root.clone();
    out.finish("eval", Some(seed), &config::to_toml(&cfg))?;
    Ok(vec![format!("eval {}", eval_line(&report)), format!("wrote {}", root.display())])
}

fn run_sweep_cmd(args: &ConfigArgs, variants: &[Variant], seeds: &[u64], jobs: Option<usize>) -> Result<Vec<String>, CliError> {
    let mut cfg = load_config(args)?;
    if !seeds.is_empty() {
        cfg.seeds = seeds.to_vec();
    }
    if variants.is_empty() {
        return Err(CliError::Usage("no variants to sweep".into()));
    }
    let (rows, agg) = run_sweep(&cfg, variants, jobs)?;
    let mut out = OutDir::create(&out_root(args, &cfg))?;
    out.write("sweep.csv", &files::sweep_csv(&rows, &agg))?;
    let root = out.root.clone();
    out.finish("sweep", None, &config::to_toml(&cfg))?;
    let mut lines: Vec<String> = agg
        .iter()
        .map(|a| {
            let f = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
            format!(
                "variant={} runs={} failed={} first_reward={} final_reward={} eval_reward={} kd_ratio={} mean_msg={}",
                a.variant,
                a.runs,
                a.failed,
                f(a.first_reward),
                f(a.final_reward),
                f(a.eval_reward),
                f(a.kd_ratio),
                f(a.mean_msg)
            )
        })
        .collect();
    for r in rows.iter().filter(|r| r.error.is_some()) {
        lines.push(format!("failed variant={} seed={} msg={:?}", r.variant, r.seed, r.error.as_deref().unwrap_or("")));
    }
    lines.push(format!("wrote {}", root.display()));
    Ok(lines)
}

fn run_cost(kind: &str, n: usize, steps: usize, radius: f64, seed: u64) -> Result<Vec<String>, CliError> {
    let kinds: Vec<TopologyKind> = if kind == "all" {
        TopologyKind::ALL.to_vec()
    } else {
        vec![kind.parse().map_err(|e| CliError::Usage(format!("{e}")))?]
    };
    let rows = cost_rows(&kinds, n, steps, radius, seed)?;
    Ok(rows.iter().map(CostRow::line).collect())
}

fn run_inspect(args: &ConfigArgs, checkpoint: &Path, step: usize, seed: u64) -> Result<Vec<String>, CliError> {
    let cfg = load_config(args)?;
    let learner = read_checkpoint(checkpoint, &cfg)?;
    let snap = inspect(&learner, &cfg, seed, step)?;
    let mut out = OutDir::create(&out_root(args, &cfg))?;
    let edges = format!("edges-{:04}.txt", snap.step);
    let msgs = format!("messages-{:04}.json", snap.step);
    out.write(&edges, files::edge_list(&snap.topology).as_bytes())?;
    out.write(&msgs, &files::snapshot_json(&snap))?;
    let root = out.root.clone();
    out.finish("inspect", Some(seed), &config::to_toml(&cfg))?;
    Ok(vec![
        format!(
            "step={} agents={} leaders={} n_msg={} n_bandwidth={}",
            snap.step,
            snap.agents.len(),
            snap.topology.high_level.len(),
            snap.cost.n_msg,
            snap.cost.n_bandwidth
        ),
        format!("wrote {}", root.join(edges).display()),
        format!("wrote {}", root.join(msgs).display()),
    ])
}

/// Runs a parsed command and returns its stdout lines.
pub fn execute(cli: &Cli) -> Result<Vec<String>, CliError> {
    match &cli.command {
        Command::Train {
            cfg,
            seed,
            variant,
            trace,
        } => run_train(cfg, *seed, *variant, *trace),
        Command::Eval {
            cfg,
            checkpoint,
            trials,
            seed,
        } => run_eval(cfg, checkpoint, *trials, *seed),
        Command::Sweep {
            cfg,
            variants,
            seeds,
            jobs,
        } => run_sweep_cmd(cfg, variants, seeds, *jobs),
        Command::Cost {
            kind,
            n,
            steps,
            radius,
            seed,
        } => run_cost(kind, *n, *steps, *radius, *seed),
        Command::Inspect {
            cfg,
            checkpoint,
            step,
            seed,
        } => run_inspect(cfg, checkpoint, *step, *seed),
    }
}

/// Parses `args`, runs the command, prints its output and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e.to_string();
            let msg = first.lines().next().unwrap_or("bad arguments").trim_start_matches("error: ");
            eprintln!("{}", CliError::Usage(msg.to_string()).line());
            return 2;
        }
    };
    match execute(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.line());
            e.code()
        }
    }
}
