use lsc_core::harness::{aggregate, evaluate, summarize, train, AggregateRow, NullObserver, RunConfig, RunSummary, Variant};
use rayon::prelude::*;

use crate::error::CliError;

fn one(base: &RunConfig, variant: Variant, seed: u64) -> RunSummary {
    let cfg = variant.apply(base);
    let run = train(&cfg, seed, &mut NullObserver).and_then(|out| {
        let eval = evaluate(&out.learner, &cfg, cfg.eval_trials, seed)?;
        Ok(summarize(variant, seed, &out.metrics, Some(&eval)))
    });
    run.unwrap_or_else(|e| RunSummary::failed(variant, seed, e.to_string()))
}

/// Trains and evaluates every (variant, seed) pair of `base.seeds`, in
/// parallel on `jobs` threads. Failed runs become rows with an error.
pub fn run_sweep(base: &RunConfig, variants: &[Variant], jobs: Option<usize>) -> Result<(Vec<RunSummary>, Vec<AggregateRow>), CliError> {
    base.validate()?;
    let work: Vec<(Variant, u64)> = variants.iter().flat_map(|&v| base.seeds.iter().map(move |&s| (v, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let rows: Vec<RunSummary> = pool.install(|| work.par_iter().map(|&(v, s)| one(base, v, s)).collect());
    let agg = aggregate(&rows);
    Ok((rows, agg))
}
