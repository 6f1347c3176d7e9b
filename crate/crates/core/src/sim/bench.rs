use std::time::Instant;

use serde::Serialize;

use super::config::SimConfig;
use super::env::{generate_population, make_priors, stream, stream_rng};
use super::policy::{run_ols, Objective};
use crate::par::Execution;
use crate::Result;

/// Mean wall-clock time per event of one learner run, in seconds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub n_customers: usize,
    pub events: usize,
    pub parallel: bool,
    pub mean_sample_s: f64,
    pub mean_solve_s: f64,
    pub mean_update_s: f64,
    /// Sampling, solve and update together.
    pub mean_round_s: f64,
    pub max_round_s: f64,
    pub mean_selected: f64,
    /// Includes population setup and regret bookkeeping.
    pub total_s: f64,
}

/// Times `cfg.horizon` events of Thompson sampling with `objective`.
pub fn bench_rounds(cfg: &SimConfig, objective: &Objective, exec: Execution) -> Result<BenchReport> {
    let start = Instant::now();
    let pop = generate_population(cfg, &mut stream_rng(cfg.seed, stream::POPULATION, 0))?;
    let priors = make_priors(&pop.truth, cfg.delta, cfg.sigma, &mut stream_rng(cfg.seed, stream::PRIOR, 0))?;
    let trace = run_ols(cfg, &pop, priors, objective, exec)?;
    let n = trace.timings.len().max(1) as f64;
    let mean = |f: fn(&super::trace::StepTiming) -> f64| trace.timings.iter().map(f).sum::<f64>() / n;
    let report = BenchReport {
        n_customers: cfg.n_customers,
        events: trace.timings.len(),
        parallel: exec.is_parallel(),
        mean_sample_s: mean(|t| t.sample_s),
        mean_solve_s: mean(|t| t.solve_s),
        mean_update_s: mean(|t| t.update_s),
        mean_round_s: mean(|t| t.round_s()),
        max_round_s: trace.timings.iter().map(|t| t.round_s()).fold(0.0, f64::max),
        mean_selected: trace.steps.iter().map(|s| s.selected.len() as f64).sum::<f64>() / n,
        total_s: start.elapsed().as_secs_f64(),
    };
    log::debug!("bench: {report:?}");
    Ok(report)
}
