//! Synthetic demand-response environment and experiment engine.

mod bench;
mod config;
mod env;
mod policy;
mod regret;
mod trace;

pub use bench::{bench_rounds, BenchReport};
pub use config::{Range, SimConfig};
pub use env::{
    draw_event, generate_population, stream, make_priors, step_environment, stream_rng, EventDraw, GroundTruth, Population,
};
pub use policy::{
    oracle_select, run_ols, run_oracle, run_policy, run_policy_on, run_random, run_ucb, Objective, Policy, UcbState,
};
pub use regret::{bayes_regret, BayesRegret};
pub use trace::{
    decile_means, median, quantile, window_mean, ExperimentTrace, RunSummary, StepRecord, StepTiming, CSV_HEADER,
};

