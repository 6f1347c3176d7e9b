use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use drsel_core::par::Execution;
use drsel_core::sim::{quantile, run_policy, ExperimentTrace, Policy, SimConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::spec::Resolved;
use crate::CliError;

/// Command-line settings shared by every subcommand.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed_offset: u64,
    /// Concurrent runs; `None` uses every core.
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl RunOptions {
    pub fn out_dir(&self, resolved: &Resolved) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| resolved.spec.out_dir.clone())
    }

    pub fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            if j == 0 {
                return Err(CliError::Config("--jobs must be at least 1".into()));
            }
            b = b.num_threads(j);
        }
        b.build().map_err(|e| CliError::Runtime(e.into()))
    }
}

/// One entry of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub policy: Policy,
    pub seed: u64,
    pub final_cum_regret: f64,
    pub wall_time_s: f64,
    pub infeasible_steps: usize,
    pub trace: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub objective: String,
    pub runs: Vec<RunRecord>,
}

pub fn trace_name(policy: Policy, seed: u64) -> String {
    format!("trace_{}_seed{seed}.csv", policy.name())
}

/// Runs every `(policy, seed)` pair of the spec with `sim` and writes the
/// traces, `summary.json` and `plot_data.csv` into `out`.
pub fn run_set(resolved: &Resolved, sim: &SimConfig, opts: &RunOptions, out: &Path) -> Result<Summary, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(anyhow::anyhow!("{}: {e}", out.display())))?;
    let pairs: Vec<(Policy, u64)> = resolved
        .policies
        .iter()
        .flat_map(|&p| resolved.spec.seeds.iter().map(move |&s| (p, s + opts.seed_offset)))
        .collect();
    let pool = opts.pool()?;
    let results: Vec<Result<(RunRecord, ExperimentTrace), CliError>> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(policy, seed)| {
                let mut cfg = sim.clone();
                cfg.seed = seed;
                let start = Instant::now();
                let trace = run_policy(&cfg, policy, &resolved.objective, Execution::default())
                    .map_err(|e| CliError::Runtime(anyhow::anyhow!("{policy} seed {seed}: {e}")))?;
                let wall = start.elapsed().as_secs_f64();
                let name = trace_name(policy, seed);
                trace
                    .save_csv(out.join(&name))
                    .map_err(|e| CliError::Runtime(anyhow::anyhow!("writing {name}: {e}")))?;
                let infeasible = trace.infeasible_steps();
                if infeasible > 0 {
                    log::warn!("{policy} seed {seed}: {infeasible} events without a feasible selection");
                }
                log::info!(
                    "{policy} seed {seed}: final regret {:.4} in {wall:.2} s",
                    trace.final_cum_regret()
                );
                let summary = trace.summary(wall);
                Ok((
                    RunRecord {
                        policy,
                        seed,
                        final_cum_regret: summary.final_cum_regret,
                        wall_time_s: wall,
                        infeasible_steps: infeasible,
                        trace: name,
                    },
                    trace,
                ))
            })
            .collect()
    });
    let mut runs = Vec::with_capacity(results.len());
    let mut traces = Vec::with_capacity(results.len());
    for r in results {
        let (rec, tr) = r?;
        runs.push(rec);
        traces.push(tr);
    }
    write_plot_data(&out.join("plot_data.csv"), &resolved.policies, &traces)?;
    let summary = Summary {
        objective: resolved.objective.name().to_string(),
        runs,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serialises");
    fs::write(out.join("summary.json"), json + "\n").map_err(|e| CliError::Runtime(e.into()))?;
    Ok(summary)
}

/// `t,policy,median,q25,q75` of the cumulative regret across seeds.
fn write_plot_data(path: &Path, policies: &[Policy], traces: &[ExperimentTrace]) -> Result<(), CliError> {
    let mut out = String::from("t,policy,median,q25,q75\n");
    for &p in policies {
        let curves: Vec<Vec<f64>> = traces
            .iter()
            .filter(|t| t.policy == p)
            .map(|t| t.cumulative_regret())
            .collect();
        let horizon = curves.iter().map(Vec::len).min().unwrap_or(0);
        for t in 0..horizon {
            let col: Vec<f64> = curves.iter().map(|c| c[t]).collect();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t + 1,
                p.name(),
                quantile(&col, 0.5),
                quantile(&col, 0.25),
                quantile(&col, 0.75)
            ));
        }
    }
    let mut f = fs::File::create(path).map_err(|e| CliError::Runtime(e.into()))?;
    f.write_all(out.as_bytes()).map_err(|e| CliError::Runtime(e.into()))?;
    Ok(())
}

pub fn cmd_run(resolved: &Resolved, opts: &RunOptions) -> Result<Summary, CliError> {
    let out = opts.out_dir(resolved);
    run_set(resolved, &resolved.sim, opts, &out)
}
