use std::fs;

use drsel_core::par::Execution;
use drsel_core::sim::{bench_rounds, BenchReport};

use crate::run::RunOptions;
use crate::spec::Resolved;
use crate::CliError;

/// Times `horizon` events of Thompson sampling for the first seed and writes
/// `bench.json`.
pub fn cmd_bench(resolved: &Resolved, opts: &RunOptions, exec: Execution) -> Result<BenchReport, CliError> {
    let mut sim = resolved.sim.clone();
    sim.seed = resolved.spec.seeds[0] + opts.seed_offset;
    if sim.horizon < 50 {
        log::warn!("bench over {} events; at least 50 give a stable mean", sim.horizon);
    }
    let report = opts
        .pool()?
        .install(|| bench_rounds(&sim, &resolved.objective, exec))
        .map_err(|e| CliError::Runtime(e.into()))?;
    let out = opts.out_dir(resolved);
    fs::create_dir_all(&out).map_err(|e| CliError::Runtime(e.into()))?;
    let json = serde_json::to_string_pretty(&report).expect("report serialises");
    fs::write(out.join("bench.json"), json + "\n").map_err(|e| CliError::Runtime(e.into()))?;
    Ok(report)
}
