use std::fs;
use std::path::PathBuf;

use drsel_core::sim::{quantile, Policy};

use crate::run::{run_set, RunOptions};
use crate::spec::Resolved;
use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub delta: f64,
    pub sigma: f64,
    pub median_final_cum_regret: f64,
    pub iqr: f64,
    pub dir: PathBuf,
}

pub fn point_dir(delta: f64, sigma: f64) -> String {
    format!("delta{delta}_sigma{sigma}")
}

/// One run set per `(δ, σ)` in its own directory plus `sweep.csv`, scored
/// on the spec's first policy.
pub fn cmd_sweep(
    resolved: &Resolved,
    deltas: &[f64],
    sigmas: &[f64],
    opts: &RunOptions,
) -> Result<Vec<SweepRow>, CliError> {
    if deltas.is_empty() || sigmas.is_empty() {
        return Err(CliError::Config("sweep grid is empty: give --delta and --sigma".into()));
    }
    let scored: Policy = resolved.policies[0];
    let out = opts.out_dir(resolved);
    let mut rows = Vec::new();
    for &delta in deltas {
        for &sigma in sigmas {
            let mut sim = resolved.sim.clone();
            sim.delta = delta;
            sim.sigma = sigma;
            sim.validate()
                .map_err(|e| CliError::Config(format!("grid point delta={delta} sigma={sigma}: {e}")))?;
            let dir = out.join(point_dir(delta, sigma));
            log::info!("sweep point delta={delta} sigma={sigma}");
            let summary = run_set(resolved, &sim, opts, &dir)?;
            let finals: Vec<f64> = summary
                .runs
                .iter()
                .filter(|r| r.policy == scored)
                .map(|r| r.final_cum_regret)
                .collect();
            rows.push(SweepRow {
                delta,
                sigma,
                median_final_cum_regret: quantile(&finals, 0.5),
                iqr: quantile(&finals, 0.75) - quantile(&finals, 0.25),
                dir,
            });
        }
    }
    let mut csv = String::from("delta,sigma,median_final_cum_regret,iqr\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", r.delta, r.sigma, r.median_final_cum_regret, r.iqr));
    }
    fs::create_dir_all(&out).map_err(|e| CliError::Runtime(e.into()))?;
    fs::write(out.join("sweep.csv"), csv).map_err(|e| CliError::Runtime(e.into()))?;
    Ok(rows)
}
