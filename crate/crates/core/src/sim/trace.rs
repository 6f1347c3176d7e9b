use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::policy::Policy;
use crate::Result;

/// One event of an experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// 1-based event index.
    pub t: usize,
    pub selected: Vec<usize>,
    /// Probabilities the policy handed to the solver, for the selected customers.
    pub policy_probs: Vec<f64>,
    /// True opt-in probabilities of the selected customers.
    pub true_probs: Vec<f64>,
    /// Outcome of each selected customer.
    pub outcomes: Vec<bool>,
    pub spend: f64,
    /// Realised reduction `Σ d z`.
    pub reward: f64,
    /// Objective of the selection under the true probabilities (higher is
    /// better; target objectives report the negated cost).
    pub expected_reward: f64,
    /// Same quantity for the clairvoyant selection.
    pub oracle_value: f64,
    pub step_regret: f64,
    pub cum_regret: f64,
    /// The policy's solver reported no feasible selection.
    pub infeasible: bool,
    /// The policy's solver certified optimality.
    pub solver_optimal: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepTiming {
    /// Thompson sampling / index computation.
    pub sample_s: f64,
    pub solve_s: f64,
    /// Posterior updates.
    pub update_s: f64,
}

impl StepTiming {
    pub fn round_s(&self) -> f64 {
        self.sample_s + self.solve_s + self.update_s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentTrace {
    pub policy: Policy,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    /// Wall-clock split per step; not part of the CSV output.
    pub timings: Vec<StepTiming>,
}

pub const CSV_HEADER: [&str; 10] = [
    "t",
    "policy",
    "seed",
    "n_selected",
    "spend",
    "reward",
    "expected_reward",
    "oracle_value",
    "step_regret",
    "cum_regret",
];

impl ExperimentTrace {
    pub fn new(policy: Policy, seed: u64) -> Self {
        ExperimentTrace {
            policy,
            seed,
            steps: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn final_cum_regret(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cum_regret)
    }

    pub fn cumulative_regret(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.cum_regret).collect()
    }

    pub fn step_regret(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.step_regret).collect()
    }

    pub fn infeasible_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.infeasible).count()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        let policy = self.policy.name();
        let seed = self.seed.to_string();
        for s in &self.steps {
            w.write_record([
                s.t.to_string().as_str(),
                policy,
                &seed,
                &s.selected.len().to_string(),
                &s.spend.to_string(),
                &s.reward.to_string(),
                &s.expected_reward.to_string(),
                &s.oracle_value.to_string(),
                &s.step_regret.to_string(),
                &s.cum_regret.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn summary(&self, wall_time_s: f64) -> RunSummary {
        RunSummary {
            policy: self.policy.name().to_string(),
            seed: self.seed,
            final_cum_regret: self.final_cum_regret(),
            wall_time_s,
        }
    }
}

/// Per-run summary record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub policy: String,
    pub seed: u64,
    pub final_cum_regret: f64,
    pub wall_time_s: f64,
}

/// Mean of `xs[lo..hi]`.
pub fn window_mean(xs: &[f64], lo: usize, hi: usize) -> f64 {
    let s = &xs[lo.min(xs.len())..hi.min(xs.len())];
    if s.is_empty() {
        0.0
    } else {
        s.iter().sum::<f64>() / s.len() as f64
    }
}

/// `(first-decile mean, last-decile mean)` of per-step regret.
pub fn decile_means(step_regret: &[f64]) -> (f64, f64) {
    let n = step_regret.len();
    let k = (n / 10).max(1);
    (window_mean(step_regret, 0, k), window_mean(step_regret, n.saturating_sub(k), n))
}

/// Linear-interpolated quantile of unsorted data.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_rows() {
        let mut tr = ExperimentTrace::new(Policy::Ols, 4);
        tr.steps.push(StepRecord {
            t: 1,
            selected: vec![0, 2],
            policy_probs: vec![0.5, 0.5],
            true_probs: vec![0.4, 0.6],
            outcomes: vec![true, false],
            spend: 0.75,
            reward: 0.5,
            expected_reward: 0.4,
            oracle_value: 0.5,
            step_regret: 0.1,
            cum_regret: 0.1,
            infeasible: false,
            solver_optimal: true,
        });
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,policy,seed,n_selected,spend,reward,expected_reward,oracle_value,step_regret,cum_regret"
        );
        assert_eq!(lines.next().unwrap(), "1,ols,4,2,0.75,0.5,0.4,0.5,0.1,0.1");
        assert!(lines.next().is_none());
    }

    #[test]
    fn empty_trace_has_header_only() {
        let tr = ExperimentTrace::new(Policy::Ucb, 0);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
        assert_eq!(tr.final_cum_regret(), 0.0);
    }

    #[test]
    fn quantiles() {
        let xs = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&xs), 2.5);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert_eq!(quantile(&xs, 0.25), 1.75);
        let (a, b) = decile_means(&(0..100).map(|i| i as f64).collect::<Vec<_>>());
        assert_eq!((a, b), (4.5, 94.5));
    }
}
