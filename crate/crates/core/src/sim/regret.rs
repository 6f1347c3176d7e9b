use super::config::SimConfig;
use super::env::{generate_population, make_priors, stream, stream_rng, GroundTruth};
use super::policy::{run_ols, Objective};
use crate::par::Execution;
use crate::{Error, Result};

/// Monte Carlo estimate of the Bayesian regret of Thompson sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct BayesRegret {
    pub mean: f64,
    pub std_error: f64,
    /// Final cumulative regret of each realization.
    pub values: Vec<f64>,
    /// Cumulative regret per step averaged over realizations.
    pub mean_curve: Vec<f64>,
}

impl BayesRegret {
    /// `mean_curve[T-1] / mean_curve[T/4 - 1]`, or `None` when the horizon
    /// is shorter than 4 or the earlier value is not positive.
    pub fn growth_ratio(&self) -> Option<f64> {
        let t = self.mean_curve.len();
        if t < 4 {
            return None;
        }
        let early = self.mean_curve[t / 4 - 1];
        (early > 0.0).then(|| self.mean_curve[t - 1] / early)
    }
}

/// Each realization `k` builds priors around a population drawn with seed
/// `cfg.seed + k`, draws the ground truth from those priors and runs the
/// learner from the priors.
pub fn bayes_regret(
    cfg: &SimConfig,
    n_realizations: usize,
    objective: &Objective,
    exec: Execution,
) -> Result<BayesRegret> {
    if n_realizations < 2 {
        return Err(Error::invalid("bayes_regret needs at least 2 realizations for a standard error"));
    }
    let mut values = Vec::with_capacity(n_realizations);
    let mut curve = vec![0.0; cfg.horizon];
    for k in 0..n_realizations {
        let mut rc = cfg.clone();
        rc.seed = cfg.seed.wrapping_add(k as u64);
        let mut pop = generate_population(&rc, &mut stream_rng(rc.seed, stream::POPULATION, 0))?;
        let priors = make_priors(&pop.truth, rc.delta, rc.sigma, &mut stream_rng(rc.seed, stream::PRIOR, 0))?;
        let mut rng = stream_rng(rc.seed, stream::TRUTH_DRAW, 0);
        pop.truth = GroundTruth {
            thetas: priors.iter().map(|b| b.sample_theta(&mut rng)).collect(),
        };
        let trace = run_ols(&rc, &pop, priors, objective, exec)?;
        for (c, s) in curve.iter_mut().zip(&trace.steps) {
            *c += s.cum_regret;
        }
        values.push(trace.final_cum_regret());
    }
    let n = n_realizations as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    for c in &mut curve {
        *c /= n;
    }
    Ok(BayesRegret {
        mean,
        std_error: (var / n).sqrt(),
        values,
        mean_curve: curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_realization_is_rejected() {
        let cfg = SimConfig::scaled(5, 3);
        assert!(bayes_regret(&cfg, 1, &Objective::Budget, Execution::default()).is_err());
    }

    #[test]
    fn estimate_is_consistent() {
        let cfg = SimConfig::scaled(20, 16);
        let est = bayes_regret(&cfg, 3, &Objective::Budget, Execution::default()).unwrap();
        assert_eq!(est.values.len(), 3);
        assert_eq!(est.mean_curve.len(), 16);
        assert!((est.mean_curve[15] - est.mean).abs() < 1e-9);
        assert!(est.std_error >= 0.0);
        assert!(est.values.iter().all(|&v| v >= -1e-9));
    }
}
