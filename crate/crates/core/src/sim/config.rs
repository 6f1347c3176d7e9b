use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Closed interval for a uniform draw; `lo == hi` is a constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..self.hi)
        }
    }

    pub fn mean(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    fn check(&self, name: &str) -> Result<()> {
        if !(self.lo <= self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::invalid(format!("{name}: need finite lo <= hi, got [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }
}

/// Synthetic environment and prior settings.
///
/// Defaults are the reference setting scaled to `N = 200`, `T = 2000`:
/// budgets and tracking targets scale linearly with `N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_customers: usize,
    pub horizon: usize,
    /// Raw context features `m` (the model has `m + 1` parameters).
    pub n_features: usize,
    /// Reducible load per customer, drawn once.
    pub load: Range,
    /// Revenue per customer, drawn once.
    pub revenue: Range,
    /// Budget per event (a count limit for the target objectives).
    pub budget: Range,
    pub context: Range,
    pub theta: Range,
    /// Load-reduction target per event, used by the target objectives.
    pub target: Range,
    /// Prior mean offset scale.
    pub delta: f64,
    /// Prior standard deviation.
    pub sigma: f64,
    pub seed: u64,
    /// One context vector shared by all customers at each event.
    pub shared_context: bool,
    /// Append a fatigue feature: share of the last `w` events in which the
    /// customer was selected. Forces per-customer contexts.
    pub fatigue_window: Option<usize>,
    /// Warn when ‖x̂‖∞ exceeds this.
    pub context_bound: Option<f64>,
    /// Bound on ‖θ*‖∞ checked when the ground truth is generated.
    pub theta_bound: Option<f64>,
    pub observe_iters: usize,
    /// Monte Carlo draws for the one-sided target objective.
    pub mc_samples: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::scaled(200, 2000)
    }
}

impl SimConfig {
    /// Reference setting at population `n`: budgets Unif[0.3n, 0.4n],
    /// targets Unif[0.2n, 0.3n].
    pub fn scaled(n: usize, horizon: usize) -> Self {
        let nf = n as f64;
        SimConfig {
            n_customers: n,
            horizon,
            n_features: 9,
            load: Range::new(0.0, 1.0),
            revenue: Range::new(0.0, 1.0),
            budget: Range::new(0.3 * nf, 0.4 * nf),
            context: Range::new(0.0, 2.0),
            theta: Range::new(-0.4, 0.6),
            target: Range::new(0.2 * nf, 0.3 * nf),
            delta: 0.3,
            sigma: 0.3,
            seed: 0,
            shared_context: true,
            fatigue_window: None,
            context_bound: None,
            theta_bound: None,
            observe_iters: crate::belief::DEFAULT_OBSERVE_ITERS,
            mc_samples: 256,
        }
    }

    /// Parameter dimension `m̂`.
    pub fn theta_dim(&self) -> usize {
        self.n_features + 1 + usize::from(self.fatigue_window.is_some())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_customers == 0 {
            return Err(Error::invalid("n_customers must be at least 1"));
        }
        if self.n_features == 0 {
            return Err(Error::invalid("n_features must be at least 1"));
        }
        for (name, r) in [
            ("load", &self.load),
            ("revenue", &self.revenue),
            ("budget", &self.budget),
            ("context", &self.context),
            ("theta", &self.theta),
            ("target", &self.target),
        ] {
            r.check(name)?;
        }
        if self.load.lo < 0.0 || self.load.hi <= 0.0 {
            return Err(Error::invalid("load must be positive"));
        }
        if self.revenue.lo < 0.0 || self.budget.lo < 0.0 || self.target.lo < 0.0 {
            return Err(Error::invalid("revenue, budget and target must be non-negative"));
        }
        if !(self.sigma > 0.0) || !(self.delta >= 0.0) {
            return Err(Error::invalid("need sigma > 0 and delta >= 0"));
        }
        if self.fatigue_window == Some(0) {
            return Err(Error::invalid("fatigue_window must be positive"));
        }
        if self.mc_samples == 0 {
            return Err(Error::invalid("mc_samples must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_scaled() {
        let c = SimConfig::default();
        c.validate().unwrap();
        assert_eq!(c.budget, Range::new(60.0, 80.0));
        assert_eq!(c.target, Range::new(40.0, 60.0));
        assert_eq!(c.theta_dim(), 10);
        let full = SimConfig::scaled(1000, 100);
        assert_eq!(full.budget, Range::new(300.0, 400.0));
        assert_eq!(full.target, Range::new(200.0, 300.0));
    }

    #[test]
    fn invalid_ranges_rejected() {
        for bad in [
            SimConfig {
                context: Range::new(2.0, 0.0),
                ..Default::default()
            },
            SimConfig {
                sigma: 0.0,
                ..Default::default()
            },
            SimConfig {
                n_customers: 0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: SimConfig = serde_json::from_str(r#"{"n_customers": 20, "horizon": 5}"#).unwrap();
        assert_eq!(c.n_customers, 20);
        assert_eq!(c.n_features, 9);
        assert!(serde_json::from_str::<SimConfig>(r#"{"n_custmers": 20}"#).is_err());
    }
}
