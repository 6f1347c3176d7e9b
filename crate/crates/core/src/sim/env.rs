//! Synthetic population, priors and outcome generation.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::SimConfig;
use crate::belief::{sigmoid, Context, GaussianBelief, Theta};
use crate::ocs::Selection;
use crate::{Error, Result};

/// Independent random streams derived from one experiment seed.
pub mod stream {
    pub const POPULATION: u64 = 1;
    pub const PRIOR: u64 = 2;
    pub const EVENT: u64 = 3;
    pub const OUTCOME: u64 = 4;
    pub const SAMPLING: u64 = 5;
    pub const POLICY: u64 = 6;
    pub const TRUTH_DRAW: u64 = 7;
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic generator for `(seed, stream, index)`.
pub fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed ^ splitmix(stream)) ^ index))
}

/// Per-customer ground-truth parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub thetas: Vec<Theta>,
}

impl GroundTruth {
    pub fn prob(&self, i: usize, ctx: &Context) -> Result<f64> {
        Ok(sigmoid(ctx.dot(&self.thetas[i])?))
    }
}

/// Customers' static data plus their hidden parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub truth: GroundTruth,
    pub d: Vec<f64>,
    pub r: Vec<f64>,
}

pub fn generate_population<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<Population> {
    cfg.validate()?;
    let n = cfg.n_customers;
    let d: Vec<f64> = (0..n)
        .map(|_| cfg.load.sample(rng).max(f64::MIN_POSITIVE))
        .collect();
    let r: Vec<f64> = (0..n).map(|_| cfg.revenue.sample(rng)).collect();
    let dim = cfg.theta_dim();
    let thetas = (0..n)
        .map(|_| Theta::new((0..dim).map(|_| cfg.theta.sample(rng)).collect()))
        .collect::<Result<Vec<_>>>()?;
    if let Some(bound) = cfg.theta_bound {
        if let Some(i) = thetas.iter().position(|t| t.max_abs() > bound) {
            return Err(Error::invalid(format!("ground truth of customer {i} exceeds theta_bound {bound}")));
        }
    }
    Ok(Population {
        truth: GroundTruth { thetas },
        d,
        r,
    })
}

/// `N(θ* + δu, σ²I)` with `u ~ Unif[-1, 1]` elementwise.
pub fn make_priors<R: Rng + ?Sized>(
    truth: &GroundTruth,
    delta: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<GaussianBelief>> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("prior sigma must be positive"));
    }
    truth
        .thetas
        .iter()
        .map(|t| {
            let mean = DVector::from_iterator(
                t.dim(),
                t.as_slice().iter().map(|v| v + delta * rng.random_range(-1.0..=1.0)),
            );
            GaussianBelief::isotropic(mean, sigma * sigma)
        })
        .collect()
}

/// Opt-in outcomes for the selected customers, drawn in index order.
/// Unselected customers get no outcome.
pub fn step_environment<R: Rng + ?Sized>(
    sel: &Selection,
    truth: &GroundTruth,
    contexts: &[Context],
    rng: &mut R,
) -> Result<Vec<(usize, bool)>> {
    sel.indices()
        .iter()
        .map(|&i| {
            if i >= truth.thetas.len() || i >= contexts.len() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: truth.thetas.len().min(contexts.len()),
                });
            }
            let p = truth.prob(i, &contexts[i])?;
            Ok((i, rng.random::<f64>() < p))
        })
        .collect()
}

/// One event's externally supplied data.
#[derive(Clone, Debug)]
pub struct EventDraw {
    pub budget: f64,
    pub target: f64,
    /// Raw features shared by all customers, or one vector per customer.
    pub features: Vec<Vec<f64>>,
}

/// Event data for step `t` (1-based); independent of the policy being run.
pub fn draw_event(cfg: &SimConfig, seed: u64, t: usize) -> EventDraw {
    let mut rng = stream_rng(seed, stream::EVENT, t as u64);
    let budget = cfg.budget.sample(&mut rng);
    let target = cfg.target.sample(&mut rng);
    let per_customer = !cfg.shared_context || cfg.fatigue_window.is_some();
    let rows = if per_customer { cfg.n_customers } else { 1 };
    let features = (0..rows)
        .map(|_| (0..cfg.n_features).map(|_| cfg.context.sample(&mut rng)).collect())
        .collect();
    EventDraw {
        budget,
        target,
        features,
    }
}
