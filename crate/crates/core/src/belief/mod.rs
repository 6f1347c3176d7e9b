//! Per-customer Bayesian logistic models.
//!
//! Each customer carries a Gaussian belief over `θ = (α, β)`. Opt-in
//! probabilities are `sigmoid(x̂ᵀθ)` with the augmented context
//! `x̂ = (1, x)`. Observations are folded in with the Jaakkola–Jordan
//! quadratic bound, which keeps the posterior Gaussian.

mod gaussian;
mod logistic;
mod record;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use gaussian::{GaussianBelief, VariationalTrace, DEFAULT_OBSERVE_ITERS, PD_JITTER};
pub use logistic::{
    ell, likelihood, log_sigmoid, log_variational_likelihood, logistic_prob, sigmoid,
    variational_likelihood, XI_EPS,
};
pub use record::BeliefRecord;

/// Logistic parameters: intercept first, then feature weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct Theta(DVector<f64>);

impl Theta {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("theta entries must be finite"));
        }
        if values.is_empty() {
            return Err(Error::invalid("theta must contain an intercept"));
        }
        Ok(Theta(DVector::from_vec(values)))
    }

    pub(crate) fn from_vector(v: DVector<f64>) -> Self {
        Theta(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn intercept(&self) -> f64 {
        self.0[0]
    }

    pub fn weights(&self) -> &[f64] {
        &self.0.as_slice()[1..]
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }
}

impl From<Theta> for Vec<f64> {
    fn from(t: Theta) -> Self {
        t.0.as_slice().to_vec()
    }
}

impl TryFrom<Vec<f64>> for Theta {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Theta::new(v)
    }
}

/// Context vector. Stored in augmented form `x̂ = (1, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Context {
    augmented: DVector<f64>,
}

impl Context {
    /// Build from the raw feature vector `x`; the leading 1 is prepended.
    pub fn new(raw: Vec<f64>) -> Self {
        let mut v = Vec::with_capacity(raw.len() + 1);
        v.push(1.0);
        v.extend(raw);
        Context {
            augmented: DVector::from_vec(v),
        }
    }

    /// Build directly from an augmented vector (no leading 1 is added).
    pub fn from_augmented(augmented: Vec<f64>) -> Self {
        Context {
            augmented: DVector::from_vec(augmented),
        }
    }

    pub fn raw(&self) -> &[f64] {
        &self.augmented.as_slice()[1.min(self.augmented.len())..]
    }

    pub fn augmented(&self) -> &DVector<f64> {
        &self.augmented
    }

    pub fn dim(&self) -> usize {
        self.augmented.len()
    }

    pub fn max_abs(&self) -> f64 {
        self.augmented.amax()
    }

    /// True when `‖x̂‖∞ ≤ bound`. Out-of-range contexts are accepted by
    /// every operation; callers use this to emit a warning.
    pub fn within_bound(&self, bound: f64) -> bool {
        self.max_abs() <= bound
    }

    pub fn dot(&self, theta: &Theta) -> Result<f64> {
        self.check_dim(theta.dim())?;
        Ok(self.augmented.dot(&theta.0))
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.dim(),
            });
        }
        Ok(())
    }
}
