use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::logistic::{ell, log_sigmoid, sigmoid};
use super::{Context, Theta};
use crate::{Error, Result};

/// Diagonal jitter added once when a Cholesky factorisation fails.
pub const PD_JITTER: f64 = 1e-9;

/// Posterior/ξ alternations per observation.
pub const DEFAULT_OBSERVE_ITERS: usize = 3;

/// Relative asymmetry tolerated (and then removed) at construction.
const SYMMETRY_TOL: f64 = 1e-8;

/// Gaussian belief `N(mean, covariance)` over a customer's logistic
/// parameters. The covariance is kept symmetric positive definite; its
/// lower Cholesky factor is cached for sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    chol_l: DMatrix<f64>,
}

/// Intermediate states of [`GaussianBelief::observe_traced`].
#[derive(Clone, Debug)]
pub struct VariationalTrace {
    /// `ξ₀` (from the prior) followed by the value after each iteration.
    pub xis: Vec<f64>,
    /// Posterior after each iteration; the last one is the result.
    pub posteriors: Vec<GaussianBelief>,
}

fn factor(cov: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(cov.clone())
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::invalid("belief dimension must be at least 1"));
        }
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: covariance.nrows(),
            });
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("belief entries must be finite"));
        }
        let scale = covariance.amax().max(f64::MIN_POSITIVE);
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::invalid("covariance is not symmetric"));
        }
        let mut covariance = (&covariance + covariance.transpose()) * 0.5;
        let chol = match factor(&covariance) {
            Some(c) => c,
            None => {
                for i in 0..n {
                    covariance[(i, i)] += PD_JITTER;
                }
                factor(&covariance).ok_or(Error::NotPositiveDefinite)?
            }
        };
        Ok(GaussianBelief {
            mean,
            covariance,
            chol_l: chol.unpack(),
        })
    }

    /// `N(mean, variance · I)`.
    pub fn isotropic(mean: DVector<f64>, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::invalid("variance must be positive"));
        }
        let n = mean.len();
        GaussianBelief::new(mean, DMatrix::identity(n, n) * variance)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn mean_theta(&self) -> Theta {
        Theta::from_vector(self.mean.clone())
    }

    /// Probability under the posterior mean, `sigmoid(x̂ᵀμ)`.
    pub fn mean_prob(&self, ctx: &Context) -> Result<f64> {
        ctx.check_dim(self.dim())?;
        Ok(sigmoid(ctx.augmented().dot(&self.mean)))
    }

    /// Draw `θ = μ + L w` with `w ~ N(0, I)`.
    pub fn sample_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> Theta {
        let w = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        Theta::from_vector(&self.mean + &self.chol_l * w)
    }

    /// Thompson draw of the opt-in probability for context `ctx`.
    pub fn sample_prob<R: Rng + ?Sized>(&self, ctx: &Context, rng: &mut R) -> Result<f64> {
        ctx.check_dim(self.dim())?;
        let theta = self.sample_theta(rng);
        Ok(sigmoid(ctx.augmented().dot(theta.as_vector())))
    }

    /// Closed-form variational posterior for one observation:
    ///
    /// `Σ̂⁻¹ = Σ⁻¹ + 2|ℓ(ξ)| x̂x̂ᵀ`, `μ̂ = Σ̂ [Σ⁻¹μ + (z - 1/2) x̂]`.
    ///
    /// Evaluated as a Sherman–Morrison rank-one downdate; no inverse is formed.
    pub fn posterior_update(&self, ctx: &Context, z: bool, xi: f64) -> Result<Self> {
        ctx.check_dim(self.dim())?;
        let x = ctx.augmented();
        let c = 2.0 * ell(xi).abs();
        let sx = &self.covariance * x;
        let q = x.dot(&sx);
        let denom = 1.0 + c * q;
        let half = if z { 0.5 } else { -0.5 };
        let cov = &self.covariance - (&sx * sx.transpose()) * (c / denom);
        let mean = &self.mean + &sx * ((half - c * x.dot(&self.mean)) / denom);
        GaussianBelief::new(mean, cov)
    }

    /// Optimal variational parameter for this belief: `√(x̂ᵀΣx̂ + (x̂ᵀμ)²)`.
    pub fn xi(&self, ctx: &Context) -> Result<f64> {
        ctx.check_dim(self.dim())?;
        let x = ctx.augmented();
        let m = x.dot(&self.mean);
        Ok((x.dot(&(&self.covariance * x)) + m * m).max(0.0).sqrt())
    }

    /// Fold in one observation: initialise ξ from this (prior) belief, then
    /// alternate the posterior update (always from this prior) and the ξ
    /// update `n_iter` times. `n_iter == 0` returns the prior unchanged.
    pub fn observe(&self, ctx: &Context, z: bool, n_iter: usize) -> Result<Self> {
        let mut xi = self.xi(ctx)?;
        let mut post = self.clone();
        for _ in 0..n_iter {
            post = self.posterior_update(ctx, z, xi)?;
            xi = post.xi(ctx)?;
        }
        Ok(post)
    }

    pub fn observe_traced(&self, ctx: &Context, z: bool, n_iter: usize) -> Result<VariationalTrace> {
        let mut xis = vec![self.xi(ctx)?];
        let mut posteriors = Vec::with_capacity(n_iter);
        for _ in 0..n_iter {
            let post = self.posterior_update(ctx, z, *xis.last().unwrap())?;
            xis.push(post.xi(ctx)?);
            posteriors.push(post);
        }
        Ok(VariationalTrace { xis, posteriors })
    }

    fn log_det(&self) -> f64 {
        2.0 * self.chol_l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self
            .chol_l
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal");
        self.chol_l
            .transpose()
            .solve_upper_triangular(&y)
            .expect("cholesky factor has a positive diagonal")
    }

    /// Log of `∫ N(θ; μ, Σ) · bound(z | θ, x̂, ξ) dθ`, the variational lower
    /// bound on the log evidence. The ξ alternation never decreases it.
    pub fn evidence_lower_bound(&self, ctx: &Context, z: bool, xi: f64) -> Result<f64> {
        let post = self.posterior_update(ctx, z, xi)?;
        let half = if z { 0.5 } else { -0.5 };
        let prec_mean = self.solve(&self.mean);
        let lin = &prec_mean + ctx.augmented() * half;
        let l = ell(xi);
        Ok(log_sigmoid(xi) - 0.5 * xi - l * xi * xi
            + 0.5 * (post.log_det() - self.log_det())
            + 0.5 * post.mean.dot(&lin)
            - 0.5 * self.mean.dot(&prec_mean))
    }

    /// `E_q[log N(θ; μ, Σ) + log bound(z | θ, x̂, ξ)]` with this belief as
    /// the prior and `q` the distribution the expectation is taken over.
    pub fn expected_complete_log_likelihood(
        &self,
        q: &GaussianBelief,
        ctx: &Context,
        z: bool,
        xi: f64,
    ) -> Result<f64> {
        ctx.check_dim(self.dim())?;
        if q.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: q.dim(),
            });
        }
        let k = self.dim() as f64;
        let diff = &q.mean - &self.mean;
        let mut trace = 0.0;
        for j in 0..self.dim() {
            trace += self.solve(&q.covariance.column(j).into_owned())[j];
        }
        let log_prior = -0.5 * (k * (2.0 * PI).ln() + self.log_det() + trace + diff.dot(&self.solve(&diff)));

        let x = ctx.augmented();
        let xm = x.dot(&q.mean);
        let second = x.dot(&(&q.covariance * x)) + xm * xm;
        let sign = if z { 1.0 } else { -1.0 };
        let log_lik = log_sigmoid(xi) + 0.5 * (sign * xm - xi) + ell(xi) * (second - xi * xi);
        Ok(log_prior + log_lik)
    }
}
