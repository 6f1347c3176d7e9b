//! Logistic link and the quadratic variational lower bound on it.

use super::{Context, Theta};
use crate::Result;

/// Below this magnitude `ell` returns its analytic limit.
pub const XI_EPS: f64 = 1e-8;

/// `1 / (1 + e^-x)`, evaluated without overflow for any finite `x`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln sigmoid(x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Opt-in (stay) probability `sigmoid(x̂ᵀθ)`.
pub fn logistic_prob(theta: &Theta, ctx: &Context) -> Result<f64> {
    Ok(sigmoid(ctx.dot(theta)?))
}

/// `(1/2 - sigmoid(ξ)) / 2ξ`, written as `-tanh(ξ/2) / 4ξ` to avoid
/// cancellation near zero. Even in `ξ`, strictly negative, bounded by 1/8
/// in magnitude.
pub fn ell(xi: f64) -> f64 {
    let a = xi.abs();
    if a <= XI_EPS {
        -0.125
    } else {
        -(0.5 * a).tanh() / (4.0 * a)
    }
}

/// `ln` of the lower bound `sigmoid(ξ) exp[(s-ξ)/2 + ℓ(ξ)(s²-ξ²)]` with
/// `s = (2z-1) x̂ᵀθ`.
pub fn log_variational_likelihood(z: bool, theta: &Theta, ctx: &Context, xi: f64) -> Result<f64> {
    let s = signed_score(z, ctx.dot(theta)?);
    Ok(log_sigmoid(xi) + 0.5 * (s - xi) + ell(xi) * (s * s - xi * xi))
}

pub fn variational_likelihood(z: bool, theta: &Theta, ctx: &Context, xi: f64) -> Result<f64> {
    Ok(log_variational_likelihood(z, theta, ctx, xi)?.exp())
}

/// Exact likelihood `P(z | θ, x̂) = sigmoid((2z-1) x̂ᵀθ)`.
pub fn likelihood(z: bool, theta: &Theta, ctx: &Context) -> Result<f64> {
    Ok(sigmoid(signed_score(z, ctx.dot(theta)?)))
}

#[inline]
pub(crate) fn signed_score(z: bool, score: f64) -> f64 {
    if z {
        score
    } else {
        -score
    }
}
