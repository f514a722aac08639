//! Nested entropic risk of a sum of Gaussian increments.
//!
//! For risk aversions μ_0..μ_{T-1} the nest
//!
//! ```text
//! f_t(ξ_t, x_t) = exp(-μ_{t-1} ξ_t) · x_t^{μ_{t-1}/μ_t}    (t < T)
//! f_T(ξ_T, x)   = exp(-μ_{T-1} ξ_T)
//! ```
//!
//! evaluates exp(μ_0 ρ(Σ ξ_t)) where each conditional risk is
//! ρ_t(Z) = μ_t^{-1} log E_t[exp(-μ_t Z)]. Inner values may be negative
//! inside MLMC differences, so the power is applied to |x| with the sign
//! kept; for constant μ the map is linear in x.

use crate::error::{MccoError, Result};
use crate::problem::{scalar, FeasibleSet, Matrix, MccoProblem, ProblemBuilder};

fn signed_pow(x: f64, p: f64) -> f64 {
    if p == 1.0 {
        x
    } else {
        x.signum() * x.abs().powf(p)
    }
}

fn check(mu: &[f64], means: &[f64], sds: &[f64]) -> Result<usize> {
    let t = mu.len();
    if t == 0 || means.len() != t || sds.len() != t {
        return Err(MccoError::InvalidParams(
            "entropic needs T risk aversions, means and sds".into(),
        ));
    }
    if mu.iter().any(|m| !(*m > 0.0)) || sds.iter().any(|s| !(*s >= 0.0)) {
        return Err(MccoError::InvalidParams(
            "risk aversions must be positive and sds nonnegative".into(),
        ));
    }
    Ok(t)
}

/// Entropic nest with ξ_t ~ N(means[t-1], sds[t-1]²) independent, and
/// `mu[t]` = μ_t for t = 0..T-1.
pub fn entropic(mu: &[f64], means: &[f64], sds: &[f64]) -> Result<MccoProblem> {
    let t_count = check(mu, means, sds)?;
    let mut b = ProblemBuilder::new("entropic", vec![1; t_count + 1], vec![1; t_count])
        .feasible(FeasibleSet::boxed(vec![0.0], vec![1.0])?);
    for t in 1..=t_count {
        let (m, sd, a) = (means[t - 1], sds[t - 1], mu[t - 1]);
        b = b.sampler(t, move |_, s| scalar(m + sd * s.normal()));
        if t < t_count {
            let p = a / mu[t];
            b = b
                .integrand(t, move |xi, x| scalar((-a * xi[0]).exp() * signed_pow(x[0], p)))
                .jacobian(t, move |xi, x| {
                    let d = if p == 1.0 { 1.0 } else { p * x[0].abs().powf(p - 1.0) };
                    Matrix::from_element(1, 1, (-a * xi[0]).exp() * d)
                });
        } else {
            b = b
                .integrand(t, move |xi, _| scalar((-a * xi[0]).exp()))
                .jacobian(t, |_, _| Matrix::zeros(1, 1));
        }
    }
    b.build()
}

/// exp(μ_0 Σ_{t=1}^T (-m_t + μ_{t-1} s_t² / 2)).
pub fn entropic_exact_value(mu: &[f64], means: &[f64], sds: &[f64]) -> Result<f64> {
    check(mu, means, sds)?;
    let s: f64 = (0..mu.len())
        .map(|i| -means[i] + mu[i] * sds[i] * sds[i] / 2.0)
        .sum();
    Ok((mu[0] * s).exp())
}
