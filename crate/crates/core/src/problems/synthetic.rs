//! The three-stage sine benchmark and a linear verification chain.

use crate::error::{MccoError, Result};
use crate::problem::{scalar, FeasibleSet, Matrix, MccoProblem, ProblemBuilder, Vector};
use std::f64::consts::FRAC_PI_2;

/// f_1 = sin(ξ_1 + x_1), f_2 = sin(ξ_2 - x_2), f_3 = ξ_3 + a·x with
/// ξ_1 ~ N(π/2, 1), ξ_{t+1} | ξ_t ~ N(ξ_t, 1).
///
/// With the default slope a = 0 the objective is the constant e^{-1/2}.
pub fn synthetic(slope: f64) -> Result<MccoProblem> {
    if !slope.is_finite() {
        return Err(MccoError::InvalidParams("slope must be finite".into()));
    }
    ProblemBuilder::new("synthetic", vec![1; 4], vec![1; 3])
        .sampler(1, |_, s| scalar(FRAC_PI_2 + s.normal()))
        .sampler(2, |h, s| scalar(h[0][0] + s.normal()))
        .sampler(3, |h, s| scalar(h[1][0] + s.normal()))
        .integrand(1, |xi, x| scalar((xi[0] + x[0]).sin()))
        .jacobian(1, |xi, x| Matrix::from_element(1, 1, (xi[0] + x[0]).cos()))
        .integrand(2, |xi, x| scalar((xi[0] - x[0]).sin()))
        .jacobian(2, |xi, x| Matrix::from_element(1, 1, -(xi[0] - x[0]).cos()))
        .integrand(3, move |xi, x| scalar(xi[0] + slope * x[0]))
        .jacobian(3, move |_, _| Matrix::from_element(1, 1, slope))
        .feasible(FeasibleSet::boxed(vec![-10.0], vec![10.0])?)
        .build()
}

/// e^{-1/2} cos(sin(a x)).
pub fn synthetic_exact_value(slope: f64, x: f64) -> f64 {
    (-0.5f64).exp() * (slope * x).sin().cos()
}

/// Derivative of [`synthetic_exact_value`] in x.
pub fn synthetic_exact_gradient(slope: f64, x: f64) -> f64 {
    -(-0.5f64).exp() * (slope * x).sin().sin() * (slope * x).cos() * slope
}

/// f_t(ξ, x) = a_t x + ξ with i.i.d. ξ_t ~ N(mean, sd²).
pub fn linear_chain(a: &[f64], noise_mean: f64, noise_sd: f64) -> Result<MccoProblem> {
    if a.is_empty() || a.iter().any(|v| !v.is_finite()) || !(noise_sd >= 0.0) {
        return Err(MccoError::InvalidParams(
            "linear chain needs finite slopes and a nonnegative noise sd".into(),
        ));
    }
    let t = a.len();
    let mut b = ProblemBuilder::new("linear_chain", vec![1; t + 1], vec![1; t])
        .feasible(FeasibleSet::boxed(vec![-1e3], vec![1e3])?);
    for (i, &ai) in a.iter().enumerate() {
        b = b
            .sampler(i + 1, move |_, s| scalar(noise_mean + noise_sd * s.normal()))
            .integrand(i + 1, move |xi, x| scalar(ai * x[0] + xi[0]))
            .jacobian(i + 1, move |_, _| Matrix::from_element(1, 1, ai));
    }
    b.build()
}

/// ∏a_t · x + mean · Σ_t ∏_{s<t} a_s.
pub fn linear_chain_exact_value(a: &[f64], noise_mean: f64, x: &Vector) -> f64 {
    let mut prefix = 1.0;
    let mut shift = 0.0;
    for ai in a {
        shift += prefix * noise_mean;
        prefix *= ai;
    }
    prefix * x[0] + shift
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argument_cancellation() {
        let p = synthetic(0.0).unwrap();
        let v = p.evaluate_integrand(2, &scalar(FRAC_PI_2), &scalar(FRAC_PI_2)).unwrap();
        assert_eq!(v[0], 0.0);
    }

    #[test]
    fn linear_constant_derivative() {
        let p = linear_chain(&[2.0], 0.0, 1.0).unwrap();
        let j = p.integrand_jacobian(1, &scalar(0.3), &scalar(-1.0)).unwrap();
        assert_eq!(j[(0, 0)], 2.0);
        let v = linear_chain_exact_value(&[2.0, 3.0, 5.0], 1.0, &scalar(1.0));
        assert_eq!(v, 30.0 + 1.0 + 2.0 + 6.0);
    }

    #[test]
    fn exact_gradient_matches_difference_quotient() {
        for x in [-1.0, 0.2, 0.9] {
            let h = 1e-6;
            let fd = (synthetic_exact_value(1.3, x + h) - synthetic_exact_value(1.3, x - h)) / (2.0 * h);
            assert!((fd - synthetic_exact_gradient(1.3, x)).abs() < 1e-8);
        }
    }
}
