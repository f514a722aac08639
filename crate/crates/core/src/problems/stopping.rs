//! Optimal stopping with T exercise dates and the Bermudan basket put.
//!
//! With continuation value x_t, f_t(ξ_t, x_t) = max{g_t(ξ_t), β x_t} for
//! t < T and f_T(ξ_T, x) = g_T(ξ_T). The decision x is a dummy scalar.

use crate::error::{MccoError, Result};
use crate::problem::{scalar, FeasibleSet, MccoProblem, ProblemBuilder, Vector};
use crate::randomness::RngStream;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Transition of the state vector between exercise dates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StateKernel {
    /// Independent geometric Brownian motions over one period:
    /// ln(ξ_{t+1}/ξ_t) ~ N(drift - σ²/2, σ²) per coordinate.
    Gbm { drift: f64, sigma: f64 },
    /// ξ_{t+1} = ξ_t + drift + sd·Z.
    RandomWalk { drift: f64, sd: f64 },
    /// ξ_{t+1} ~ N(mean, sd²) independently of the past.
    Iid { mean: f64, sd: f64 },
}

impl StateKernel {
    fn step(&self, prev: &Vector, s: &mut RngStream) -> Vector {
        match *self {
            StateKernel::Gbm { drift, sigma } => {
                prev.map(|p| p * (drift - 0.5 * sigma * sigma + sigma * s.normal()).exp())
            }
            StateKernel::RandomWalk { drift, sd } => prev.map(|p| p + drift + sd * s.normal()),
            StateKernel::Iid { mean, sd } => prev.map(|_| mean + sd * s.normal()),
        }
    }

    fn check(&self) -> Result<()> {
        let ok = match *self {
            StateKernel::Gbm { drift, sigma } => drift.is_finite() && sigma >= 0.0,
            StateKernel::RandomWalk { drift, sd } => drift.is_finite() && sd >= 0.0,
            StateKernel::Iid { mean, sd } => mean.is_finite() && sd >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(MccoError::InvalidParams(format!("bad kernel {self:?}")))
        }
    }
}

/// Exercise payoff applied to the average of the state coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payoff {
    Put { strike: f64 },
    Call { strike: f64 },
}

impl Payoff {
    pub fn eval(&self, state: &Vector) -> f64 {
        let avg = state.mean();
        match *self {
            Payoff::Put { strike } => (strike - avg).max(0.0),
            Payoff::Call { strike } => (avg - strike).max(0.0),
        }
    }
}

/// A stopping problem over `stages` dates whose first state is the constant
/// vector `initial`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingSpec {
    pub stages: usize,
    pub initial: Vec<f64>,
    pub kernel: StateKernel,
    pub payoff: Payoff,
    /// Per-period discount factor β.
    pub discount: f64,
}

/// Stopping problem from arbitrary payoff and transition closures.
pub fn optimal_stopping(
    name: &str,
    stages: usize,
    state_dim: usize,
    first: impl Fn(&mut RngStream) -> Vector + Send + Sync + 'static,
    kernel: impl Fn(&Vector, &mut RngStream) -> Vector + Send + Sync + 'static,
    payoff: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
    discount: f64,
) -> Result<MccoProblem> {
    if stages == 0 || state_dim == 0 || !(discount > 0.0) {
        return Err(MccoError::InvalidParams(
            "stopping needs T >= 1, a state and a positive discount".into(),
        ));
    }
    let payoff = Arc::new(payoff);
    let kernel = Arc::new(kernel);
    let mut b = ProblemBuilder::new(name, vec![1; stages + 1], vec![state_dim; stages])
        .sampler(1, move |_, s| first(s))
        .feasible(FeasibleSet::boxed(vec![0.0], vec![1.0])?);
    for t in 2..=stages {
        let k = kernel.clone();
        b = b.sampler(t, move |h, s| k(&h[t - 2], s));
    }
    for t in 1..stages {
        let g = payoff.clone();
        b = b.integrand(t, move |xi, x| scalar(g(xi).max(discount * x[0])));
    }
    let g = payoff.clone();
    b.integrand(stages, move |xi, _| scalar(g(xi))).build()
}

pub fn stopping(spec: &StoppingSpec) -> Result<MccoProblem> {
    spec.kernel.check()?;
    if spec.initial.is_empty() || spec.initial.iter().any(|v| !v.is_finite()) {
        return Err(MccoError::InvalidParams("initial state must be finite and non-empty".into()));
    }
    let s0 = Vector::from_vec(spec.initial.clone());
    let kernel = spec.kernel;
    let payoff = spec.payoff;
    optimal_stopping(
        "stopping",
        spec.stages,
        s0.len(),
        move |_| s0.clone(),
        move |prev, s| kernel.step(prev, s),
        move |xi| payoff.eval(xi),
        spec.discount,
    )
}

/// Basket put on `m` assets with GBM prices starting at `s0`, strike `k`,
/// rate γ, volatility σ and unit spacing between the `stages` dates.
pub fn bermudan(m: usize, k: f64, gamma: f64, sigma: f64, stages: usize, s0: f64) -> Result<MccoProblem> {
    if m == 0 || !(s0 > 0.0) || !(sigma >= 0.0) {
        return Err(MccoError::InvalidParams("bermudan needs m >= 1, s0 > 0 and sigma >= 0".into()));
    }
    let spec = StoppingSpec {
        stages,
        initial: vec![s0; m],
        kernel: StateKernel::Gbm { drift: gamma, sigma },
        payoff: Payoff::Put { strike: k },
        discount: (-gamma).exp(),
    };
    let mut p = stopping(&spec)?;
    p.rename("bermudan");
    Ok(p)
}

/// Cheap stand-in for the basket put used when tuning level rates: the
/// basket average is replaced by an i.i.d. standard normal and the put is
/// struck at zero.
pub fn bermudan_surrogate(gamma: f64, stages: usize) -> Result<MccoProblem> {
    let spec = StoppingSpec {
        stages,
        initial: vec![0.0],
        kernel: StateKernel::Iid { mean: 0.0, sd: 1.0 },
        payoff: Payoff::Put { strike: 0.0 },
        discount: (-gamma).exp(),
    };
    let mut p = stopping(&spec)?;
    p.rename("bermudan_surrogate");
    Ok(p)
}
