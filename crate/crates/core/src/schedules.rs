//! Sample-size and truncation schedules driven by problem constants.

use crate::error::{MccoError, Result};
use crate::mlmc_value::default_rates;
use crate::randomness::LevelDistribution;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Regularity and moment constants of a problem. Stage-indexed vectors
/// start at stage 1.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConstants {
    /// Number of stages T.
    pub stages: usize,
    /// Lipschitz constants L_1..L_T.
    #[serde(default)]
    pub lipschitz: Option<Vec<f64>>,
    /// Smoothness constants S_1..S_T.
    #[serde(default)]
    pub smoothness: Option<Vec<f64>>,
    /// Conditional standard deviations σ_1..σ_T.
    #[serde(default)]
    pub sigma: Option<Vec<f64>>,
    /// Moment bounds of the terminal integrand keyed by order p.
    #[serde(default)]
    pub mu_bar: BTreeMap<u32, f64>,
    /// Moment bounds of the terminal gradient keyed by order p.
    #[serde(default)]
    pub nu_bar: BTreeMap<u32, f64>,
    /// Hölder constants R_t and exponents ρ_t of the Hessians.
    #[serde(default)]
    pub holder_r: Option<Vec<f64>>,
    #[serde(default)]
    pub rho: Option<Vec<f64>>,
    /// Sub-Gaussian variance proxy of one tree estimate.
    #[serde(default)]
    pub zeta2: Option<f64>,
    /// Overrides of the moment-inequality constants B_p.
    #[serde(default)]
    pub b: BTreeMap<u32, f64>,
    /// Diameter of the feasible set.
    #[serde(default)]
    pub diameter: Option<f64>,
    /// Lipschitz constant of the MLMC estimator in x.
    #[serde(default)]
    pub l_prime: Option<f64>,
    /// Intermediate dimensions d_0..d_T.
    #[serde(default)]
    pub dims: Option<Vec<usize>>,
}

/// Accuracy notion targeted by a schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// Root mean squared error at most ε.
    Mse,
    /// ε-accuracy with probability at least 1 - β.
    HighProb { beta: f64 },
}

impl ProblemConstants {
    fn vec(&self, v: &Option<Vec<f64>>, name: &str, len: usize) -> Result<Vec<f64>> {
        let v = v
            .as_ref()
            .ok_or_else(|| MccoError::MissingConstant(name.into()))?;
        if v.len() < len {
            return Err(MccoError::MissingConstant(format!(
                "{name} (need {len} stage values, got {})",
                v.len()
            )));
        }
        if v.iter().any(|x| !(*x > 0.0)) {
            return Err(MccoError::InvalidParams(format!("{name} must be positive")));
        }
        Ok(v.clone())
    }

    pub fn lipschitz(&self, len: usize) -> Result<Vec<f64>> {
        self.vec(&self.lipschitz, "lipschitz", len)
    }

    pub fn smoothness(&self, len: usize) -> Result<Vec<f64>> {
        self.vec(&self.smoothness, "smoothness", len)
    }

    pub fn sigma(&self, len: usize) -> Result<Vec<f64>> {
        self.vec(&self.sigma, "sigma", len)
    }

    fn scalar(v: Option<f64>, name: &str) -> Result<f64> {
        match v {
            Some(x) if x > 0.0 => Ok(x),
            Some(_) => Err(MccoError::InvalidParams(format!("{name} must be positive"))),
            None => Err(MccoError::MissingConstant(name.into())),
        }
    }

    pub fn mu_bar(&self, p: u32) -> Result<f64> {
        Self::scalar(self.mu_bar.get(&p).copied(), &format!("mu_bar[{p}]"))
    }

    /// B_p, defaulting to 1 for p = 2 and (p-1)^{p/2} otherwise.
    pub fn b_const(&self, p: u32) -> f64 {
        self.b.get(&p).copied().unwrap_or(if p == 2 {
            1.0
        } else {
            (p as f64 - 1.0).powf(p as f64 / 2.0)
        })
    }

    fn decision_dim(&self) -> Result<usize> {
        self.dims
            .as_ref()
            .and_then(|d| d.last().copied())
            .ok_or_else(|| MccoError::MissingConstant("dims".into()))
    }
}

/// Ceiling that ignores floating-point noise just above an integer.
pub fn ceil_robust(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        v.ceil()
    }
}

fn to_count(v: f64, what: &str) -> Result<usize> {
    if !v.is_finite() || v > 1e18 {
        return Err(MccoError::NonFinite(format!("{what} = {v}")));
    }
    Ok(ceil_robust(v).max(1.0) as usize)
}

fn prod(v: &[f64]) -> f64 {
    v.iter().product()
}

/// Per-stage sample sizes n_1..n_T of the SAA estimator.
pub fn saa_schedule(
    epsilon: f64,
    constants: &ProblemConstants,
    smooth: bool,
    mode: ScheduleMode,
) -> Result<Vec<usize>> {
    let t_count = constants.stages;
    if t_count == 0 || !(epsilon > 0.0) {
        return Err(MccoError::InvalidParams("need T >= 1 and epsilon > 0".into()));
    }
    let tm1 = (t_count - 1) as f64;
    let sigma = constants.sigma(t_count)?;
    let mut n = Vec::with_capacity(t_count);
    n.push(match mode {
        ScheduleMode::Mse => {
            let s = sigma[0];
            to_count(1.0 + 2.0 * 2f64.sqrt() * s / epsilon + 2.0 * s * s / (epsilon * epsilon), "n_1")?
        }
        ScheduleMode::HighProb { beta } => {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(MccoError::InvalidParams("beta must lie in (0, 1)".into()));
            }
            let zeta2 = ProblemConstants::scalar(constants.zeta2, "zeta2")?;
            let diam = ProblemConstants::scalar(constants.diameter, "diameter")?;
            let d = constants.decision_dim()? as f64;
            let l_all = prod(&constants.lipschitz(t_count)?);
            let grid = ceil_robust(8.0 * l_all * diam / epsilon + 1.0);
            to_count(
                128.0 * zeta2 / (epsilon * epsilon) * (d * grid.ln() + (4.0 / beta).ln()),
                "n_1",
            )?
        }
    });
    let (c_ns, c_s) = match mode {
        ScheduleMode::Mse => (2f64.sqrt(), 2f64.sqrt() / 2.0),
        ScheduleMode::HighProb { .. } => (4.0, 2.0),
    };
    for t in 2..=t_count {
        let v = if smooth {
            let l = if t >= 3 { prod(&constants.lipschitz(t - 2)?[..t - 2]) } else { 1.0 };
            let s = constants.smoothness(t - 1)?[t - 2];
            c_s * l * s * sigma[t - 1].powi(2) * tm1 / epsilon
        } else {
            let l = prod(&constants.lipschitz(t - 1)?[..t - 1]);
            (c_ns * l * sigma[t - 1] * tm1 / epsilon).powi(2)
        };
        n.push(to_count(v, &format!("n_{t}"))?);
    }
    Ok(n)
}

/// Truncation points, rates and tree count of an MLMC estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationSchedule {
    pub n1: usize,
    pub truncations: Vec<u32>,
    pub rates: Vec<f64>,
    /// Upper bound on the second moment of one tree estimate.
    pub moment_bound: f64,
}

fn z_norm(r: f64, m: u32) -> f64 {
    (1.0 - (1.0 - r).powi(m as i32 + 1)) / r
}

/// Backward recursion for M_{T-1}, ..., M_1 with the default rates, plus the
/// implied number of trees.
pub fn truncation_schedule(
    epsilon: f64,
    constants: &ProblemConstants,
    smooth: bool,
    mode: ScheduleMode,
) -> Result<TruncationSchedule> {
    let t_count = constants.stages;
    if t_count < 2 || !(epsilon > 0.0) {
        return Err(MccoError::InvalidParams("need T >= 2 and epsilon > 0".into()));
    }
    let tm1 = (t_count - 1) as f64;
    let rates = default_rates(t_count, smooth);
    let mut m = vec![0u32; t_count - 1];
    // 1-based accessors
    let z = |s: usize, m: &[u32]| z_norm(rates[s - 1], m[s - 1]);
    let to_level = |v: f64| -> Result<u32> {
        if !v.is_finite() {
            return Err(MccoError::NonFinite(format!("truncation argument {v}")));
        }
        Ok(ceil_robust(v).max(0.0) as u32)
    };
    let moment_bound;
    if !smooth {
        let l = constants.lipschitz(t_count - 1)?;
        let mu2 = constants.mu_bar(2)?;
        let b2 = constants.b_const(2);
        let c = |t: usize| mu2 * (2.0 * b2).powi((t_count - t) as i32) * l[t - 1..].iter().map(|x| x * x).product::<f64>();
        let lead = match mode {
            ScheduleMode::Mse => 2f64.sqrt(),
            ScheduleMode::HighProb { .. } => 4.0,
        };
        for t in (1..t_count).rev() {
            let tail: f64 = (t + 1..t_count).map(|s| (z(s, &m) * (m[s - 1] as f64 + 1.0)).sqrt()).product();
            let arg = lead * prod(&l[..t]) * c(t + 1).sqrt() * tail * tm1 / epsilon;
            m[t - 1] = to_level(2.0 * arg.log2())?;
        }
        let mut bound = c(1);
        for s in 1..t_count {
            let d = LevelDistribution::truncated(rates[s - 1], m[s - 1])?;
            bound *= (0..=m[s - 1]).map(|k| 1.0 / (2f64.powi(k as i32) * d.pmf(k).unwrap())).sum::<f64>();
        }
        moment_bound = bound;
    } else {
        let l = if t_count > 2 { constants.lipschitz(t_count - 2)? } else { vec![] };
        let s_c = constants.smoothness(t_count - 1)?;
        let mu = constants.mu_bar(1u32 << t_count)?;
        let dims = constants
            .dims
            .as_ref()
            .ok_or_else(|| MccoError::MissingConstant("dims".into()))?;
        if dims.len() != t_count + 1 {
            return Err(MccoError::InvalidParams(format!("dims must list d_0..d_{t_count}")));
        }
        let d_const = |t: usize| -> f64 {
            mu * (t..t_count)
                .map(|s| {
                    let p = 2f64.powi(s as i32);
                    (1.5 * s_c[s - 1]).powf(p)
                        * (dims[s] as f64).powf(p - 1.0)
                        * constants.b_const(1u32 << (s + 1))
                })
                .product::<f64>()
        };
        let lead = match mode {
            ScheduleMode::Mse => 2f64.sqrt() / 2.0,
            ScheduleMode::HighProb { .. } => 2.0,
        };
        for t in (1..t_count).rev() {
            let pt = 2f64.powi(t as i32);
            let tail: f64 = (t + 1..t_count)
                .map(|s| {
                    let ps = 2f64.powi(s as i32);
                    let ratio = (1.0 - 2f64.powf(-(m[s - 1] as f64 + 1.0) / ps)) / (1.0 - 2f64.powf(-1.0 / ps));
                    z(s, &m).powf((ps - 1.0) / pt) * ratio.powf(1.0 / pt)
                })
                .product();
            let lt = if t >= 2 { prod(&l[..t - 1]) } else { 1.0 };
            let arg = lead * lt * s_c[t - 1] * d_const(t + 1).powf(1.0 / pt) * tail * tm1 / epsilon;
            m[t - 1] = to_level(arg.log2())?;
        }
        let mut bound = d_const(1);
        for s in 1..t_count {
            let d = LevelDistribution::truncated(rates[s - 1], m[s - 1])?;
            let ps = 2f64.powi(s as i32);
            bound *= (0..=m[s - 1])
                .map(|k| {
                    let q = d.pmf(k).unwrap();
                    1.0 / (2f64.powf(ps * k as f64) * q.powf(ps - 1.0))
                })
                .sum::<f64>();
        }
        moment_bound = bound;
    }
    let n1 = match mode {
        ScheduleMode::Mse => to_count(2.0 * moment_bound / (epsilon * epsilon), "n_1")?,
        ScheduleMode::HighProb { beta } => {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(MccoError::InvalidParams("beta must lie in (0, 1)".into()));
            }
            let zeta2 = ProblemConstants::scalar(constants.zeta2, "zeta2")?;
            let diam = ProblemConstants::scalar(constants.diameter, "diameter")?;
            let lp = ProblemConstants::scalar(constants.l_prime, "l_prime")?;
            let d = constants.decision_dim()? as f64;
            let grid = ceil_robust(8.0 * lp * diam / epsilon + 1.0);
            to_count(
                128.0 * zeta2 / (epsilon * epsilon) * (d * grid.ln() + (4.0 / beta).ln()),
                "n_1",
            )?
        }
    };
    Ok(TruncationSchedule {
        n1,
        truncations: m,
        rates,
        moment_bound,
    })
}

/// Iteration count K of projected SGD for ε-stationarity:
/// ν̄² / (n_1 ε⁴) · (2 gap + S)², where `gap` bounds F(x_1) - min F and `s`
/// is the product of smoothness constants.
pub fn sgd_iterations(nu_bar_sq: f64, n1: usize, gap: f64, s: f64, epsilon: f64) -> Result<usize> {
    if !(nu_bar_sq > 0.0 && epsilon > 0.0 && n1 > 0 && gap >= 0.0 && s >= 0.0) {
        return Err(MccoError::InvalidParams("iteration formula needs positive inputs".into()));
    }
    to_count(nu_bar_sq / (n1 as f64 * epsilon.powi(4)) * (2.0 * gap + s).powi(2), "K")
}

/// Constant stepsize ν̄_1 √(n_1 / K).
pub fn sgd_stepsize(nu_bar: f64, n1: usize, k: usize) -> f64 {
    nu_bar * (n1 as f64 / k as f64).sqrt()
}
