//! Projected stochastic gradient descent and a block-wise Adam variant,
//! both driven by an arbitrary gradient-estimator closure.

use crate::error::{MccoError, Result};
use crate::problem::{MccoProblem, Vector};
use crate::randomness::RngStream;
use serde::{Deserialize, Serialize};

pub use crate::schedules::{sgd_iterations, sgd_stepsize};

/// One stochastic gradient and the scenarios it consumed.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSample {
    pub gradient: Vector,
    pub scenarios: u64,
}

/// Stepsize rule of projected SGD.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Stepsize {
    Constant { eta: f64 },
    /// c / √K.
    InvSqrtK { c: f64 },
    /// ν̄_1 √(n_1 / K).
    Theory { nu_bar: f64, n1: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub iterations: usize,
    pub stepsize: Stepsize,
}

impl SgdConfig {
    pub fn eta(&self) -> f64 {
        match self.stepsize {
            Stepsize::Constant { eta } => eta,
            Stepsize::InvSqrtK { c } => c / (self.iterations as f64).sqrt(),
            Stepsize::Theory { nu_bar, n1 } => sgd_stepsize(nu_bar, n1, self.iterations),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdResult {
    /// Iterate drawn uniformly from x_1..x_K.
    pub output: Vector,
    pub output_index: usize,
    /// x_1..x_K.
    pub trajectory: Vec<Vector>,
    /// x_{K+1}.
    pub last: Vector,
    /// Scenario count after each iteration.
    pub cumulative_scenarios: Vec<u64>,
    pub scenario_count: u64,
}

/// Algorithm: x_{k+1} = Π(x_k - η G(x_k)), output a uniformly chosen x_k.
///
/// Iteration k hands `stream.derive(k)` to the estimator; the output index is
/// drawn from `stream.derive(u64::MAX)`.
pub fn projected_sgd<G>(
    problem: &MccoProblem,
    x0: &Vector,
    config: &SgdConfig,
    mut grad: G,
    stream: &RngStream,
) -> Result<SgdResult>
where
    G: FnMut(&Vector, &RngStream) -> Result<GradientSample>,
{
    let k = config.iterations;
    let eta = config.eta();
    if k == 0 || !(eta > 0.0) {
        return Err(MccoError::InvalidParams("need K >= 1 and a positive stepsize".into()));
    }
    if !problem.feasible_set().contains(x0) {
        return Err(MccoError::InvalidParams("starting point is infeasible".into()));
    }
    let mut x = x0.clone();
    let mut trajectory = Vec::with_capacity(k);
    let mut cumulative = Vec::with_capacity(k);
    let mut scenarios = 0u64;
    for it in 0..k {
        trajectory.push(x.clone());
        let g = grad(&x, &stream.derive(it as u64)).map_err(|e| e.context(format!("iteration {}", it + 1)))?;
        scenarios = scenarios.saturating_add(g.scenarios);
        cumulative.push(scenarios);
        x = problem.project(&(&x - g.gradient * eta))?;
    }
    let idx = stream.derive(u64::MAX).below(k as u64) as usize;
    Ok(SgdResult {
        output: trajectory[idx].clone(),
        output_index: idx,
        trajectory,
        last: x,
        cumulative_scenarios: cumulative,
        scenario_count: scenarios,
    })
}

/// log(1 + e^z), computed without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Derivative of softplus, the logistic sigmoid.
pub fn softplus_grad(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Inverse of softplus for y > 0.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

/// Rescales `g` to norm `threshold` when its norm exceeds it. Infinite
/// entries are clipped along their limiting direction; NaN is left alone.
pub fn clip_norm(g: &mut [f64], threshold: f64) {
    let amax = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if amax == f64::INFINITY {
        let k = (g.iter().filter(|v| v.is_infinite()).count() as f64).sqrt();
        g.iter_mut()
            .for_each(|v| *v = if v.is_infinite() { v.signum() * threshold / k } else { 0.0 });
        return;
    }
    if !(amax > 0.0) {
        return;
    }
    let n = amax * g.iter().map(|v| (v / amax) * (v / amax)).sum::<f64>().sqrt();
    if n > threshold {
        let s = threshold / n;
        g.iter_mut().for_each(|v| *v *= s);
    }
}

/// A group of decision coordinates sharing Adam hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamBlock {
    pub name: String,
    pub indices: Vec<usize>,
    pub lr: f64,
    /// Norm threshold applied to the estimated gradient of the block.
    #[serde(default)]
    pub clip: Option<f64>,
    /// Run Adam on z with x = softplus(z).
    #[serde(default)]
    pub softplus: bool,
    /// Weight w of the penalty w ‖x_block‖².
    #[serde(default)]
    pub l2: f64,
    /// Project the block onto the feasible set after each step.
    #[serde(default)]
    pub project: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub iterations: usize,
    pub blocks: Vec<AdamBlock>,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl AdamConfig {
    fn check(&self, dim: usize) -> Result<()> {
        let mut seen = vec![false; dim];
        for b in &self.blocks {
            if !(b.lr > 0.0) || b.clip.is_some_and(|c| !(c > 0.0)) || b.l2 < 0.0 {
                return Err(MccoError::InvalidParams(format!(
                    "block {}: learning rate and clip must be positive",
                    b.name
                )));
            }
            for &i in &b.indices {
                if i >= dim || seen[i] {
                    return Err(MccoError::InvalidParams(format!(
                        "block {}: coordinate {i} out of range or repeated",
                        b.name
                    )));
                }
                seen[i] = true;
            }
        }
        if self.iterations == 0 {
            return Err(MccoError::InvalidParams("need at least one iteration".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamResult {
    /// x_0, x_1, ..., x_K in the original coordinates.
    pub trajectory: Vec<Vector>,
    /// Cumulative scenario count after each iteration.
    pub cumulative_scenarios: Vec<u64>,
    pub scenario_count: u64,
}

impl AdamResult {
    pub fn last(&self) -> &Vector {
        self.trajectory.last().expect("non-empty trajectory")
    }
}

/// Adam with per-block clipping, L2 penalty, softplus reparameterization
/// and projection. Coordinates outside every block are held fixed.
pub fn adam_run<G>(
    problem: &MccoProblem,
    x0: &Vector,
    config: &AdamConfig,
    mut grad: G,
    stream: &RngStream,
) -> Result<AdamResult>
where
    G: FnMut(&Vector, &RngStream) -> Result<GradientSample>,
{
    let d = x0.len();
    config.check(d)?;
    let mut z = x0.clone();
    for b in config.blocks.iter().filter(|b| b.softplus) {
        for &i in &b.indices {
            if !(x0[i] > 0.0) {
                return Err(MccoError::InvalidParams(format!(
                    "softplus coordinate {i} must start positive"
                )));
            }
            z[i] = softplus_inv(x0[i]);
        }
    }
    let to_x = |z: &Vector| -> Vector {
        let mut x = z.clone();
        for b in config.blocks.iter().filter(|b| b.softplus) {
            for &i in &b.indices {
                x[i] = softplus(z[i]);
            }
        }
        x
    };
    let mut m = Vector::zeros(d);
    let mut v = Vector::zeros(d);
    let mut x = to_x(&z);
    let mut trajectory = vec![x.clone()];
    let mut cumulative = Vec::with_capacity(config.iterations);
    let mut scenarios = 0u64;
    let (b1, b2) = (config.beta1, config.beta2);
    for k in 1..=config.iterations {
        let g = grad(&x, &stream.derive(k as u64 - 1)).map_err(|e| e.context(format!("iteration {k}")))?;
        scenarios = scenarios.saturating_add(g.scenarios);
        cumulative.push(scenarios);
        let mut gz = Vector::zeros(d);
        for b in &config.blocks {
            let mut gb: Vec<f64> = b.indices.iter().map(|&i| g.gradient[i]).collect();
            if let Some(c) = b.clip {
                clip_norm(&mut gb, c);
            }
            for (j, &i) in b.indices.iter().enumerate() {
                let mut gi = gb[j] + 2.0 * b.l2 * x[i];
                if b.softplus {
                    gi *= softplus_grad(z[i]);
                }
                gz[i] = gi;
            }
        }
        let (c1, c2) = (1.0 - b1.powi(k as i32), 1.0 - b2.powi(k as i32));
        for b in &config.blocks {
            for &i in &b.indices {
                m[i] = b1 * m[i] + (1.0 - b1) * gz[i];
                v[i] = b2 * v[i] + (1.0 - b2) * gz[i] * gz[i];
                z[i] -= b.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + config.eps);
            }
        }
        x = to_x(&z);
        if config.blocks.iter().any(|b| b.project) {
            let px = problem.project(&x)?;
            for b in config.blocks.iter().filter(|b| b.project) {
                for &i in &b.indices {
                    x[i] = px[i];
                    z[i] = if b.softplus { softplus_inv(px[i].max(1e-300)) } else { px[i] };
                }
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(MccoError::NonFinite(format!("iterate {k}")));
        }
        trajectory.push(x.clone());
    }
    Ok(AdamResult {
        trajectory,
        cumulative_scenarios: cumulative,
        scenario_count: scenarios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_rescales_to_threshold() {
        let mut g = [120.0, 160.0];
        clip_norm(&mut g, 100.0);
        assert!((g[0] - 60.0).abs() < 1e-12 && (g[1] - 80.0).abs() < 1e-12);
        let mut h = [3.0, 4.0];
        clip_norm(&mut h, 100.0);
        assert_eq!(h, [3.0, 4.0]);
        let mut big = [3e200, 4e200];
        clip_norm(&mut big, 5.0);
        assert!((big[0] - 3.0).abs() < 1e-12 && (big[1] - 4.0).abs() < 1e-12);
        let mut inf = [f64::NEG_INFINITY, 7.0];
        clip_norm(&mut inf, 50.0);
        assert_eq!(inf, [-50.0, 0.0]);
    }

    #[test]
    fn softplus_chain_rule() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus_grad(0.0) - 0.5).abs() < 1e-15);
        for z in [-30.0, -2.0, 0.0, 0.7, 5.0, 40.0] {
            let h = 1e-6;
            let fd = (softplus(z + h) - softplus(z - h)) / (2.0 * h);
            assert!((fd - softplus_grad(z)).abs() < 1e-6, "z = {z}");
            let y = softplus(z);
            assert!((softplus_inv(y) - z).abs() < 1e-8 * z.abs().max(1.0), "z = {z}");
        }
    }

    #[test]
    fn stepsize_rules() {
        let c = SgdConfig { iterations: 100, stepsize: Stepsize::InvSqrtK { c: 1.0 } };
        assert!((c.eta() - 0.1).abs() < 1e-15);
        let c = SgdConfig { iterations: 16, stepsize: Stepsize::Theory { nu_bar: 2.0, n1: 4 } };
        assert!((c.eta() - 1.0).abs() < 1e-15);
    }
}
