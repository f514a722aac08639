//! MLMC gradient estimation on the coupled (H, G) recursion, and the
//! admissible rate window for gradient estimators.
//!
//! With `G_T = ∇_x f_T(ξ_T, x)` the recursion sets, at a node with level λ,
//!
//! ```text
//! g^λ = E^λ[G_{t+1}] · ∇f_t(ξ_t, E^λ[H_{t+1}])
//! G_t = ( g^λ - ½ g^{λ,e} - ½ g^{λ,o} ) / q_t(λ)
//! ```
//!
//! and H_t exactly as in the value estimator, on the same children.

use crate::error::{MccoError, Result};
use crate::exec::{map_indexed, ExecOptions};
use crate::mlmc_value::{expected_cost, run_tree, sum_paths, Engine, MlmcConfig};
use crate::problem::{MccoProblem, Vector};
use crate::randomness::RngStream;
use serde::{Deserialize, Serialize};

/// How H and G share samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// H and G are built from the same children.
    #[default]
    Coupled,
    /// The inner values feeding each Jacobian come from an independent set
    /// of children.
    Independent,
}

/// Output of a gradient estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub gradient: Vector,
    pub tree_gradients: Vec<Vector>,
    /// Per-tree H_1 values (coupled mode only).
    pub tree_values: Option<Vec<f64>>,
    pub scenario_count: u64,
    pub expected_cost: f64,
    pub seed: Option<u64>,
}

impl GradientReport {
    /// Per-coordinate standard errors of the mean gradient.
    pub fn stderr(&self) -> Vector {
        let d = self.gradient.len();
        Vector::from_fn(d, |k, _| {
            let col: Vec<f64> = self.tree_gradients.iter().map(|g| g[k]).collect();
            crate::analysis::std_error(&col)
        })
    }

    /// Mean of the per-tree values, when available.
    pub fn value(&self) -> Option<f64> {
        self.tree_values
            .as_ref()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Expected path count of the independent-samples variant.
pub fn expected_cost_independent(config: &MlmcConfig) -> Result<f64> {
    // per-node expectations for gradient (a) and value-only (v) subtrees
    let (mut a, mut v) = (1.0, 1.0);
    for (i, d) in config.levels.iter().enumerate().rev() {
        let m = d.mean_branching().map_err(|_| MccoError::InfiniteCost {
            stage: i + 1,
            rate: d.rate,
        })?;
        a = m * (a + v);
        v *= m;
    }
    Ok(config.n1 as f64 * a)
}

/// MLMC estimate of ∇F(x).
pub fn mlmc_gradient_estimate(
    problem: &MccoProblem,
    x: &Vector,
    config: &MlmcConfig,
    stream: &RngStream,
    exec: &ExecOptions,
    mode: GradientMode,
) -> Result<GradientReport> {
    problem.validate_for_gradient()?;
    let engine = Engine::new(problem, x, config, exec.budget)?;
    match mode {
        GradientMode::Coupled => {
            let expected = expected_cost(config)?;
            let trees = map_indexed(config.n1, exec.threads, |i| {
                run_tree(&engine, stream, i, true).map(|(o, n)| {
                    let g = o.g.expect("gradient requested");
                    (o.h[0], Vector::from_column_slice(g.as_slice()), n)
                })
            })?;
            let total = sum_paths(trees.iter().map(|t| t.2), exec.budget)?;
            let values = trees.iter().map(|t| t.0).collect();
            Ok(build(trees.into_iter().map(|t| t.1).collect(), Some(values), total, expected))
        }
        GradientMode::Independent => {
            let expected = expected_cost_independent(config)?;
            let trees = map_indexed(config.n1, exec.threads, |i| {
                let mut path = Vec::with_capacity(problem.stages());
                let mut paths = 0;
                let g = engine
                    .node_independent(1, &mut path, stream.derive(i as u64), &mut paths)
                    .map_err(|e| e.context(format!("tree {i}")))?;
                Ok((Vector::from_column_slice(g.as_slice()), paths))
            })?;
            let total = sum_paths(trees.iter().map(|t| t.1), exec.budget)?;
            Ok(build(trees.into_iter().map(|t| t.0).collect(), None, total, expected))
        }
    }
}

fn build(
    tree_gradients: Vec<Vector>,
    tree_values: Option<Vec<f64>>,
    scenario_count: u64,
    expected_cost: f64,
) -> GradientReport {
    let d = tree_gradients[0].len();
    let mut sum = Vector::zeros(d);
    for g in &tree_gradients {
        sum += g;
    }
    GradientReport {
        gradient: sum / tree_gradients.len() as f64,
        tree_gradients,
        tree_values,
        scenario_count,
        expected_cost,
        seed: None,
    }
}

/// Admissible rates for stage t of the gradient estimator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateWindow {
    pub stage: usize,
    pub lower: f64,
    pub upper: f64,
    pub default: f64,
}

/// Rate windows for stages 1..T-1 given Hölder exponents ρ_1..ρ_{T-1}.
///
/// The window for stage t is `1/2 < r_t < min(u_1, u_2)` with
/// `u_1 = 1 - 2^{-2^{t-1}(ρ_t+1)/(2^t-1)}` and
/// `u_2 = 1 - 2^{-2^t(ρ_{t-1}+1)/(2^t(ρ_{t-1}+1)-1)}`, taking ρ_0 = 0.
pub fn grad_rate_window(rho: &[f64]) -> Result<Vec<RateWindow>> {
    rho.iter()
        .enumerate()
        .map(|(i, &r)| {
            let t = i + 1;
            let bound = 1.0 - 2f64.powi(1 - t as i32);
            if !(r > bound && r <= 1.0) {
                return Err(MccoError::EmptyWindow { stage: t, rho: r, bound });
            }
            let prev = if t == 1 { 0.0 } else { rho[i - 1] };
            let p = 2f64.powi(t as i32);
            let u1 = 1.0 - 2f64.powf(-(p / 2.0) * (r + 1.0) / (p - 1.0));
            let u2 = 1.0 - 2f64.powf(-p * (prev + 1.0) / (p * (prev + 1.0) - 1.0));
            let upper = u1.min(u2);
            Ok(RateWindow {
                stage: t,
                lower: 0.5,
                upper,
                default: 0.5 * (0.5 + upper),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_reference_values() {
        let w = grad_rate_window(&[1.0, 1.0]).unwrap();
        assert!((w[0].upper - 0.75).abs() < 1e-15);
        assert_eq!(w[0].lower, 0.5);
        assert!((w[0].default - 0.625).abs() < 1e-15);
        let expect = 1.0 - 2f64.powf(-8.0 / 7.0);
        assert!((w[1].upper - expect).abs() < 1e-15);
        assert!((w[1].upper - 0.547).abs() < 1e-3);
    }

    #[test]
    fn window_boundary_is_excluded() {
        let e = grad_rate_window(&[1.0, 0.5]).unwrap_err();
        assert!(matches!(e, MccoError::EmptyWindow { stage: 2, .. }));
        assert!(grad_rate_window(&[0.0]).is_err());
        assert!(grad_rate_window(&[1.0, 0.51]).is_ok());
        assert!(grad_rate_window(&[0.01, 0.51, 0.76]).is_ok());
    }

    #[test]
    fn independent_cost_exceeds_coupled() {
        let c = MlmcConfig::truncated(1, &[0.6, 0.6], &[4, 4]).unwrap();
        let a = expected_cost_independent(&c).unwrap();
        let b = expected_cost(&c).unwrap();
        assert!(a > b);
        let m = c.levels[0].mean_branching().unwrap();
        assert!((a - m * (m * 2.0 + m)).abs() < 1e-12);
    }
}
