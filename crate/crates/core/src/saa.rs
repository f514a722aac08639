//! Scenario-forest sample average approximation.
//!
//! Each of the n_1 trees samples ξ_1, then n_2 conditional children, each of
//! which samples n_3 children of its own, and so on. The tree estimate is
//! the nest of integrands applied to the child averages. Trees are walked
//! depth-first and never stored.

use crate::error::{MccoError, Result};
use crate::exec::{map_indexed, ExecOptions};
use crate::mlmc_value::EstimateReport;
use crate::problem::{MccoProblem, SamplePath, Vector};
use crate::randomness::RngStream;
use serde::{Deserialize, Serialize};

pub use crate::schedules::saa_schedule;

/// Per-stage branching factors; `n[0]` is the number of trees.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaaConfig {
    pub n: Vec<usize>,
}

impl SaaConfig {
    pub fn new(n: Vec<usize>) -> Result<Self> {
        if n.is_empty() || n.contains(&0) {
            return Err(MccoError::InvalidParams(
                "branching factors must be at least 1".into(),
            ));
        }
        Ok(SaaConfig { n })
    }

    /// n_1 = n_2 = ... = n_T = k.
    pub fn uniform(stages: usize, k: usize) -> Result<Self> {
        Self::new(vec![k; stages])
    }

    /// Exact number of leaves, ∏ n_t, or `None` on overflow.
    pub fn scenario_count(&self) -> Option<u64> {
        self.n
            .iter()
            .try_fold(1u64, |acc, &k| acc.checked_mul(k as u64))
    }
}

fn node(
    problem: &MccoProblem,
    x: &Vector,
    n: &[usize],
    t: usize,
    path: &mut SamplePath,
    mut stream: RngStream,
) -> Vector {
    let xi = problem.sample(t, path, &mut stream);
    if t == problem.stages() {
        return problem.f(t, &xi, x);
    }
    path.push(xi);
    let k = n[t];
    let mut sum = Vector::zeros(problem.dims()[t]);
    for j in 0..k {
        sum += node(problem, x, n, t + 1, path, stream.derive(j as u64));
    }
    let xi = path.pop().expect("pushed above");
    let avg = if k == 1 { sum } else { sum / k as f64 };
    problem.f(t, &xi, &avg)
}

/// SAA estimate of F(x) on a forest of `config.n[0]` trees.
pub fn saa_estimate(
    problem: &MccoProblem,
    x: &Vector,
    config: &SaaConfig,
    stream: &RngStream,
    exec: &ExecOptions,
) -> Result<EstimateReport> {
    let t = problem.stages();
    if config.n.len() != t {
        return Err(MccoError::InvalidParams(format!(
            "a {t}-stage problem needs {t} branching factors, got {}",
            config.n.len()
        )));
    }
    if x.len() != problem.decision_dim() {
        return Err(MccoError::DimensionMismatch {
            stage: t,
            detail: format!(
                "decision has length {}, expected {}",
                x.len(),
                problem.decision_dim()
            ),
        });
    }
    let total = config
        .scenario_count()
        .filter(|&c| c <= exec.budget)
        .ok_or_else(|| MccoError::CostGuardExceeded {
            budget: exec.budget,
            context: format!(" (SAA forest {:?})", config.n),
        })?;
    let values = map_indexed(config.n[0], exec.threads, |i| {
        let mut path = Vec::with_capacity(t);
        let v = node(problem, x, &config.n, 1, &mut path, stream.derive(i as u64))[0];
        if v.is_finite() {
            Ok(v)
        } else {
            Err(MccoError::NonFinite(format!("tree {i} value {v}")))
        }
    })?;
    Ok(EstimateReport::from_trees(values, total, total as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{scalar, ProblemBuilder};

    fn chain() -> MccoProblem {
        ProblemBuilder::new("chain", vec![1, 1, 1], vec![1, 1])
            .sampler(1, |_, s| scalar(s.normal()))
            .sampler(2, |h, s| scalar(h[0][0] + s.normal()))
            .integrand(1, |xi, x| scalar(xi[0] * x[0]))
            .integrand(2, |xi, x| scalar(xi[0] + x[0]))
            .build()
            .unwrap()
    }

    #[test]
    fn scenario_count_is_exact() {
        let p = chain();
        let c = SaaConfig::new(vec![7, 3]).unwrap();
        let r = saa_estimate(&p, &scalar(0.0), &c, &RngStream::new(1), &ExecOptions::default()).unwrap();
        assert_eq!(r.scenario_count, 21);
        assert_eq!(r.tree_values.len(), 7);
    }

    #[test]
    fn single_path_plug_in() {
        let p = chain();
        let c = SaaConfig::new(vec![1, 1]).unwrap();
        let root = RngStream::new(5);
        let r = saa_estimate(&p, &scalar(0.25), &c, &root, &ExecOptions::default()).unwrap();
        let mut s1 = root.derive(0);
        let xi1 = s1.normal();
        let xi2 = xi1 + s1.derive(0).normal();
        assert_eq!(r.value, xi1 * (xi2 + 0.25));
    }

    #[test]
    fn budget_guard() {
        let p = chain();
        let c = SaaConfig::new(vec![1000, 1000]).unwrap();
        let exec = ExecOptions { threads: None, budget: 10_000 };
        assert!(matches!(
            saa_estimate(&p, &scalar(0.0), &c, &RngStream::new(1), &exec),
            Err(MccoError::CostGuardExceeded { .. })
        ));
    }
}
