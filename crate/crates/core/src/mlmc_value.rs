//! Recursive multilevel Monte Carlo estimation of nested expectations.
//!
//! Every stage-t node of a tree draws its own level λ_t, spawns 2^λ_t
//! conditional children and combines the children's estimates through the
//! antithetic difference
//!
//! ```text
//! H_t = ( f_t(ξ_t, E^λ) - ½ f_t(ξ_t, E^{λ,e}) - ½ f_t(ξ_t, E^{λ,o}) ) / q_t(λ)
//! ```
//!
//! where `E^λ` averages all children and `E^{λ,e}`, `E^{λ,o}` average the
//! even- and odd-indexed halves of the same children. The same recursion
//! propagates gradient matrices when requested (see [`crate::mlmc_gradient`]).

use crate::error::{MccoError, Result};
use crate::exec::{map_indexed, ExecOptions};
use crate::problem::{Matrix, MccoProblem, SamplePath, Vector};
use crate::randomness::{LevelDistribution, RngStream, LEVEL_CAP};
use serde::{Deserialize, Serialize};

/// Number of trees plus the level law of each stage 1..T-1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlmcConfig {
    pub n1: usize,
    pub levels: Vec<LevelDistribution>,
}

impl MlmcConfig {
    pub fn new(n1: usize, levels: Vec<LevelDistribution>) -> Result<Self> {
        if n1 == 0 {
            return Err(MccoError::InvalidParams("n1 must be at least 1".into()));
        }
        Ok(MlmcConfig { n1, levels })
    }

    /// Truncated levels with per-stage rates and truncation points.
    pub fn truncated(n1: usize, rates: &[f64], truncations: &[u32]) -> Result<Self> {
        if rates.len() != truncations.len() {
            return Err(MccoError::InvalidParams(format!(
                "{} rates but {} truncation points",
                rates.len(),
                truncations.len()
            )));
        }
        let levels = rates
            .iter()
            .zip(truncations)
            .map(|(&r, &m)| LevelDistribution::truncated(r, m))
            .collect::<Result<_>>()?;
        Self::new(n1, levels)
    }

    pub fn untruncated(n1: usize, rates: &[f64]) -> Result<Self> {
        let levels = rates
            .iter()
            .map(|&r| LevelDistribution::untruncated(r))
            .collect::<Result<_>>()?;
        Self::new(n1, levels)
    }

    /// Expected number of paths per tree, ∏_t Σ_l q_t(l) 2^l.
    pub fn cost_per_tree(&self) -> Result<f64> {
        self.levels.iter().enumerate().try_fold(1.0, |acc, (i, d)| {
            d.mean_branching()
                .map(|m| acc * m)
                .map_err(|_| MccoError::InfiniteCost {
                    stage: i + 1,
                    rate: d.rate,
                })
        })
    }
}

/// Expected number of scenarios of an MLMC estimator, n1 ∏_t Σ_l q_t(l) 2^l.
pub fn expected_cost(config: &MlmcConfig) -> Result<f64> {
    Ok(config.n1 as f64 * config.cost_per_tree()?)
}

/// Default level rates: 1/2 for nonsmooth integrands, 1 - 2^{-1-2^{-t}}
/// for smooth ones.
pub fn default_rates(stages: usize, smooth: bool) -> Vec<f64> {
    (1..stages)
        .map(|t| {
            if smooth {
                1.0 - 2f64.powf(-1.0 - 2f64.powi(-(t as i32)))
            } else {
                0.5
            }
        })
        .collect()
}

/// Output of a value estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub value: f64,
    pub tree_values: Vec<f64>,
    /// Exact number of root-to-leaf paths consumed.
    pub scenario_count: u64,
    /// Formula prediction of the scenario count.
    pub expected_cost: f64,
    pub seed: Option<u64>,
}

impl EstimateReport {
    pub(crate) fn from_trees(tree_values: Vec<f64>, scenario_count: u64, expected_cost: f64) -> Self {
        let value = tree_values.iter().sum::<f64>() / tree_values.len() as f64;
        EstimateReport {
            value,
            tree_values,
            scenario_count,
            expected_cost,
            seed: None,
        }
    }

    /// Standard error of the mean over trees.
    pub fn stderr(&self) -> f64 {
        crate::analysis::std_error(&self.tree_values)
    }

    /// 95% normal confidence interval.
    pub fn ci(&self) -> (f64, f64) {
        let h = 1.96 * self.stderr();
        (self.value - h, self.value + h)
    }
}

/// Per-node record passed to an inspection callback: full, even and odd
/// child averages at a node with level at least 1.
#[derive(Clone, Debug)]
pub struct NodeRecord {
    pub stage: usize,
    pub level: u32,
    pub full: Vector,
    pub even: Vector,
    pub odd: Vector,
}

pub(crate) type Observer<'a> = &'a (dyn Fn(&NodeRecord) + Sync);

pub(crate) struct NodeOut {
    pub h: Vector,
    pub g: Option<Matrix>,
}

enum LevelTable {
    Finite(Vec<f64>),
    Geometric(f64),
}

impl LevelTable {
    fn new(d: &LevelDistribution) -> Self {
        match d.truncation {
            Some(m) => LevelTable::Finite((0..=m).map(|l| d.pmf(l).expect("in support")).collect()),
            None => LevelTable::Geometric(d.rate),
        }
    }

    fn q(&self, l: u32) -> f64 {
        match self {
            LevelTable::Finite(v) => v[l as usize],
            LevelTable::Geometric(r) => r * (1.0 - r).powi(l as i32),
        }
    }
}

/// Shared recursion for value and gradient estimation.
pub(crate) struct Engine<'a> {
    problem: &'a MccoProblem,
    x: &'a Vector,
    levels: &'a [LevelDistribution],
    tables: Vec<LevelTable>,
    budget: u64,
    observer: Option<Observer<'a>>,
}

impl<'a> Engine<'a> {
    pub fn new(
        problem: &'a MccoProblem,
        x: &'a Vector,
        config: &'a MlmcConfig,
        budget: u64,
    ) -> Result<Self> {
        let t = problem.stages();
        if config.levels.len() + 1 != t {
            return Err(MccoError::InvalidParams(format!(
                "a {t}-stage problem needs {} level distributions, got {}",
                t - 1,
                config.levels.len()
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
        Ok(Engine {
            problem,
            x,
            levels: &config.levels,
            tables: config.levels.iter().map(LevelTable::new).collect(),
            budget,
            observer: None,
        })
    }

    pub fn with_observer(mut self, observer: Observer<'a>) -> Self {
        self.observer = Some(observer);
        self
    }

    fn draw_level(&self, t: usize, stream: &mut RngStream, paths: u64) -> Result<u32> {
        let level = self.levels[t - 1].sample(stream);
        if level > LEVEL_CAP as u64 {
            return Err(MccoError::LevelCapExceeded { level, cap: LEVEL_CAP });
        }
        if paths.saturating_add(1u64 << level) > self.budget {
            return Err(MccoError::CostGuardExceeded {
                budget: self.budget,
                context: format!(" (stage {t} drew level {level})"),
            });
        }
        Ok(level as u32)
    }

    fn leaf(&self, paths: &mut u64) -> Result<()> {
        *paths += 1;
        if *paths > self.budget {
            return Err(MccoError::CostGuardExceeded {
                budget: self.budget,
                context: String::new(),
            });
        }
        Ok(())
    }

    /// Estimates (H_t, G_t) at a stage-t node whose own stream is `stream`.
    pub fn node(
        &self,
        t: usize,
        path: &mut SamplePath,
        mut stream: RngStream,
        grad: bool,
        paths: &mut u64,
    ) -> Result<NodeOut> {
        let p = self.problem;
        let xi = p.sample(t, path, &mut stream);
        if t == p.stages() {
            self.leaf(paths)?;
            return Ok(NodeOut {
                h: p.f(t, &xi, self.x),
                g: grad.then(|| p.jac(t, &xi, self.x)),
            });
        }
        let level = self.draw_level(t, &mut stream, *paths)?;
        let q = self.tables[t - 1].q(level);
        path.push(xi);
        if level == 0 {
            let child = self.node(t + 1, path, stream.derive(0), grad, paths);
            let xi = path.pop().expect("pushed above");
            let child = child?;
            let h = p.f(t, &xi, &child.h) / q;
            let g = child.g.map(|gc| gc * p.jac(t, &xi, &child.h) / q);
            return Ok(NodeOut { h, g });
        }
        let n = 1u64 << level;
        let d = p.dims()[t];
        let mut h_odd = Vector::zeros(d);
        let mut h_even = Vector::zeros(d);
        let (mut g_odd, mut g_even) = if grad {
            let dd = p.decision_dim();
            (Some(Matrix::zeros(dd, d)), Some(Matrix::zeros(dd, d)))
        } else {
            (None, None)
        };
        let mut status = Ok(());
        for j in 0..n {
            match self.node(t + 1, path, stream.derive(j), grad, paths) {
                Ok(c) => {
                    // child j is the (j+1)-th sample: 1-based odd for even j
                    if j % 2 == 0 {
                        h_odd += &c.h;
                        if let (Some(a), Some(b)) = (g_odd.as_mut(), c.g.as_ref()) {
                            *a += b;
                        }
                    } else {
                        h_even += &c.h;
                        if let (Some(a), Some(b)) = (g_even.as_mut(), c.g.as_ref()) {
                            *a += b;
                        }
                    }
                }
                Err(e) => {
                    status = Err(e);
                    break;
                }
            }
        }
        let xi = path.pop().expect("pushed above");
        status?;
        let half = (n / 2) as f64;
        let full = (&h_odd + &h_even) / n as f64;
        let odd = h_odd / half;
        let even = h_even / half;
        if let Some(obs) = self.observer {
            obs(&NodeRecord {
                stage: t,
                level,
                full: full.clone(),
                even: even.clone(),
                odd: odd.clone(),
            });
        }
        let h = (p.f(t, &xi, &full) - p.f(t, &xi, &even) * 0.5 - p.f(t, &xi, &odd) * 0.5) / q;
        let g = match (g_odd, g_even) {
            (Some(go), Some(ge)) => {
                let g_full = (&go + &ge) / n as f64;
                let g_o = go / half;
                let g_e = ge / half;
                Some(
                    (g_full * p.jac(t, &xi, &full)
                        - g_e * p.jac(t, &xi, &even) * 0.5
                        - g_o * p.jac(t, &xi, &odd) * 0.5)
                        / q,
                )
            }
            _ => None,
        };
        Ok(NodeOut { h, g })
    }

    /// Gradient estimate G_t where the inner values H_{t+1} feeding the
    /// Jacobians come from a second, independent set of children.
    pub fn node_independent(
        &self,
        t: usize,
        path: &mut SamplePath,
        mut stream: RngStream,
        paths: &mut u64,
    ) -> Result<Matrix> {
        let p = self.problem;
        let xi = p.sample(t, path, &mut stream);
        if t == p.stages() {
            self.leaf(paths)?;
            return Ok(p.jac(t, &xi, self.x));
        }
        let level = self.draw_level(t, &mut stream, *paths)?;
        let q = self.tables[t - 1].q(level);
        let n = 1u64 << level;
        let d = p.dims()[t];
        let dd = p.decision_dim();
        path.push(xi);
        let mut sums_h = [Vector::zeros(d), Vector::zeros(d)];
        let mut sums_g = [Matrix::zeros(dd, d), Matrix::zeros(dd, d)];
        let mut status = Ok(());
        for j in 0..n {
            let r = self
                .node_independent(t + 1, path, stream.derive(2 * j), paths)
                .and_then(|g| {
                    let h = self.node(t + 1, path, stream.derive(2 * j + 1), false, paths)?.h;
                    Ok((g, h))
                });
            match r {
                Ok((g, h)) => {
                    sums_g[(j % 2) as usize] += g;
                    sums_h[(j % 2) as usize] += h;
                }
                Err(e) => {
                    status = Err(e);
                    break;
                }
            }
        }
        let xi = path.pop().expect("pushed above");
        status?;
        if level == 0 {
            return Ok(&sums_g[0] * p.jac(t, &xi, &sums_h[0]) / q);
        }
        let half = (n / 2) as f64;
        let [ho, he] = sums_h;
        let [go, ge] = sums_g;
        let h_full = (&ho + &he) / n as f64;
        let g_full = (&go + &ge) / n as f64;
        Ok((g_full * p.jac(t, &xi, &h_full)
            - (ge / half) * p.jac(t, &xi, &(he / half)) * 0.5
            - (go / half) * p.jac(t, &xi, &(ho / half)) * 0.5)
            / q)
    }
}

/// Runs one tree with index `i`, returning H_1 and the path count.
pub(crate) fn run_tree(
    engine: &Engine<'_>,
    stream: &RngStream,
    i: usize,
    grad: bool,
) -> Result<(NodeOut, u64)> {
    let mut path = Vec::with_capacity(engine.problem.stages());
    let mut paths = 0;
    let out = engine
        .node(1, &mut path, stream.derive(i as u64), grad, &mut paths)
        .map_err(|e| e.context(format!("tree {i}")))?;
    Ok((out, paths))
}

fn check_total(total: u64, budget: u64) -> Result<()> {
    if total > budget {
        return Err(MccoError::CostGuardExceeded {
            budget,
            context: format!(" ({total} paths in total)"),
        });
    }
    Ok(())
}

pub(crate) fn sum_paths(paths: impl Iterator<Item = u64>, budget: u64) -> Result<u64> {
    let total = paths.fold(0u64, |a, b| a.saturating_add(b));
    check_total(total, budget)?;
    Ok(total)
}

/// MLMC estimate of F(x) from `config.n1` independent trees.
pub fn mlmc_value_estimate(
    problem: &MccoProblem,
    x: &Vector,
    config: &MlmcConfig,
    stream: &RngStream,
    exec: &ExecOptions,
) -> Result<EstimateReport> {
    let expected = expected_cost(config)?;
    let engine = Engine::new(problem, x, config, exec.budget)?;
    let trees = map_indexed(config.n1, exec.threads, |i| {
        run_tree(&engine, stream, i, false).map(|(o, n)| (o.h[0], n))
    })?;
    let total = sum_paths(trees.iter().map(|t| t.1), exec.budget)?;
    Ok(EstimateReport::from_trees(
        trees.into_iter().map(|t| t.0).collect(),
        total,
        expected,
    ))
}

/// Runs a single tree sequentially, calling `observer` at every node with
/// level at least 1. Returns H_1 of the tree.
pub fn inspect_tree(
    problem: &MccoProblem,
    x: &Vector,
    config: &MlmcConfig,
    stream: &RngStream,
    tree_index: usize,
    observer: &(dyn Fn(&NodeRecord) + Sync),
) -> Result<f64> {
    let engine = Engine::new(problem, x, config, u64::MAX)?.with_observer(observer);
    run_tree(&engine, stream, tree_index, false).map(|(o, _)| o.h[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_formula_reference_values() {
        let c = MlmcConfig::untruncated(1, &[0.74, 0.60]).unwrap();
        assert!((expected_cost(&c).unwrap() - 4.6250).abs() < 1e-9);
        let r = default_rates(3, true);
        let c = MlmcConfig::truncated(1, &r, &[6, 5]).unwrap();
        assert!((expected_cost(&c).unwrap() - 4.7674).abs() < 1e-3);
        let c = MlmcConfig::truncated(1, &[0.59; 3], &[9; 3]).unwrap();
        assert!((expected_cost(&c).unwrap() - 22.6084).abs() < 1e-3);
        let c = MlmcConfig::untruncated(1, &[0.5001; 3]).unwrap();
        assert!((expected_cost(&c).unwrap() / 1.5634e10 - 1.0).abs() < 1e-3);
        let c = MlmcConfig::untruncated(1, &[0.7, 0.4]).unwrap();
        assert_eq!(
            expected_cost(&c).unwrap_err(),
            MccoError::InfiniteCost { stage: 2, rate: 0.4 }
        );
    }

    #[test]
    fn default_rate_values() {
        assert_eq!(default_rates(5, false), vec![0.5; 4]);
        let r = default_rates(3, true);
        assert!((r[0] - (1.0 - 2f64.powf(-1.5))).abs() < 1e-15);
        assert!((r[1] - (1.0 - 2f64.powf(-1.25))).abs() < 1e-15);
        assert!((r[0] - 0.6464).abs() < 1e-4 && (r[1] - 0.5796).abs() < 1e-4);
        let r = default_rates(40, true);
        assert!(r.windows(2).all(|w| w[1] < w[0]));
        assert!(r[38] > 0.5 && r[38] - 0.5 < 1e-9);
    }
}
