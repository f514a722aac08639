//! Distributionally robust off-policy learning for a two-action contextual
//! bandit, in its softmax-smoothed dual form:
//!
//! ```text
//! min_{θ ∈ [0,1]², λ ≥ 0}  E_{c'} (1/μ) log E_u exp(μ ( Σ_a π_θ(a|u) E[y_a | u]
//!                                            + r_y + r_c² λ - λ ‖u - c'‖² ))
//! ```
//!
//! Stages: ξ_1 = c', ξ_2 = u, ξ_3 = (c', u, y) with f_1 = log(x_1)/μ,
//! f_2 = exp(μ x_2) and f_3 the bracket above evaluated at a sampled cost y.
//! The decision is x = (θ_1, θ_2, λ); action 1 is played with probability
//! θ_1 when u_1 ≠ 0 and θ_2 when u_1 = 0.

use crate::error::{MccoError, Result};
use crate::problem::{scalar, FeasibleSet, Matrix, MccoProblem, ProblemBuilder, Vector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Number of values of each context feature.
pub const FEATURE_LEVELS: [usize; 6] = [3, 5, 2, 2, 6, 4];
/// Cardinality of the context space.
pub const CONTEXTS: usize = 1440;

/// Bounds on μ x_2 inside the exponential stage.
const EXP_ARG_MIN: f64 = -300.0;
const EXP_ARG_MAX: f64 = 300.0;

/// Conditional mean of the two action costs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CostModel {
    /// The stroke-treatment means with the bump p(c).
    Stroke,
    /// The same means for every context.
    Constant { means: [f64; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditParams {
    #[serde(default = "d_mu")]
    pub mu: f64,
    #[serde(default = "d_rc")]
    pub r_c: f64,
    #[serde(default = "d_ry")]
    pub r_y: f64,
    /// Diagonal and off-diagonal entries of the log-cost covariance.
    #[serde(default = "d_sd")]
    pub sigma_diag: f64,
    #[serde(default = "d_so")]
    pub sigma_off: f64,
    #[serde(default = "d_lmax")]
    pub lambda_max: f64,
    #[serde(default = "d_cost")]
    pub cost_model: CostModel,
}

fn d_mu() -> f64 {
    2.0
}
fn d_rc() -> f64 {
    0.4
}
fn d_ry() -> f64 {
    0.15
}
fn d_sd() -> f64 {
    5.0
}
fn d_so() -> f64 {
    2.5
}
fn d_lmax() -> f64 {
    100.0
}
fn d_cost() -> CostModel {
    CostModel::Stroke
}

impl Default for BanditParams {
    fn default() -> Self {
        BanditParams {
            mu: d_mu(),
            r_c: d_rc(),
            r_y: d_ry(),
            sigma_diag: d_sd(),
            sigma_off: d_so(),
            lambda_max: d_lmax(),
            cost_model: d_cost(),
        }
    }
}

/// All contexts in lexicographic order.
pub fn context_space() -> Vec<[f64; 6]> {
    let mut out = Vec::with_capacity(CONTEXTS);
    for i in 0..CONTEXTS {
        let mut rem = i;
        let mut c = [0.0; 6];
        for k in (0..6).rev() {
            c[k] = (rem % FEATURE_LEVELS[k]) as f64;
            rem /= FEATURE_LEVELS[k];
        }
        out.push(c);
    }
    out
}

/// The bump p(c).
pub fn bump(c: &[f64]) -> f64 {
    if c[1] == 4.0 && c[2] == 1.0 && c[3] == 1.0 && c[5] == 3.0 {
        2.4 + 1.92 * (c[4] / 5.0 - 2.5).powi(2)
    } else {
        0.0
    }
}

impl CostModel {
    /// E[y | c].
    pub fn means(&self, c: &[f64]) -> [f64; 2] {
        match self {
            CostModel::Stroke => {
                let p = bump(c);
                if c[0] == 0.0 {
                    [3.0 + 5.0 * c[4] + p, 5.5 + c[4] + p]
                } else {
                    [1.7 + 3.5 * c[4] + p, 3.0 + c[4] + p]
                }
            }
            CostModel::Constant { means } => *means,
        }
    }
}

impl BanditParams {
    fn check(&self) -> Result<()> {
        let finite = [self.mu, self.r_c, self.r_y, self.sigma_diag, self.sigma_off, self.lambda_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite
            || !(self.mu > 0.0)
            || self.r_c < 0.0
            || !(self.sigma_diag > 0.0)
            || self.sigma_off.abs() >= self.sigma_diag
            || !(self.lambda_max > 0.0)
        {
            return Err(MccoError::InvalidParams(format!("bad bandit parameters {self:?}")));
        }
        if let CostModel::Constant { means } = &self.cost_model {
            if means.iter().any(|m| !(*m > 0.0)) {
                return Err(MccoError::InvalidParams("cost means must be positive".into()));
            }
        }
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Probability of action 1 under π_θ in context u.
fn pi1(x: &Vector, u: &[f64]) -> f64 {
    if u[0] != 0.0 {
        x[0]
    } else {
        x[1]
    }
}

pub fn bandits(params: &BanditParams) -> Result<MccoProblem> {
    params.check()?;
    let ctx = Arc::new(context_space());
    let mu = params.mu;
    let (r_c, r_y) = (params.r_c, params.r_y);
    let (s11, s12) = (params.sigma_diag, params.sigma_off);
    // Cholesky factor of [[s11, s12], [s12, s11]]
    let l11 = s11.sqrt();
    let l21 = s12 / l11;
    let l22 = (s11 - l21 * l21).sqrt();
    let model = params.cost_model.clone();
    let (c1, c2) = (ctx.clone(), ctx.clone());
    ProblemBuilder::new("bandits", vec![1, 1, 1, 3], vec![6, 6, 14])
        .sampler(1, move |_, s| Vector::from_row_slice(&c1[s.below(CONTEXTS as u64) as usize]))
        .sampler(2, move |_, s| Vector::from_row_slice(&c2[s.below(CONTEXTS as u64) as usize]))
        .sampler(3, move |h, s| {
            let u = h[1].as_slice();
            let m = model.means(u);
            let (z1, z2) = (s.normal(), s.normal());
            let y1 = (m[0].ln() - 0.5 * s11 + l11 * z1).exp();
            let y2 = (m[1].ln() - 0.5 * s11 + l21 * z1 + l22 * z2).exp();
            let mut v = Vec::with_capacity(14);
            v.extend_from_slice(h[0].as_slice());
            v.extend_from_slice(u);
            v.push(y1);
            v.push(y2);
            Vector::from_vec(v)
        })
        .integrand(1, move |_, x| scalar(x[0].ln() / mu))
        .jacobian(1, move |_, x| {
            // an exact zero only arises when every inner exponential is clamped,
            // in which case the incoming gradient is zero as well
            let v = if x[0].abs() < 1e-300 { 1e-300f64.copysign(x[0]) } else { x[0] };
            Matrix::from_element(1, 1, 1.0 / (mu * v))
        })
        .integrand(2, move |_, x| scalar((mu * x[0]).clamp(EXP_ARG_MIN, EXP_ARG_MAX).exp()))
        .jacobian(2, move |_, x| {
            let a = mu * x[0];
            let d = if (EXP_ARG_MIN..=EXP_ARG_MAX).contains(&a) { mu * a.exp() } else { 0.0 };
            Matrix::from_element(1, 1, d)
        })
        .integrand(3, move |xi, x| {
            let (c, u, y) = (&xi.as_slice()[..6], &xi.as_slice()[6..12], &xi.as_slice()[12..]);
            let p = pi1(x, u);
            scalar(p * y[0] + (1.0 - p) * y[1] + r_y + x[2] * (r_c * r_c - sq_dist(u, c)))
        })
        .jacobian(3, move |xi, _| {
            let (c, u, y) = (&xi.as_slice()[..6], &xi.as_slice()[6..12], &xi.as_slice()[12..]);
            let mut j = Matrix::zeros(3, 1);
            j[(if u[0] != 0.0 { 0 } else { 1 }, 0)] = y[0] - y[1];
            j[(2, 0)] = r_c * r_c - sq_dist(u, c);
            j
        })
        .feasible(FeasibleSet::boxed(vec![0.0, 0.0, 0.0], vec![1.0, 1.0, params.lambda_max])?)
        .build()
}

/// Exact objective with gradient and Hessian in (θ_1, θ_2, λ).
#[derive(Clone, Debug, PartialEq)]
pub struct BanditObjective {
    pub value: f64,
    pub gradient: Vector,
    pub hessian: Matrix,
}

/// Precomputed context data for exact evaluation.
pub struct BanditOracle {
    params: BanditParams,
    ctx: Vec<[f64; 6]>,
    means: Vec<[f64; 2]>,
}

impl BanditOracle {
    pub fn new(params: &BanditParams) -> Result<Self> {
        params.check()?;
        let ctx = context_space();
        let means = ctx.iter().map(|c| params.cost_model.means(c)).collect();
        Ok(BanditOracle {
            params: params.clone(),
            ctx,
            means,
        })
    }

    /// Objective at x = (θ_1, θ_2, λ), averaging the exact log-sum-exp over
    /// all 1440 × 1440 context pairs.
    pub fn evaluate(&self, x: &Vector) -> BanditObjective {
        let (mu, rc2, ry) = (self.params.mu, self.params.r_c.powi(2), self.params.r_y);
        let n = self.ctx.len();
        // per-u affine pieces: a(u, c') = base(u) + λ (r_c² - D(u, c'))
        let base: Vec<f64> = (0..n)
            .map(|k| {
                let p = pi1(x, &self.ctx[k]);
                p * self.means[k][0] + (1.0 - p) * self.means[k][1] + ry
            })
            .collect();
        let dtheta: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                let diff = self.means[k][0] - self.means[k][1];
                if self.ctx[k][0] != 0.0 {
                    [diff, 0.0]
                } else {
                    [0.0, diff]
                }
            })
            .collect();
        let mut value = 0.0;
        let mut grad = Vector::zeros(3);
        let mut hess = Matrix::zeros(3, 3);
        let mut a = vec![0.0; n];
        let mut dl = vec![0.0; n];
        for c in &self.ctx {
            let mut amax = f64::NEG_INFINITY;
            for k in 0..n {
                dl[k] = rc2 - sq_dist(&self.ctx[k], c);
                a[k] = base[k] + x[2] * dl[k];
                amax = amax.max(a[k]);
            }
            let mut z = 0.0;
            let mut g = [0.0; 3];
            let mut s = [[0.0; 3]; 3];
            for k in 0..n {
                let w = (mu * (a[k] - amax)).exp();
                z += w;
                let da = [dtheta[k][0], dtheta[k][1], dl[k]];
                for i in 0..3 {
                    g[i] += w * da[i];
                    for j in 0..3 {
                        s[i][j] += w * da[i] * da[j];
                    }
                }
            }
            value += amax + (z / n as f64).ln() / mu;
            for i in 0..3 {
                g[i] /= z;
            }
            for i in 0..3 {
                grad[i] += g[i];
                for j in 0..3 {
                    hess[(i, j)] += mu * (s[i][j] / z - g[i] * g[j]);
                }
            }
        }
        let m = n as f64;
        BanditObjective {
            value: value / m,
            gradient: grad / m,
            hessian: hess / m,
        }
    }

    fn project(&self, x: &Vector) -> Vector {
        Vector::from_vec(vec![
            x[0].clamp(0.0, 1.0),
            x[1].clamp(0.0, 1.0),
            x[2].clamp(0.0, self.params.lambda_max),
        ])
    }
}

/// Exact minimizer of the smoothed dual problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditOptimum {
    pub lambda: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub value: f64,
    /// λ sits at the upper bound of its box, so the problem may be
    /// unbounded in that direction.
    pub lambda_at_bound: bool,
    pub iterations: usize,
}

/// Projected Newton with an active set on the box, run until the projected
/// gradient vanishes to 1e-10.
pub fn bandits_ground_truth(params: &BanditParams) -> Result<BanditOptimum> {
    let oracle = BanditOracle::new(params)?;
    let upper = [1.0, 1.0, params.lambda_max];
    let mut x = Vector::from_vec(vec![0.5, 0.5, 1.0]);
    let mut cur = oracle.evaluate(&x);
    let mut iterations = 0;
    for it in 0..500 {
        iterations = it;
        if !cur.value.is_finite() || cur.gradient.iter().any(|v| !v.is_finite()) {
            return Err(MccoError::NonFinite(format!("bandit objective at {:?}", x.as_slice())));
        }
        let pg = oracle.project(&(&x - &cur.gradient)) - &x;
        if pg.norm() < 1e-10 {
            break;
        }
        let free: Vec<usize> = (0..3)
            .filter(|&i| {
                let at_lo = x[i] <= 1e-12 && cur.gradient[i] > 0.0;
                let at_hi = x[i] >= upper[i] - 1e-12 && cur.gradient[i] < 0.0;
                !(at_lo || at_hi)
            })
            .collect();
        let mut dir = Vector::zeros(3);
        if !free.is_empty() {
            let k = free.len();
            let scale = cur.hessian.amax().max(1e-300);
            let h = Matrix::from_fn(k, k, |i, j| cur.hessian[(free[i], free[j])])
                + Matrix::identity(k, k) * (1e-12 * scale);
            let g = Vector::from_fn(k, |i, _| -cur.gradient[free[i]]);
            let step = h.cholesky().map(|c| c.solve(&g)).unwrap_or(g);
            for (i, &f) in free.iter().enumerate() {
                dir[f] = step[i];
            }
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = oracle.project(&(&x + &dir * alpha));
            let next = oracle.evaluate(&cand);
            if next.value <= cur.value + 1e-4 * cur.gradient.dot(&(&cand - &x)) {
                x = cand;
                cur = next;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // fall back to a projected gradient step
            let cand = oracle.project(&(&x - &cur.gradient * 1e-3));
            let next = oracle.evaluate(&cand);
            if next.value >= cur.value {
                break;
            }
            x = cand;
            cur = next;
        }
    }
    Ok(BanditOptimum {
        lambda: x[2],
        theta1: x[0],
        theta2: x[1],
        value: cur.value,
        lambda_at_bound: x[2] >= params.lambda_max - 1e-9,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_space_shape() {
        let c = context_space();
        assert_eq!(c.len(), 1440);
        assert_eq!(c[0], [0.0; 6]);
        assert_eq!(c[1439], [2.0, 4.0, 1.0, 1.0, 5.0, 3.0]);
    }

    #[test]
    fn terminal_integrand_plays_action_one() {
        let p = bandits(&BanditParams::default()).unwrap();
        let c = [1.0, 2.0, 0.0, 1.0, 3.0, 1.0];
        let mut xi = Vec::new();
        xi.extend_from_slice(&c);
        xi.extend_from_slice(&c);
        xi.extend_from_slice(&[4.0, 9.0]);
        let x = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let v = p.evaluate_integrand(3, &Vector::from_vec(xi), &x).unwrap();
        assert!((v[0] - (4.0 + 0.15)).abs() < 1e-15);
    }

    #[test]
    fn first_stage_derivative() {
        let p = bandits(&BanditParams::default()).unwrap();
        let j = p.integrand_jacobian(1, &Vector::zeros(6), &scalar(1.0)).unwrap();
        assert_eq!(j[(0, 0)], 0.5);
    }

    #[test]
    fn exact_gradient_matches_differences() {
        let o = BanditOracle::new(&BanditParams::default()).unwrap();
        let x = Vector::from_vec(vec![0.3, 0.6, 5.0]);
        let e = o.evaluate(&x);
        for i in 0..3 {
            let h = 1e-5;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (o.evaluate(&xp).value - o.evaluate(&xm).value) / (2.0 * h);
            assert!((fd - e.gradient[i]).abs() < 1e-6 * e.gradient[i].abs().max(1.0));
            let gfd = (o.evaluate(&xp).gradient - o.evaluate(&xm).gradient) / (2.0 * h);
            for j in 0..3 {
                assert!((gfd[j] - e.hessian[(i, j)]).abs() < 1e-4 * e.hessian[(i, j)].abs().max(1.0));
            }
        }
    }
}
