//! Linear-quadratic control value as a nested expectation over the
//! coefficients of the quadratic Q-function.
//!
//! x_t packs (Q^ss, Q^sa, Q^aa, b^s, b^a, c) row-major into
//! d = m² + mn + n² + m + n + 1 numbers. From x_t we form the Schur
//! complements
//!
//! ```text
//! P = Q^ss - Q^sa W Q^saᵀ,  g = b^s - Q^sa W b^a,  d = c - b^aᵀ W b^a,  W = (Q^aa)⁻¹
//! ```
//!
//! and f_t(ξ_t, x_t) = (Q + AᵀPA, AᵀPB, R + BᵀPB, AᵀPξ + Aᵀg, BᵀPξ + Bᵀg,
//! ξᵀPξ + 2gᵀξ + d) for t ≥ 2, while f_1(ξ_1, x_1) = ξ_1ᵀPξ_1 + 2gᵀξ_1 + d.
//! The decision is the terminal coefficient vector (P_T, 0, 0, 0, 0, 0); an
//! all-zero Q^aa is treated with W = 0.

use crate::error::{MccoError, Result};
use crate::problem::{scalar, FeasibleSet, Matrix, MccoProblem, ProblemBuilder, Vector};
use serde::{Deserialize, Serialize};

/// Problem data. Matrices are given as lists of rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LqrParams {
    pub stages: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub p_t: Vec<Vec<f64>>,
    /// Mean of the initial state ξ_1.
    pub s0: Vec<f64>,
    /// Covariance of ξ_1 (zero when omitted).
    #[serde(default)]
    pub sigma1: Option<Vec<Vec<f64>>>,
    /// Covariance of the disturbances ξ_t, t ≥ 2 (zero when omitted).
    #[serde(default)]
    pub sigma: Option<Vec<Vec<f64>>>,
    /// AR(1) coefficient linking ξ_t to ξ_{t-1} for t ≥ 3.
    #[serde(default)]
    pub phi: f64,
}

fn to_matrix(rows: &[Vec<f64>], nr: usize, nc: usize, name: &str) -> Result<Matrix> {
    if rows.len() != nr || rows.iter().any(|r| r.len() != nc) {
        return Err(MccoError::InvalidParams(format!("{name} must be {nr}x{nc}")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(MccoError::InvalidParams(format!("{name} has non-finite entries")));
    }
    Ok(Matrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

fn check_psd(m: &Matrix, name: &str) -> Result<()> {
    if (m - m.transpose()).amax() > 1e-10 * m.amax().max(1.0) {
        return Err(MccoError::InvalidParams(format!("{name} must be symmetric")));
    }
    let ev = m.clone().symmetric_eigenvalues();
    if ev.iter().any(|&l| l < -1e-10 * m.amax().max(1.0)) {
        return Err(MccoError::InvalidParams(format!("{name} must be positive semidefinite")));
    }
    Ok(())
}

/// Symmetric square root factor L with L Lᵀ = Σ for PSD Σ.
fn sqrt_factor(s: &Matrix) -> Matrix {
    let e = s.clone().symmetric_eigen();
    let d = e.eigenvalues.map(|l| l.max(0.0).sqrt());
    &e.eigenvectors * Matrix::from_diagonal(&d)
}

/// Validated LQR data.
#[derive(Clone, Debug)]
pub struct Lqr {
    pub m: usize,
    pub n: usize,
    pub a: Matrix,
    pub b: Matrix,
    pub q: Matrix,
    pub r: Matrix,
    pub p_t: Matrix,
    pub s0: Vector,
    pub sigma1: Matrix,
    pub sigma: Matrix,
    pub phi: f64,
    pub stages: usize,
}

/// Q-function coefficients of one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Coeffs {
    pub qss: Matrix,
    pub qsa: Matrix,
    pub qaa: Matrix,
    pub bs: Vector,
    pub ba: Vector,
    pub c: f64,
}

pub fn coeff_dim(m: usize, n: usize) -> usize {
    m * m + m * n + n * n + m + n + 1
}

impl Coeffs {
    pub fn unpack(x: &Vector, m: usize, n: usize) -> Self {
        let mut k = 0;
        let mut take = |r: usize, c: usize| {
            let out = Matrix::from_fn(r, c, |i, j| x[k + i * c + j]);
            k += r * c;
            out
        };
        let qss = take(m, m);
        let qsa = take(m, n);
        let qaa = take(n, n);
        let bs = take(m, 1).column(0).into_owned();
        let ba = take(n, 1).column(0).into_owned();
        let c = take(1, 1)[(0, 0)];
        Coeffs { qss, qsa, qaa, bs, ba, c }
    }

    pub fn pack(&self) -> Vector {
        let mut v = Vec::new();
        for mat in [&self.qss, &self.qsa, &self.qaa] {
            for i in 0..mat.nrows() {
                for j in 0..mat.ncols() {
                    v.push(mat[(i, j)]);
                }
            }
        }
        v.extend(self.bs.iter());
        v.extend(self.ba.iter());
        v.push(self.c);
        Vector::from_vec(v)
    }
}

/// W = (Q^aa)⁻¹, zero for an all-zero Q^aa, pseudo-inverse when singular.
fn w_of(qaa: &Matrix) -> (Matrix, bool) {
    if qaa.iter().all(|v| *v == 0.0) {
        return (qaa.clone(), false);
    }
    match qaa.clone().try_inverse() {
        Some(w) => (w, true),
        None => (
            qaa.clone().pseudo_inverse(1e-12).unwrap_or_else(|_| qaa.map(|_| 0.0)),
            false,
        ),
    }
}

/// (P, g, d) of a coefficient vector.
fn schur(c: &Coeffs, w: &Matrix) -> (Matrix, Vector, f64) {
    let p = &c.qss - &c.qsa * w * c.qsa.transpose();
    let g = &c.bs - &c.qsa * (w * &c.ba);
    let d = c.c - c.ba.dot(&(w * &c.ba));
    (p, g, d)
}

impl Lqr {
    pub fn new(params: &LqrParams) -> Result<Self> {
        let m = params.s0.len();
        if m == 0 || params.stages == 0 {
            return Err(MccoError::InvalidParams("LQR needs a state and T >= 1".into()));
        }
        let n = params.b.first().map_or(0, |r| r.len());
        if n == 0 {
            return Err(MccoError::InvalidParams("B must have at least one column".into()));
        }
        let a = to_matrix(&params.a, m, m, "A")?;
        let b = to_matrix(&params.b, m, n, "B")?;
        let q = to_matrix(&params.q, m, m, "Q")?;
        let r = to_matrix(&params.r, n, n, "R")?;
        let p_t = to_matrix(&params.p_t, m, m, "P_T")?;
        let zero = vec![vec![0.0; m]; m];
        let sigma1 = to_matrix(params.sigma1.as_ref().unwrap_or(&zero), m, m, "sigma1")?;
        let sigma = to_matrix(params.sigma.as_ref().unwrap_or(&zero), m, m, "sigma")?;
        for (mat, name) in [(&q, "Q"), (&r, "R"), (&p_t, "P_T"), (&sigma1, "sigma1"), (&sigma, "sigma")] {
            check_psd(mat, name)?;
        }
        if !params.phi.is_finite() {
            return Err(MccoError::InvalidParams("phi must be finite".into()));
        }
        Ok(Lqr {
            m,
            n,
            a,
            b,
            q,
            r,
            p_t,
            s0: Vector::from_vec(params.s0.clone()),
            sigma1,
            sigma,
            phi: params.phi,
            stages: params.stages,
        })
    }

    pub fn dim(&self) -> usize {
        coeff_dim(self.m, self.n)
    }

    /// x_T = (P_T, 0, 0, 0, 0, 0).
    pub fn terminal_decision(&self) -> Vector {
        Coeffs {
            qss: self.p_t.clone(),
            qsa: Matrix::zeros(self.m, self.n),
            qaa: Matrix::zeros(self.n, self.n),
            bs: Vector::zeros(self.m),
            ba: Vector::zeros(self.n),
            c: 0.0,
        }
        .pack()
    }

    fn next_coeffs(&self, p: &Matrix, g: &Vector, d: f64, xi: &Vector) -> Coeffs {
        let (a, b) = (&self.a, &self.b);
        let pxi = p * xi;
        Coeffs {
            qss: &self.q + a.transpose() * p * a,
            qsa: a.transpose() * p * b,
            qaa: &self.r + b.transpose() * p * b,
            bs: a.transpose() * (&pxi + g),
            ba: b.transpose() * (&pxi + g),
            c: xi.dot(&pxi) + 2.0 * g.dot(xi) + d,
        }
    }

    /// Stage-t integrand for t ≥ 2.
    fn f_mid(&self, xi: &Vector, x: &Vector) -> Vector {
        let c = Coeffs::unpack(x, self.m, self.n);
        let (w, _) = w_of(&c.qaa);
        let (p, g, d) = schur(&c, &w);
        self.next_coeffs(&p, &g, d, xi).pack()
    }

    fn f_first(&self, xi: &Vector, x: &Vector) -> f64 {
        let c = Coeffs::unpack(x, self.m, self.n);
        let (w, _) = w_of(&c.qaa);
        let (p, g, d) = schur(&c, &w);
        xi.dot(&(&p * xi)) + 2.0 * g.dot(xi) + d
    }

    /// Directional derivatives (dP, dg, dd) of the Schur complements along
    /// every unit vector of the coefficient space.
    fn schur_derivatives(&self, x: &Vector) -> Vec<(Matrix, Vector, f64)> {
        let c = Coeffs::unpack(x, self.m, self.n);
        let (w, invertible) = w_of(&c.qaa);
        let dim = self.dim();
        (0..dim)
            .map(|k| {
                let mut e = Vector::zeros(dim);
                e[k] = 1.0;
                let dc = Coeffs::unpack(&e, self.m, self.n);
                let dw = if invertible { -(&w * &dc.qaa * &w) } else { Matrix::zeros(self.n, self.n) };
                let qsat = c.qsa.transpose();
                let dp = &dc.qss
                    - &dc.qsa * &w * &qsat
                    - &c.qsa * &dw * &qsat
                    - &c.qsa * &w * dc.qsa.transpose();
                let dg = &dc.bs - &dc.qsa * (&w * &c.ba) - &c.qsa * (&dw * &c.ba) - &c.qsa * (&w * &dc.ba);
                let dd = dc.c - dc.ba.dot(&(&w * &c.ba)) - c.ba.dot(&(&dw * &c.ba)) - c.ba.dot(&(&w * &dc.ba));
                (dp, dg, dd)
            })
            .collect()
    }

    fn jac_mid(&self, xi: &Vector, x: &Vector) -> Matrix {
        let dim = self.dim();
        let mut j = Matrix::zeros(dim, dim);
        for (k, (dp, dg, dd)) in self.schur_derivatives(x).into_iter().enumerate() {
            // f is affine in (P, g, d) apart from the constant Q and R
            let mut out = self.next_coeffs(&dp, &dg, dd, xi);
            out.qss -= &self.q;
            out.qaa -= &self.r;
            j.row_mut(k).copy_from(&out.pack().transpose());
        }
        j
    }

    fn jac_first(&self, xi: &Vector, x: &Vector) -> Matrix {
        let ders = self.schur_derivatives(x);
        Matrix::from_fn(ders.len(), 1, |k, _| {
            let (dp, dg, dd) = &ders[k];
            xi.dot(&(dp * xi)) + 2.0 * dg.dot(xi) + dd
        })
    }

    pub fn problem(&self) -> Result<MccoProblem> {
        let t_count = self.stages;
        let dim = self.dim();
        let mut dims = vec![dim; t_count + 1];
        dims[0] = 1;
        let l1 = sqrt_factor(&self.sigma1);
        let l = sqrt_factor(&self.sigma);
        let (s0, m, phi) = (self.s0.clone(), self.m, self.phi);
        let mut b = ProblemBuilder::new("lqr", dims, vec![m; t_count])
            .feasible(FeasibleSet::unbounded(dim))
            .sampler(1, move |_, s| &s0 + &l1 * Vector::from_fn(m, |_, _| s.normal()));
        for t in 2..=t_count {
            let l = l.clone();
            b = b.sampler(t, move |h, s| {
                let z = &l * Vector::from_fn(m, |_, _| s.normal());
                if t >= 3 && phi != 0.0 {
                    z + &h[t - 2] * phi
                } else {
                    z
                }
            });
        }
        let me = self.clone();
        b = b.integrand(1, {
            let me = me.clone();
            move |xi, x| scalar(me.f_first(xi, x))
        });
        b = b.jacobian(1, {
            let me = me.clone();
            move |xi, x| me.jac_first(xi, x)
        });
        for t in 2..=t_count {
            let (m1, m2) = (me.clone(), me.clone());
            b = b
                .integrand(t, move |xi, x| m1.f_mid(xi, x))
                .jacobian(t, move |xi, x| m2.jac_mid(xi, x));
        }
        b.build()
    }

    /// E[min_a Q_1(ξ_1, a)] by the deterministic coefficient recursion,
    /// valid for independent Gaussian disturbances (phi = 0).
    pub fn exact_value(&self) -> Result<f64> {
        if self.phi != 0.0 {
            return Err(MccoError::InvalidParams(
                "the closed form needs serially independent disturbances".into(),
            ));
        }
        let mut x = self.terminal_decision();
        for t in (2..=self.stages).rev() {
            let c = Coeffs::unpack(&x, self.m, self.n);
            let (w, ok) = w_of(&c.qaa);
            if !ok && t < self.stages && c.qaa.iter().any(|v| *v != 0.0) {
                return Err(MccoError::SingularQaa { stage: t });
            }
            let (p, g, d) = schur(&c, &w);
            let mut next = self.next_coeffs(&p, &g, d, &Vector::zeros(self.m));
            next.c += (&p * &self.sigma).trace();
            x = next.pack();
        }
        let c = Coeffs::unpack(&x, self.m, self.n);
        let (w, ok) = w_of(&c.qaa);
        if !ok && self.stages > 1 && c.qaa.iter().any(|v| *v != 0.0) {
            return Err(MccoError::SingularQaa { stage: 1 });
        }
        let (p, g, d) = schur(&c, &w);
        Ok(self.s0.dot(&(&p * &self.s0)) + (&p * &self.sigma1).trace() + 2.0 * g.dot(&self.s0) + d)
    }
}

pub fn lqr(params: &LqrParams) -> Result<MccoProblem> {
    Lqr::new(params)?.problem()
}

pub fn lqr_exact_value(params: &LqrParams) -> Result<f64> {
    Lqr::new(params)?.exact_value()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_params(q: f64, r: f64, pt: f64, noise: f64) -> LqrParams {
        LqrParams {
            stages: 2,
            a: vec![vec![1.0]],
            b: vec![vec![1.0]],
            q: vec![vec![q]],
            r: vec![vec![r]],
            p_t: vec![vec![pt]],
            s0: vec![1.0],
            sigma1: None,
            sigma: Some(vec![vec![noise]]),
            phi: 0.0,
        }
    }

    #[test]
    fn scalar_riccati_references() {
        assert!((lqr_exact_value(&scalar_params(1.0, 1.0, 1.0, 0.0)).unwrap() - 1.5).abs() < 1e-12);
        assert!((lqr_exact_value(&scalar_params(1.0, 1.0, 1.0, 1.0)).unwrap() - 2.5).abs() < 1e-12);
        assert_eq!(lqr_exact_value(&scalar_params(0.0, 0.0, 0.0, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn pack_roundtrip() {
        let x = Vector::from_fn(coeff_dim(2, 3), |i, _| i as f64);
        assert_eq!(Coeffs::unpack(&x, 2, 3).pack(), x);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let params = LqrParams {
            stages: 3,
            a: vec![vec![1.0, 0.2], vec![0.0, 0.9]],
            b: vec![vec![0.5], vec![1.0]],
            q: vec![vec![1.0, 0.0], vec![0.0, 2.0]],
            r: vec![vec![0.5]],
            p_t: vec![vec![1.0, 0.1], vec![0.1, 1.0]],
            s0: vec![1.0, -1.0],
            sigma1: None,
            sigma: Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            phi: 0.0,
        };
        let lq = Lqr::new(&params).unwrap();
        let p = lq.problem().unwrap();
        let d = lq.dim();
        let x = Vector::from_fn(d, |i, _| 0.3 + 0.1 * (i as f64).sin() + if i == 6 { 2.0 } else { 0.0 });
        let xi = Vector::from_vec(vec![0.4, -0.7]);
        for t in [1, 2] {
            let j = p.integrand_jacobian(t, &xi, &x).unwrap();
            for k in 0..d {
                let h = 1e-5;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (p.evaluate_integrand(t, &xi, &xp).unwrap() - p.evaluate_integrand(t, &xi, &xm).unwrap()) / (2.0 * h);
                for o in 0..fd.len() {
                    let exact = j[(k, o)];
                    assert!((fd[o] - exact).abs() <= 1e-4 * exact.abs().max(1.0), "t={t} k={k} o={o}: {} vs {exact}", fd[o]);
                }
            }
        }
    }
}
