//! Replication summaries, confidence intervals, convergence slopes and
//! work-normalized rate tuning.

use crate::error::{MccoError, Result};
use crate::exec::ExecOptions;
use crate::mlmc_value::{mlmc_value_estimate, EstimateReport, MlmcConfig};
use crate::problem::{Matrix, MccoProblem, Vector};
use crate::randomness::{LevelDistribution, RngStream};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Normal quantile used for 95% intervals.
pub const Z95: f64 = 1.96;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance; NaN for fewer than two values.
pub fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Standard error of the sample mean; NaN for fewer than two values.
pub fn std_error(v: &[f64]) -> f64 {
    (sample_variance(v) / v.len() as f64).sqrt()
}

/// mean ± 1.96 · sd / √n.
pub fn confidence_interval(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(MccoError::TooFewSamples {
            needed: 2,
            got: values.len(),
        });
    }
    let m = mean(values);
    let h = Z95 * std_error(values);
    Ok((m - h, m + h))
}

/// Least-squares slope of log10(mse) against log10(cost).
pub fn loglog_slope(costs: &[f64], mses: &[f64]) -> Result<f64> {
    if costs.len() != mses.len() {
        return Err(MccoError::DegenerateFit(format!(
            "{} costs but {} mse values",
            costs.len(),
            mses.len()
        )));
    }
    if costs.len() < 3 {
        return Err(MccoError::DegenerateFit(format!(
            "need at least 3 points, got {}",
            costs.len()
        )));
    }
    if costs.iter().chain(mses).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(MccoError::DegenerateFit("entries must be positive and finite".into()));
    }
    let lx: Vec<f64> = costs.iter().map(|c| c.log10()).collect();
    let ly: Vec<f64> = mses.iter().map(|m| m.log10()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx < 1e-24 {
        return Err(MccoError::DegenerateFit("all costs are equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Mean squared error split into squared bias and variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseDecomposition {
    pub mse: f64,
    pub bias2: f64,
    /// Plug-in (1/n) variance, so that mse = bias2 + variance.
    pub variance: f64,
}

pub fn mse_decompose(estimates: &[f64], truth: f64) -> Result<MseDecomposition> {
    if estimates.len() < 2 {
        return Err(MccoError::TooFewSamples {
            needed: 2,
            got: estimates.len(),
        });
    }
    let m = mean(estimates);
    let n = estimates.len() as f64;
    Ok(MseDecomposition {
        mse: estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / n,
        bias2: (m - truth).powi(2),
        variance: estimates.iter().map(|e| (e - m).powi(2)).sum::<f64>() / n,
    })
}

/// Independent replications of an estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub estimates: Vec<f64>,
    pub scenario_counts: Vec<u64>,
    pub truth: Option<f64>,
    pub mean: f64,
    pub errors: Option<MseDecomposition>,
}

impl ReplicationSummary {
    pub fn mean_cost(&self) -> f64 {
        self.scenario_counts.iter().sum::<u64>() as f64 / self.scenario_counts.len() as f64
    }
}

/// Runs `estimator` on child streams 0..reps of `stream` and summarizes the
/// resulting estimates.
pub fn replicate<F>(reps: usize, stream: &RngStream, truth: Option<f64>, estimator: F) -> Result<ReplicationSummary>
where
    F: Fn(&RngStream) -> Result<EstimateReport>,
{
    if reps < 2 {
        return Err(MccoError::TooFewSamples { needed: 2, got: reps });
    }
    let mut estimates = Vec::with_capacity(reps);
    let mut scenario_counts = Vec::with_capacity(reps);
    for r in 0..reps {
        let rep = estimator(&stream.derive(r as u64)).map_err(|e| e.context(format!("replication {r}")))?;
        estimates.push(rep.value);
        scenario_counts.push(rep.scenario_count);
    }
    let errors = truth.map(|t| mse_decompose(&estimates, t)).transpose()?;
    Ok(ReplicationSummary {
        mean: mean(&estimates),
        estimates,
        scenario_counts,
        truth,
        errors,
    })
}

/// Pilot estimate of E[H_1(x)²], usable as `mu_bar[2]` in schedules.
pub fn pilot_second_moment(
    problem: &MccoProblem,
    x: &Vector,
    config: &MlmcConfig,
    stream: &RngStream,
    exec: &ExecOptions,
) -> Result<f64> {
    let r = mlmc_value_estimate(problem, x, config, stream, exec)?;
    Ok(mean(&r.tree_values.iter().map(|h| h * h).collect::<Vec<_>>()))
}

/// Outcome of work-normalized rate tuning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTuning {
    pub best_rate: f64,
    pub grid: Vec<f64>,
    /// Estimated E[H_1²] per grid rate.
    pub second_moments: Vec<f64>,
    /// Second moment times expected cost per tree.
    pub work: Vec<f64>,
    /// Convex piecewise-linear least-squares fit of `work` at each grid rate.
    pub fitted: Vec<f64>,
}

/// Picks the level rate minimizing the work-normalized second moment
/// E[H_1²] · ∏_t Σ_l q_t(l) 2^l, with the same rate at every stage.
///
/// Every grid rate reuses the same child streams. A convex piecewise-linear
/// function is fitted to the work values by least squares and its minimizing
/// grid rate is returned. Grids shorter than three points skip the fit.
pub fn tune_rate_worknorm(
    problem: &MccoProblem,
    x: &Vector,
    grid: &[f64],
    replications: usize,
    truncation: Option<u32>,
    stream: &RngStream,
    exec: &ExecOptions,
) -> Result<RateTuning> {
    if grid.is_empty() {
        return Err(MccoError::InvalidParams("empty rate grid".into()));
    }
    if let Some(r) = grid.iter().find(|r| !(**r > 0.5 && **r < 1.0)) {
        return Err(MccoError::InvalidParams(format!("grid rate {r} outside (0.5, 1)")));
    }
    let stages = problem.stages().saturating_sub(1);
    let mut second_moments = Vec::with_capacity(grid.len());
    let mut work = Vec::with_capacity(grid.len());
    for &r in grid {
        let levels = (0..stages)
            .map(|_| LevelDistribution::new(r, truncation))
            .collect::<Result<Vec<_>>>()?;
        let config = MlmcConfig::new(replications, levels)?;
        let m2 = pilot_second_moment(problem, x, &config, stream, exec)
            .map_err(|e| e.context(format!("rate {r}")))?;
        second_moments.push(m2);
        work.push(m2 * config.cost_per_tree()?);
    }
    let fitted = if grid.len() < 3 { work.clone() } else { convex_fit(grid, &work)? };
    Ok(RateTuning {
        best_rate: grid[argmin(&fitted)],
        grid: grid.to_vec(),
        second_moments,
        work,
        fitted,
    })
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Least-squares fit of a convex piecewise-linear function with knots at
/// the (sorted) abscissae; returns the fitted values.
///
/// The function is a + b·x + Σ_k c_k (x - x_k)_+ with c ≥ 0. The affine
/// part is projected out and the hinge weights solved by NNLS.
pub fn convex_fit(xs: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
    let n = xs.len();
    if n != ys.len() || n < 3 || xs.windows(2).any(|w| !(w[1] > w[0])) || ys.iter().any(|y| !y.is_finite()) {
        return Err(MccoError::DegenerateFit(
            "convex fit needs >= 3 increasing abscissae and finite values".into(),
        ));
    }
    let affine = Matrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
    let qr = affine.clone().qr();
    let q = qr.q();
    let project = |v: &Vector| v - &q * (q.transpose() * v);
    let hinges = Matrix::from_fn(n, n - 2, |i, k| (xs[i] - xs[k + 1]).max(0.0));
    let mut a = hinges.clone();
    for k in 0..n - 2 {
        let col = project(&hinges.column(k).into_owned());
        a.set_column(k, &col);
    }
    let y = Vector::from_column_slice(ys);
    let c = nnls(&a, &project(&y))?;
    let hinge_part = &hinges * &c;
    let rest = &y - &hinge_part;
    let ab = affine
        .clone()
        .svd(true, true)
        .solve(&rest, 1e-14)
        .map_err(|e| MccoError::DegenerateFit(e.to_string()))?;
    Ok((&affine * ab + hinge_part).iter().copied().collect())
}

/// Lawson-Hanson non-negative least squares.
fn nnls(a: &Matrix, b: &Vector) -> Result<Vector> {
    let p = a.ncols();
    let tol = 1e-12 * (1.0 + a.norm() * b.norm());
    let mut x = Vector::zeros(p);
    let mut passive = vec![false; p];
    let solve = |passive: &[bool]| -> Result<Vector> {
        let idx: Vec<usize> = (0..p).filter(|&j| passive[j]).collect();
        let sub = Matrix::from_fn(a.nrows(), idx.len(), |i, k| a[(i, idx[k])]);
        let s = sub
            .svd(true, true)
            .solve(b, 1e-14)
            .map_err(|e| MccoError::DegenerateFit(e.to_string()))?;
        let mut full = Vector::zeros(p);
        for (k, &j) in idx.iter().enumerate() {
            full[j] = s[k];
        }
        Ok(full)
    };
    for _ in 0..3 * p + 10 {
        let w = a.transpose() * (b - a * &x);
        let Some(j) = (0..p)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]))
        else {
            return Ok(x);
        };
        passive[j] = true;
        loop {
            let s = solve(&passive)?;
            if (0..p).all(|i| !passive[i] || s[i] > 0.0) {
                x = s;
                break;
            }
            let alpha = (0..p)
                .filter(|&i| passive[i] && s[i] <= 0.0)
                .map(|i| x[i] / (x[i] - s[i]))
                .fold(f64::INFINITY, f64::min);
            x += (s - &x) * alpha;
            for i in 0..p {
                if passive[i] && x[i] <= tol {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    Ok(x)
}

/// One output record of an estimator run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub run_id: String,
    pub seed: u64,
    pub n1: usize,
    pub estimate: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub scenarios: u64,
    pub expected_cost: f64,
    pub wall_ms: f64,
}

impl CsvRow {
    pub fn from_report(run_id: impl Into<String>, seed: u64, report: &EstimateReport, wall_ms: f64) -> Self {
        let (ci_low, ci_high) = report.ci();
        CsvRow {
            run_id: run_id.into(),
            seed,
            n1: report.tree_values.len(),
            estimate: report.value,
            stderr: report.stderr(),
            ci_low,
            ci_high,
            scenarios: report.scenario_count,
            expected_cost: report.expected_cost,
            wall_ms,
        }
    }
}

/// Writes rows with a header line.
pub fn write_csv<W: Write>(out: W, rows: &[CsvRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)
            .map_err(|e| MccoError::InvalidParams(format!("csv: {e}")))?;
    }
    w.flush()
        .map_err(|e| MccoError::InvalidParams(format!("csv: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ci_hand_values() {
        let (lo, hi) = confidence_interval(&[0.0, 1.0]).unwrap();
        assert!((lo + 0.48).abs() < 1e-12 && (hi - 1.48).abs() < 1e-12);
        assert_eq!(confidence_interval(&[2.5; 10]).unwrap(), (2.5, 2.5));
        assert!(matches!(
            confidence_interval(&[1.0]),
            Err(MccoError::TooFewSamples { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn slope_exact_power_laws() {
        let c = [1e2, 1e3, 1e4, 1e5];
        let m: Vec<f64> = c.iter().map(|x| 1.0 / x).collect();
        assert!((loglog_slope(&c, &m).unwrap() + 1.0).abs() < 1e-12);
        assert!(loglog_slope(&c, &[3.0; 4]).unwrap().abs() < 1e-12);
        assert!(loglog_slope(&c[..2], &m[..2]).is_err());
        assert!(loglog_slope(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(loglog_slope(&[1.0, 2.0, 0.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn decomposition_constant_estimator() {
        let d = mse_decompose(&[3.0; 5], 1.0).unwrap();
        assert_eq!(d.mse, 4.0);
        assert_eq!(d.bias2, 4.0);
        assert_eq!(d.variance, 0.0);
    }

    #[test]
    fn convex_fit_keeps_convex_data_and_fixes_a_bump() {
        let xs: Vec<f64> = (0..20).map(|i| 0.51 + 0.01 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x - 0.58f64).abs() * 3.0 + 1.0).collect();
        let f = convex_fit(&xs, &ys).unwrap();
        for (a, b) in f.iter().zip(&ys) {
            assert!((a - b).abs() < 1e-9);
        }
        let mut bumped = ys.clone();
        bumped[3] = 0.0;
        let f = convex_fit(&xs, &bumped).unwrap();
        for w in f.windows(3) {
            assert!(w[2] - 2.0 * w[1] + w[0] > -1e-9);
        }
        assert!(convex_fit(&xs[..2], &ys[..2]).is_err());
    }

    #[test]
    fn csv_header_and_row() {
        let rep = EstimateReport {
            value: 1.0,
            tree_values: vec![0.0, 2.0],
            scenario_count: 4,
            expected_cost: 4.0,
            seed: Some(3),
        };
        let mut buf = Vec::new();
        write_csv(&mut buf, &[CsvRow::from_report("a", 3, &rep, 1.5)]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(
            lines.next().unwrap(),
            "run_id,seed,n1,estimate,stderr,ci_low,ci_high,scenarios,expected_cost,wall_ms"
        );
        assert!(lines.next().unwrap().starts_with("a,3,2,1.0,1.0,"));
    }
}
