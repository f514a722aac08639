//! Projected SGD with MLMC gradients on the sloped sine nest
//! F(x) = e^{-1/2} cos(sin x), minimized at x = π/2.

use mcco::mlmc_value::default_rates;
use mcco::optimizer::{projected_sgd, GradientSample, SgdConfig, Stepsize};
use mcco::problem::scalar;
use mcco::problems::{synthetic, synthetic_exact_gradient, synthetic_exact_value};
use mcco::{mlmc_gradient_estimate, ExecOptions, GradientMode, MlmcConfig, RngStream};

fn main() -> mcco::Result<()> {
    let p = synthetic(1.0)?;
    let exec = ExecOptions::default();
    let cfg = MlmcConfig::truncated(200, &default_rates(3, true), &[6, 5])?;

    let g = mlmc_gradient_estimate(&p, &scalar(0.7), &cfg, &RngStream::new(1), &exec, GradientMode::Coupled)?;
    println!("grad at 0.7: {:.4} +- {:.4} (exact {:.4})", g.gradient[0], g.stderr()[0], synthetic_exact_gradient(1.0, 0.7));

    let sgd = SgdConfig { iterations: 300, stepsize: Stepsize::Constant { eta: 1.0 } };
    let r = projected_sgd(
        &p,
        &scalar(0.3),
        &sgd,
        |x, s| {
            let g = mlmc_gradient_estimate(&p, x, &cfg, s, &exec, GradientMode::Coupled)?;
            Ok(GradientSample { gradient: g.gradient, scenarios: g.scenario_count })
        },
        &RngStream::new(2),
    )?;
    let x = r.last[0];
    println!("x_K+1 = {x:.4}, F = {:.4}, min F = {:.4}", synthetic_exact_value(1.0, x), synthetic_exact_value(1.0, std::f64::consts::FRAC_PI_2));
    println!("{} scenario paths", r.scenario_count);
    Ok(())
}
