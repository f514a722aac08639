//! Building a problem by hand and watching the antithetic split in one tree.

use mcco::mlmc_value::inspect_tree;
use mcco::problem::scalar;
use mcco::{mlmc_value_estimate, ExecOptions, Matrix, MlmcConfig, ProblemBuilder, RngStream};

fn main() -> mcco::Result<()> {
    // F(x) = E[ (E[ξ_2 | ξ_1] + x)^2 ] with ξ_2 | ξ_1 ~ N(ξ_1, 1), ξ_1 ~ N(0, 1).
    let p = ProblemBuilder::new("square_of_mean", vec![1, 1, 1], vec![1, 1])
        .sampler(1, |_, s| scalar(s.normal()))
        .sampler(2, |h, s| scalar(h[0][0] + s.normal()))
        .integrand(1, |_, y| scalar(y[0] * y[0]))
        .jacobian(1, |_, y| Matrix::from_element(1, 1, 2.0 * y[0]))
        .integrand(2, |xi, x| scalar(xi[0] + x[0]))
        .jacobian(2, |_, _| Matrix::from_element(1, 1, 1.0))
        .build()?;
    let x = scalar(0.5);
    let cfg = MlmcConfig::truncated(1, &[0.6], &[8])?;

    let h = inspect_tree(&p, &x, &cfg, &RngStream::new(4), 0, &|r| {
        println!(
            "stage {} level {}: full {:+.4} even {:+.4} odd {:+.4}",
            r.stage, r.level, r.full[0], r.even[0], r.odd[0]
        );
    })?;
    println!("tree estimate {h:.4}");

    let cfg = MlmcConfig::truncated(200_000, &[0.6], &[8])?;
    let r = mlmc_value_estimate(&p, &x, &cfg, &RngStream::new(5), &ExecOptions::default())?;
    println!("F(0.5) ~ {:.4} +- {:.4} (exact 1.25)", r.value, r.stderr());
    Ok(())
}
