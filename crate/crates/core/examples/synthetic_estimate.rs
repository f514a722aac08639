//! MLMC and SAA on the three-stage sine nest, whose value is e^{-1/2}.

use mcco::mlmc_value::default_rates;
use mcco::problem::scalar;
use mcco::problems::{synthetic, synthetic_exact_value};
use mcco::{mlmc_value_estimate, saa_estimate, ExecOptions, MlmcConfig, RngStream, SaaConfig};

fn main() -> mcco::Result<()> {
    let p = synthetic(0.0)?;
    let x = scalar(0.0);
    let exec = ExecOptions::default();
    let truth = synthetic_exact_value(0.0, 0.0);

    let cfg = MlmcConfig::truncated(50_000, &default_rates(3, true), &[6, 5])?;
    let m = mlmc_value_estimate(&p, &x, &cfg, &RngStream::new(1), &exec)?;
    let (lo, hi) = m.ci();
    println!("mlmc  {:.5}  ci [{lo:.5}, {hi:.5}]  paths {}", m.value, m.scenario_count);

    let s = saa_estimate(&p, &x, &SaaConfig::uniform(3, 60)?, &RngStream::new(2), &exec)?;
    println!("saa   {:.5}  (biased; 60 x 60 x 60)  paths {}", s.value, s.scenario_count);
    println!("truth {truth:.5}");
    Ok(())
}
