//! Expected scenario paths per tree for a few level distributions.

use mcco::mlmc_value::default_rates;
use mcco::{expected_cost, MlmcConfig};

fn main() -> mcco::Result<()> {
    let rows = [
        ("untruncated, r = (0.74, 0.60)", MlmcConfig::untruncated(1, &[0.74, 0.60])?),
        ("smooth rates, M = (6, 5)", MlmcConfig::truncated(1, &default_rates(3, true), &[6, 5])?),
        ("r = 0.59, M = 9, T = 4", MlmcConfig::truncated(1, &[0.59; 3], &[9; 3])?),
        ("r = 0.58, M = 10, T = 4", MlmcConfig::truncated(1, &[0.58; 3], &[10; 3])?),
        ("r = 0.59, M = 11, T = 4", MlmcConfig::truncated(1, &[0.59; 3], &[11; 3])?),
        ("untruncated, r = 0.5001, T = 4", MlmcConfig::untruncated(1, &[0.5001; 3])?),
    ];
    for (name, c) in &rows {
        println!("{name:<34} {:>14.4}", expected_cost(c)?);
    }
    // Rates at or below 1/2 make the branching factor's mean infinite.
    match expected_cost(&MlmcConfig::untruncated(1, &[0.7, 0.4])?) {
        Err(e) => println!("r = (0.7, 0.4): {e}"),
        Ok(c) => println!("r = (0.7, 0.4): {c}"),
    }
    Ok(())
}
