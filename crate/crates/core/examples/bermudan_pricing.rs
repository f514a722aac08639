//! Five-asset Bermudan basket put priced with truncated MLMC.
//!
//! Usage: cargo run --release --example bermudan_pricing [n1]

use mcco::experiments::{run_bermudan, BermudanConfig};
use mcco::ExecOptions;

fn main() -> mcco::Result<()> {
    let n1 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100_000);
    let cfg = BermudanConfig { n1, ..Default::default() };
    let r = run_bermudan(&cfg, &ExecOptions::default())?;
    let (lo, hi) = r.ci();
    println!("price {:.4} (se {:.4}), 95% ci [{lo:.4}, {hi:.4}]", r.value, r.stderr());
    println!("{} paths, {:.2} expected per tree", r.scenario_count, r.expected_cost / n1 as f64);
    Ok(())
}
