//! Contextual-bandit policy fit with Adam on truncated MLMC gradients,
//! compared with the exact-enumeration optimum.
//!
//! The clipped gradient is biased on this model, so the iterates drift away
//! from the enumeration optimum; see the README.

use mcco::experiments::{run_bandits, BanditExperimentConfig};
use mcco::ExecOptions;

fn main() -> mcco::Result<()> {
    let cfg = BanditExperimentConfig { seeds: vec![1, 2], iterations: 500, ..Default::default() };
    let out = run_bandits(&cfg, &ExecOptions::default())?;
    let o = &out.oracle;
    println!("oracle  theta1 {:.4} theta2 {:.4} lambda {:.4}  value {:.4}", o.theta1, o.theta2, o.lambda, o.value);
    for run in &out.runs {
        let last = run.trajectory.last().expect("non-empty");
        println!(
            "seed {}  theta1 {:.4} theta2 {:.4} lambda {:.4}  ({} paths)",
            run.seed, last[0], last[1], last[2], run.cumulative_scenarios.last().copied().unwrap_or(0)
        );
    }
    for c in out.checks() {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(())
}
