//! Picks a common level rate by minimizing second moment times cost on the
//! scalar Bermudan surrogate. Small replication counts give a noisy answer.

use mcco::experiments::tune_bermudan_surrogate;
use mcco::ExecOptions;

fn main() -> mcco::Result<()> {
    let grid: Vec<f64> = (51..=70).map(|i| i as f64 / 100.0).collect();
    let t = tune_bermudan_surrogate(&grid, 200_000, 10, 59, &ExecOptions::default())?;
    println!("{:>6} {:>12} {:>12} {:>12}", "rate", "E[H^2]", "work", "fit");
    for i in 0..t.grid.len() {
        println!("{:>6.2} {:>12.5} {:>12.4} {:>12.4}", t.grid[i], t.second_moments[i], t.work[i], t.fitted[i]);
    }
    println!("best rate {:.2}", t.best_rate);
    Ok(())
}
