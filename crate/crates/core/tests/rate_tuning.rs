//! Work-normalized rate tuning on the scalar Bermudan surrogate.
//!
//! The fitted minimizer is a noisy statistic: with 10^6 replications it
//! moves across the flat part of the curve between seeds. The seed below is
//! fixed; other seeds can land outside the window.

use mcco::experiments::tune_bermudan_surrogate;
use mcco::ExecOptions;

fn grid() -> Vec<f64> {
    (51..=70).map(|i| i as f64 / 100.0).collect()
}

#[test]
fn surrogate_rate_lands_near_059() {
    let t = tune_bermudan_surrogate(&grid(), 1_000_000, 10, 59, &ExecOptions::default()).unwrap();
    eprintln!("best rate {} (work {:?})", t.best_rate, t.work);
    assert!((0.56..=0.62).contains(&t.best_rate), "best rate {}", t.best_rate);
}

#[test]
fn tuning_is_deterministic() {
    let g = [0.55, 0.6, 0.65, 0.7];
    let a = tune_bermudan_surrogate(&g, 2_000, 10, 5, &ExecOptions::with_threads(1)).unwrap();
    let b = tune_bermudan_surrogate(&g, 2_000, 10, 5, &ExecOptions::with_threads(3)).unwrap();
    assert_eq!(a, b);
}
