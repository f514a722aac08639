use mcco::analysis::{convex_fit, mse_decompose};
use mcco::optimizer::{clip_norm, softplus, softplus_inv};
use mcco::problems::ProblemDescriptor;
use mcco::schedules::ceil_robust;
use mcco::{FeasibleSet, LevelDistribution, MccoError, RngStream, Vector};
use proptest::prelude::*;

fn box_and_points() -> impl Strategy<Value = (Vec<(f64, f64)>, Vec<f64>, Vec<f64>)> {
    (1usize..6).prop_flat_map(|d| {
        (
            prop::collection::vec((-50.0..50.0f64, 0.0..20.0f64).prop_map(|(l, w)| (l, l + w)), d),
            prop::collection::vec(-100.0..100.0f64, d),
            prop::collection::vec(-100.0..100.0f64, d),
        )
    })
}

proptest! {
    #[test]
    fn box_projection_is_feasible_idempotent_nonexpansive((bounds, a, b) in box_and_points()) {
        let set = FeasibleSet::boxed(bounds.iter().map(|b| b.0).collect(), bounds.iter().map(|b| b.1).collect()).unwrap();
        let (a, b) = (Vector::from_vec(a), Vector::from_vec(b));
        let (pa, pb) = (set.project(&a).unwrap(), set.project(&b).unwrap());
        prop_assert!(set.contains(&pa));
        prop_assert_eq!(set.project(&pa).unwrap(), pa.clone());
        prop_assert!((&pa - &pb).norm() <= (&a - &b).norm() + 1e-12);
    }

    #[test]
    fn mse_splits_into_bias_and_variance(est in prop::collection::vec(-1e3..1e3f64, 2..50), truth in -1e3..1e3f64) {
        let d = mse_decompose(&est, truth).unwrap();
        prop_assert!((d.mse - d.bias2 - d.variance).abs() <= 1e-9 * d.mse.max(1.0));
        prop_assert!(d.bias2 >= 0.0 && d.variance >= 0.0);
    }

    #[test]
    fn truncated_pmf_sums_to_one(rate in 0.01..0.99f64, m in 0u32..40) {
        let d = LevelDistribution::truncated(rate, m).unwrap();
        let total: f64 = (0..=m).map(|l| d.pmf(l).unwrap()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let beyond = matches!(d.pmf(m + 1), Err(MccoError::OutOfSupport { .. }));
        prop_assert!(beyond);
        let branching: f64 = (0..=m).map(|l| d.pmf(l).unwrap() * 2f64.powi(l as i32)).sum();
        prop_assert!((d.mean_branching().unwrap() / branching - 1.0).abs() < 1e-10);
    }

    #[test]
    fn untruncated_pmf_sums_to_one(rate in 0.05..0.99f64) {
        let d = LevelDistribution::untruncated(rate).unwrap();
        let total: f64 = (0..2000).map(|l| d.pmf(l).unwrap()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn level_draws_stay_in_support(rate in 0.01..0.99f64, m in 0u32..12, seed in any::<u64>()) {
        let d = LevelDistribution::truncated(rate, m).unwrap();
        let mut s = RngStream::new(seed);
        for _ in 0..200 {
            prop_assert!(d.sample(&mut s) <= m as u64);
        }
    }

    #[test]
    fn streams_are_reproducible(seed in any::<u64>(), child in any::<u64>()) {
        let mut a = RngStream::new(seed).derive(child);
        let mut b = RngStream::new(seed).derive(child);
        for _ in 0..16 {
            prop_assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
        let u = RngStream::new(seed).uniform();
        prop_assert!((0.0..1.0).contains(&u));
    }

    #[test]
    fn declared_dimension_chain_is_checked(stages in 1usize..6, declared in 0usize..8) {
        let a = vec![0.5; stages];
        let dims = vec![1usize; declared];
        let json = serde_json::json!({"kind": "linear_chain", "a": a, "dims": dims}).to_string();
        let built = ProblemDescriptor::from_json(&json).unwrap().build();
        match declared.cmp(&(stages + 1)) {
            std::cmp::Ordering::Equal => prop_assert!(built.is_ok()),
            std::cmp::Ordering::Less => {
                prop_assert_eq!(built.unwrap_err(), MccoError::MissingStage { stage: declared, what: "declared dimension".into() })
            }
            std::cmp::Ordering::Greater => {
                let mismatch = matches!(built, Err(MccoError::DimensionMismatch { .. }));
                prop_assert!(mismatch)
            }
        }
    }

    #[test]
    fn clipping_bounds_the_norm(g in prop::collection::vec(-1e6..1e6f64, 1..8), thr in 1e-3..1e3f64) {
        let mut c = g.clone();
        clip_norm(&mut c, thr);
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(norm(&c) <= thr * (1.0 + 1e-12));
        if norm(&g) <= thr {
            prop_assert_eq!(c, g);
        } else {
            for (a, b) in c.iter().zip(&g) {
                prop_assert!(a * b >= 0.0);
            }
        }
    }

    #[test]
    fn softplus_roundtrip(y in 1e-6..1e3f64) {
        let z = softplus_inv(y);
        prop_assert!((softplus(z) / y - 1.0).abs() < 1e-9);
    }

    #[test]
    fn robust_ceiling_of_integers(n in 0u32..1_000_000, frac in 0.01..0.99f64) {
        prop_assert_eq!(ceil_robust(n as f64), n as f64);
        prop_assert_eq!(ceil_robust(n as f64 + frac), n as f64 + 1.0);
    }

    #[test]
    fn convex_fit_is_convex(ys in prop::collection::vec(-10.0..10.0f64, 3..15)) {
        let xs: Vec<f64> = (0..ys.len()).map(|i| 0.5 + 0.01 * i as f64).collect();
        let f = convex_fit(&xs, &ys).unwrap();
        let scale = ys.iter().fold(1.0f64, |a, y| a.max(y.abs()));
        for w in f.windows(3) {
            prop_assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-8 * scale);
        }
        let rss = |v: &[f64]| v.iter().zip(&ys).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        prop_assert!(rss(&f) <= rss(&vec![mean; ys.len()]) + 1e-8 * scale * scale);
    }
}
