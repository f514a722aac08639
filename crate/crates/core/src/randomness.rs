//! Splittable random streams and the geometric level laws used for
//! log-branching factors.
//!
//! An [`RngStream`] is a counter-based generator: its output is a pure
//! function of a 64-bit key and a draw counter. Child streams are derived by
//! hashing the parent key with a child index, so a path of indices from the
//! master seed fully determines every draw regardless of which worker runs it.

use crate::error::{MccoError, Result};
use rand::RngCore;
use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SEED_SALT: u64 = 0x6A09_E667_F3BC_C909;
const CHILD_SALT: u64 = 0xBB67_AE85_84CA_A73B;

/// Largest level an untruncated draw may take before the run is aborted.
pub const LEVEL_CAP: u32 = 62;

fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fmix(mut z: u64) -> u64 {
    z ^= z >> 33;
    z = z.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    z ^= z >> 33;
    z = z.wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    z ^ (z >> 33)
}

/// Counter-based random stream keyed by (master seed, index path).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    key: u64,
    counter: u64,
}

impl RngStream {
    /// Master stream for a user seed.
    pub fn new(seed: u64) -> Self {
        RngStream {
            key: fmix(seed ^ SEED_SALT),
            counter: 0,
        }
    }

    /// Child stream `child_index` of this stream. Depends only on the key,
    /// never on how many draws the parent has made.
    pub fn derive(&self, child_index: u64) -> Self {
        let salt = splitmix(child_index.wrapping_add(CHILD_SALT));
        RngStream {
            key: fmix(self.key ^ salt).wrapping_add(GOLDEN),
            counter: 0,
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Uniform draw on [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw on (0, 1].
    pub fn uniform_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in 0..n.
    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, self)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        splitmix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}

/// Truncated (or untruncated) geometric law on levels 0..=M.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelDistribution {
    pub rate: f64,
    /// `None` means no truncation.
    pub truncation: Option<u32>,
}

impl LevelDistribution {
    pub fn new(rate: f64, truncation: Option<u32>) -> Result<Self> {
        if !(rate > 0.0 && rate < 1.0) {
            return Err(MccoError::InvalidParams(format!(
                "level rate must lie in (0, 1), got {rate}"
            )));
        }
        Ok(LevelDistribution { rate, truncation })
    }

    pub fn truncated(rate: f64, m: u32) -> Result<Self> {
        Self::new(rate, Some(m))
    }

    pub fn untruncated(rate: f64) -> Result<Self> {
        Self::new(rate, None)
    }

    fn norm(&self) -> f64 {
        match self.truncation {
            Some(m) => -((m as f64 + 1.0) * (-self.rate).ln_1p()).exp_m1(),
            None => 1.0,
        }
    }

    /// Probability q(l).
    pub fn pmf(&self, level: u32) -> Result<f64> {
        if let Some(m) = self.truncation {
            if level > m {
                return Err(MccoError::OutOfSupport { level, max: m });
            }
            if m == 0 {
                return Ok(1.0);
            }
        }
        Ok(self.rate * (1.0 - self.rate).powi(level as i32) / self.norm())
    }

    /// Draws a level by inverse-CDF sampling. Untruncated draws are not
    /// capped here; callers compare against [`LEVEL_CAP`].
    pub fn sample(&self, stream: &mut RngStream) -> u64 {
        if self.truncation == Some(0) {
            return 0;
        }
        let v = 1.0 - stream.uniform() * self.norm();
        let l = (v.ln() / (-self.rate).ln_1p()).floor();
        let l = if l.is_finite() && l > 0.0 { l as u64 } else { 0 };
        match self.truncation {
            Some(m) => l.min(m as u64),
            None => l,
        }
    }

    /// Mean branching factor E[2^λ].
    pub fn mean_branching(&self) -> Result<f64> {
        match self.truncation {
            Some(m) => Ok((0..=m)
                .map(|l| self.rate * (2.0 * (1.0 - self.rate)).powi(l as i32))
                .sum::<f64>()
                / self.norm()),
            None if self.rate > 0.5 => Ok(self.rate / (2.0 * self.rate - 1.0)),
            None => Err(MccoError::InfiniteCost {
                stage: 0,
                rate: self.rate,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pmf_small_cases() {
        let d = LevelDistribution::truncated(0.5, 1).unwrap();
        assert!((d.pmf(0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.pmf(1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(d.pmf(2), Err(MccoError::OutOfSupport { .. })));
        let d = LevelDistribution::truncated(0.59, 9).unwrap();
        let s: f64 = (0..=9).map(|l| d.pmf(l).unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pmf_normalizes_on_grid() {
        for ri in 1..100 {
            let r = ri as f64 / 100.0;
            for m in 0..=20 {
                let d = LevelDistribution::truncated(r, m).unwrap();
                let s: f64 = (0..=m).map(|l| d.pmf(l).unwrap()).sum();
                assert!((s - 1.0).abs() < 1e-12, "r={r} m={m} sum={s}");
            }
        }
    }

    #[test]
    fn degenerate_and_extreme_levels() {
        let mut s = RngStream::new(3);
        let d = LevelDistribution::truncated(0.3, 0).unwrap();
        assert!((0..1000).all(|_| d.sample(&mut s) == 0));
        let d = LevelDistribution::untruncated(0.999).unwrap();
        let n = 100_000;
        let mean = (0..n).map(|_| d.sample(&mut s) as f64).sum::<f64>() / n as f64;
        assert!(mean < 0.01);
    }

    #[test]
    fn untruncated_sampler_matches_geometric_tail() {
        let d = LevelDistribution::untruncated(0.6).unwrap();
        let mut s = RngStream::new(11);
        let n = 200_000;
        let ge2 = (0..n).filter(|_| d.sample(&mut s) >= 2).count() as f64 / n as f64;
        assert!((ge2 - 0.16).abs() < 0.005);
    }

    #[test]
    fn mean_branching_matches_monte_carlo() {
        let mut s = RngStream::new(5);
        for d in [
            LevelDistribution::truncated(0.59, 9).unwrap(),
            LevelDistribution::truncated(0.5, 6).unwrap(),
            LevelDistribution::untruncated(0.74).unwrap(),
        ] {
            let n = 1_000_000;
            let mc = (0..n).map(|_| (1u64 << d.sample(&mut s)) as f64).sum::<f64>() / n as f64;
            let exact = d.mean_branching().unwrap();
            assert!((mc / exact - 1.0).abs() < 0.01, "{mc} vs {exact}");
        }
        assert!(LevelDistribution::untruncated(0.5).unwrap().mean_branching().is_err());
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a = RngStream::new(42).derive(7).derive(3);
        let b = RngStream::new(42).derive(7).derive(3);
        let (mut a1, mut b1) = (a.clone(), b.clone());
        let xs: Vec<u64> = (0..1000).map(|_| a1.next_u64()).collect();
        let ys: Vec<u64> = (0..1000).map(|_| b1.next_u64()).collect();
        assert_eq!(xs, ys);
        let root = RngStream::new(42);
        assert_ne!(root.derive(0), root.derive(1));
        assert_ne!(RngStream::new(1), RngStream::new(2));
        // drawing from a parent does not change its children
        let mut p = root.clone();
        p.next_u64();
        assert_eq!(p.derive(5), root.derive(5));
    }

    #[test]
    fn sibling_streams_are_uncorrelated() {
        let root = RngStream::new(2024);
        let (mut s0, mut s1) = (root.derive(0), root.derive(1));
        let n = 10_000;
        let a: Vec<f64> = (0..n).map(|_| s0.normal()).collect();
        let b: Vec<f64> = (0..n).map(|_| s1.normal()).collect();
        let ma = a.iter().sum::<f64>() / n as f64;
        let mb = b.iter().sum::<f64>() / n as f64;
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() < 0.03, "corr = {corr}");
    }

    #[test]
    fn uniform_ranges() {
        let mut s = RngStream::new(9);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
            let v = s.uniform_open0();
            assert!(v > 0.0 && v <= 1.0);
            assert!(s.below(6) < 6);
        }
    }
}
