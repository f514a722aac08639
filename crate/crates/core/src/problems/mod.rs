//! Ready-made problems and their analytic reference values.
//!
//! Every adapter can be described in JSON, e.g.
//!
//! ```json
//! {"kind": "bermudan", "m": 5, "K": 100.0, "gamma": 0.05, "sigma": 0.2, "T": 4, "s0": 100.0}
//! ```
//!
//! An optional `"dims"` array (d_0..d_T) is checked against the built
//! problem.

pub mod bandits;
pub mod entropic;
pub mod lqr;
pub mod stopping;
pub mod synthetic;

pub use bandits::{bandits, bandits_ground_truth, BanditOptimum, BanditOracle, BanditParams, CostModel};
pub use entropic::{entropic, entropic_exact_value};
pub use lqr::{lqr, lqr_exact_value, Lqr, LqrParams};
pub use stopping::{bermudan, bermudan_surrogate, optimal_stopping, stopping, Payoff, StateKernel, StoppingSpec};
pub use synthetic::{linear_chain, linear_chain_exact_value, synthetic, synthetic_exact_gradient, synthetic_exact_value};

use crate::error::{MccoError, Result};
use crate::problem::{scalar, MccoProblem, Vector};
use serde::{Deserialize, Serialize};

/// Parameters of a built-in adapter, tagged by `kind`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdapterParams {
    Synthetic {
        #[serde(default)]
        slope: f64,
    },
    LinearChain {
        a: Vec<f64>,
        #[serde(default)]
        noise_mean: f64,
        #[serde(default = "one")]
        noise_sd: f64,
    },
    Bermudan {
        #[serde(default = "d_m")]
        m: usize,
        #[serde(rename = "K", default = "d_k")]
        k: f64,
        #[serde(default = "d_gamma")]
        gamma: f64,
        #[serde(default = "d_sigma")]
        sigma: f64,
        #[serde(rename = "T", default = "d_t")]
        stages: usize,
        #[serde(default = "d_k")]
        s0: f64,
    },
    Stopping(StoppingSpec),
    Entropic {
        mu: Vec<f64>,
        means: Vec<f64>,
        sds: Vec<f64>,
    },
    Lqr(LqrParams),
    Bandits(BanditParams),
}

fn one() -> f64 {
    1.0
}
fn d_m() -> usize {
    5
}
fn d_k() -> f64 {
    100.0
}
fn d_gamma() -> f64 {
    0.05
}
fn d_sigma() -> f64 {
    0.2
}
fn d_t() -> usize {
    4
}

/// Adapter parameters plus an optional declared dimension chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemDescriptor {
    #[serde(flatten)]
    pub params: AdapterParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
}

impl ProblemDescriptor {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| MccoError::InvalidParams(format!("problem JSON: {e}")))
    }

    pub fn build(&self) -> Result<MccoProblem> {
        let p = build_problem(&self.params)?;
        if let Some(d) = &self.dims {
            let actual = p.dims();
            for (t, want) in actual.iter().enumerate() {
                match d.get(t) {
                    None => {
                        return Err(MccoError::MissingStage {
                            stage: t,
                            what: "declared dimension".into(),
                        })
                    }
                    Some(got) if got != want => {
                        return Err(MccoError::DimensionMismatch {
                            stage: t,
                            detail: format!("declared d_{t} = {got}, adapter has {want}"),
                        })
                    }
                    _ => {}
                }
            }
            if d.len() > actual.len() {
                return Err(MccoError::DimensionMismatch {
                    stage: actual.len(),
                    detail: format!("{} dimensions declared for a {}-stage problem", d.len(), p.stages()),
                });
            }
        }
        Ok(p)
    }
}

pub fn build_problem(params: &AdapterParams) -> Result<MccoProblem> {
    match params {
        AdapterParams::Synthetic { slope } => synthetic(*slope),
        AdapterParams::LinearChain { a, noise_mean, noise_sd } => linear_chain(a, *noise_mean, *noise_sd),
        AdapterParams::Bermudan { m, k, gamma, sigma, stages, s0 } => bermudan(*m, *k, *gamma, *sigma, *stages, *s0),
        AdapterParams::Stopping(spec) => stopping(spec),
        AdapterParams::Entropic { mu, means, sds } => entropic(mu, means, sds),
        AdapterParams::Lqr(p) => lqr(p),
        AdapterParams::Bandits(p) => bandits(p),
    }
}

/// A natural decision vector for the adapter: the terminal coefficients
/// for LQR, (0.5, 0.5, 1) for bandits and zero otherwise.
pub fn default_decision(params: &AdapterParams) -> Result<Vector> {
    Ok(match params {
        AdapterParams::Lqr(p) => Lqr::new(p)?.terminal_decision(),
        AdapterParams::Bandits(_) => Vector::from_vec(vec![0.5, 0.5, 1.0]),
        _ => scalar(0.0),
    })
}

/// Analytic value where one is available.
pub fn exact_value(params: &AdapterParams, x: &Vector) -> Result<Option<f64>> {
    Ok(match params {
        AdapterParams::Synthetic { slope } => Some(synthetic_exact_value(*slope, x[0])),
        AdapterParams::LinearChain { a, noise_mean, .. } => Some(linear_chain_exact_value(a, *noise_mean, x)),
        AdapterParams::Entropic { mu, means, sds } => Some(entropic_exact_value(mu, means, sds)?),
        AdapterParams::Lqr(p) => Some(lqr_exact_value(p)?),
        AdapterParams::Bandits(p) => Some(BanditOracle::new(p)?.evaluate(x).value),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_parsing() {
        let d = ProblemDescriptor::from_json(
            r#"{"kind": "bermudan", "m": 5, "K": 100.0, "gamma": 0.05, "sigma": 0.2, "T": 4, "s0": 100.0}"#,
        )
        .unwrap();
        let p = d.build().unwrap();
        assert_eq!(p.stages(), 4);
        assert_eq!(p.noise_dims(), &[5, 5, 5, 5]);
        let d = ProblemDescriptor::from_json(r#"{"kind": "synthetic", "dims": [1, 1, 1]}"#).unwrap();
        assert_eq!(
            d.build().unwrap_err(),
            MccoError::MissingStage { stage: 3, what: "declared dimension".into() }
        );
        let d = ProblemDescriptor::from_json(r#"{"kind": "synthetic", "dims": [2, 1, 1, 1]}"#).unwrap();
        assert!(matches!(d.build(), Err(MccoError::DimensionMismatch { stage: 0, .. })));
        assert!(ProblemDescriptor::from_json(r#"{"kind": "nope"}"#).is_err());
    }
}
