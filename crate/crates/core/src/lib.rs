//! Estimation and optimization of nested conditional-expectation objectives
//!
//! ```text
//! F(x) = E[ f_1(ξ_1, E[ f_2(ξ_2, ... E[ f_T(ξ_T, x) | ξ_[T-1] ] ... ) | ξ_1 ]) ]
//! ```
//!
//! with scenario-forest SAA and recursive multilevel Monte Carlo estimators
//! for values and gradients, sample-size schedules, projected SGD / Adam,
//! and ready-made problem adapters.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod mlmc_gradient;
pub mod mlmc_value;
pub mod optimizer;
pub mod problem;
pub mod problems;
pub mod randomness;
pub mod saa;
pub mod schedules;

pub use error::{MccoError, Result};
pub use exec::ExecOptions;
pub use mlmc_gradient::{mlmc_gradient_estimate, GradientMode, GradientReport};
pub use mlmc_value::{expected_cost, mlmc_value_estimate, EstimateReport, MlmcConfig};
pub use problem::{FeasibleSet, MccoProblem, ProblemBuilder, Vector, Matrix};
pub use randomness::{LevelDistribution, RngStream};
pub use saa::{saa_estimate, SaaConfig};
pub use schedules::{ProblemConstants, ScheduleMode};
