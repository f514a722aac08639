//! Tree-level parallel execution with index-ordered results.

use crate::error::{MccoError, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default scenario budget per estimator call.
pub const DEFAULT_BUDGET: u64 = 1_000_000_000;

/// Execution settings shared by all estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecOptions {
    /// Worker count; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    /// Maximum number of root-to-leaf paths a single call may consume.
    pub budget: u64,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions {
            threads: None,
            budget: DEFAULT_BUDGET,
        }
    }
}

impl ExecOptions {
    pub fn with_threads(threads: usize) -> Self {
        ExecOptions {
            threads: Some(threads),
            ..Default::default()
        }
    }
}

/// Evaluates `f(0..n)` in parallel and returns results in index order. The
/// reported error, if any, is the one with the smallest index.
pub(crate) fn map_indexed<T, F>(n: usize, threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let run = || -> Vec<Result<T>> { (0..n).into_par_iter().map(&f).collect() };
    let results = match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| MccoError::InvalidParams(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    results.into_iter().collect()
}
