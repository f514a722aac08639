use thiserror::Error;

/// Errors raised by problem construction, estimation and scheduling.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MccoError {
    #[error("dimension mismatch at stage {stage}: {detail}")]
    DimensionMismatch { stage: usize, detail: String },
    #[error("stage {stage} is missing its {what}")]
    MissingStage { stage: usize, what: String },
    #[error("integrand at stage {stage} is not differentiable")]
    NotDifferentiable { stage: usize },
    #[error("level {level} outside the support 0..={max}")]
    OutOfSupport { level: u32, max: u32 },
    #[error("expected cost is infinite: untruncated stage {stage} has rate {rate} <= 1/2")]
    InfiniteCost { stage: usize, rate: f64 },
    #[error("scenario budget of {budget} paths exceeded{context}")]
    CostGuardExceeded { budget: u64, context: String },
    #[error("sampled level {level} exceeds the safety cap of {cap}")]
    LevelCapExceeded { level: u64, cap: u32 },
    #[error("missing constant: {0}")]
    MissingConstant(String),
    #[error("empty rate window at stage {stage}: rho = {rho} must exceed {bound}")]
    EmptyWindow { stage: usize, rho: f64, bound: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("matrix R + B'PB is singular at stage {stage}")]
    SingularQaa { stage: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<MccoError>,
    },
}

impl MccoError {
    /// Wraps the error with a location such as a tree index or iteration.
    pub fn context(self, context: impl Into<String>) -> Self {
        MccoError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &MccoError {
        match self {
            MccoError::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors that stem from configuration or validation.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self.root(),
            MccoError::InfiniteCost { .. }
                | MccoError::CostGuardExceeded { .. }
                | MccoError::LevelCapExceeded { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, MccoError>;
