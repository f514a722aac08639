//! The T-stage problem abstraction: dimensions, conditional samplers,
//! integrands with Jacobians and the feasible set.
//!
//! Stage `t` (1-based) owns a sampler for ξ_t given the history ξ_1..ξ_{t-1},
//! an integrand `f_t : R^{m_t} x R^{d_t} -> R^{d_{t-1}}` and optionally its
//! transposed Jacobian, a `d_t x d_{t-1}` matrix.

use crate::error::{MccoError, Result};
use crate::randomness::RngStream;
use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::sync::Arc;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Draws ξ_t given the history ξ_1..ξ_{t-1}.
pub type SamplerFn = Arc<dyn Fn(&[Vector], &mut RngStream) -> Vector + Send + Sync>;
/// Evaluates f_t(ξ_t, x_t).
pub type IntegrandFn = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;
/// Evaluates the transposed Jacobian of f_t with respect to x_t.
pub type JacobianFn = Arc<dyn Fn(&Vector, &Vector) -> Matrix + Send + Sync>;
/// Custom Euclidean projection.
pub type ProjectorFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// Sequence of stage observations along one tree path.
pub type SamplePath = Vec<Vector>;

/// Feasible set of the decision vector.
#[derive(Clone)]
pub enum FeasibleSet {
    Box { lower: Vector, upper: Vector },
    Custom { dim: usize, projector: ProjectorFn },
}

impl fmt::Debug for FeasibleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeasibleSet::Box { lower, upper } => f
                .debug_struct("Box")
                .field("lower", &lower.as_slice())
                .field("upper", &upper.as_slice())
                .finish(),
            FeasibleSet::Custom { dim, .. } => f.debug_struct("Custom").field("dim", dim).finish(),
        }
    }
}

impl FeasibleSet {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(MccoError::InvalidParams(
                "box bounds must have equal length and lower <= upper".into(),
            ));
        }
        Ok(FeasibleSet::Box {
            lower: Vector::from_vec(lower),
            upper: Vector::from_vec(upper),
        })
    }

    /// The whole space R^dim.
    pub fn unbounded(dim: usize) -> Self {
        FeasibleSet::Box {
            lower: Vector::from_element(dim, f64::NEG_INFINITY),
            upper: Vector::from_element(dim, f64::INFINITY),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Box { lower, .. } => lower.len(),
            FeasibleSet::Custom { dim, .. } => *dim,
        }
    }

    pub fn project(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.dim() {
            return Err(MccoError::DimensionMismatch {
                stage: 0,
                detail: format!("point has length {}, set has dimension {}", x.len(), self.dim()),
            });
        }
        Ok(match self {
            FeasibleSet::Box { lower, upper } => {
                Vector::from_fn(x.len(), |i, _| x[i].max(lower[i]).min(upper[i]))
            }
            FeasibleSet::Custom { projector, .. } => projector(x),
        })
    }

    pub fn contains(&self, x: &Vector) -> bool {
        match self {
            FeasibleSet::Box { lower, upper } => {
                x.len() == lower.len()
                    && (0..x.len()).all(|i| x[i] >= lower[i] && x[i] <= upper[i])
            }
            FeasibleSet::Custom { projector, dim } => {
                x.len() == *dim && (projector(x) - x).norm() <= 1e-12 * (1.0 + x.norm())
            }
        }
    }

    /// Euclidean diameter of a box; infinite for unbounded or custom sets.
    pub fn diameter(&self) -> f64 {
        match self {
            FeasibleSet::Box { lower, upper } => (upper - lower).norm(),
            FeasibleSet::Custom { .. } => f64::INFINITY,
        }
    }
}

#[derive(Clone, Default)]
struct StageFns {
    sampler: Option<SamplerFn>,
    integrand: Option<IntegrandFn>,
    jacobian: Option<JacobianFn>,
}

/// A T-stage nested conditional-expectation problem.
#[derive(Clone)]
pub struct MccoProblem {
    name: String,
    dims: Vec<usize>,
    noise_dims: Vec<usize>,
    stages: Vec<StageFns>,
    feasible: FeasibleSet,
}

impl fmt::Debug for MccoProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MccoProblem")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("noise_dims", &self.noise_dims)
            .field("differentiable", &self.is_differentiable())
            .finish()
    }
}

/// Incremental constructor for [`MccoProblem`]; `build` validates.
pub struct ProblemBuilder {
    problem: MccoProblem,
}

impl ProblemBuilder {
    /// `dims` is d_0..d_T, `noise_dims` is m_1..m_T.
    pub fn new(name: impl Into<String>, dims: Vec<usize>, noise_dims: Vec<usize>) -> Self {
        let t = noise_dims.len();
        let d = dims.last().copied().unwrap_or(0);
        ProblemBuilder {
            problem: MccoProblem {
                name: name.into(),
                dims,
                noise_dims,
                stages: vec![StageFns::default(); t],
                feasible: FeasibleSet::unbounded(d),
            },
        }
    }

    fn slot(&mut self, t: usize) -> &mut StageFns {
        assert!(t >= 1 && t <= self.problem.stages.len(), "stage {t} out of range");
        &mut self.problem.stages[t - 1]
    }

    pub fn sampler(
        mut self,
        t: usize,
        f: impl Fn(&[Vector], &mut RngStream) -> Vector + Send + Sync + 'static,
    ) -> Self {
        self.slot(t).sampler = Some(Arc::new(f));
        self
    }

    pub fn integrand(
        mut self,
        t: usize,
        f: impl Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        self.slot(t).integrand = Some(Arc::new(f));
        self
    }

    pub fn jacobian(
        mut self,
        t: usize,
        f: impl Fn(&Vector, &Vector) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        self.slot(t).jacobian = Some(Arc::new(f));
        self
    }

    pub fn feasible(mut self, set: FeasibleSet) -> Self {
        self.problem.feasible = set;
        self
    }

    pub fn build(self) -> Result<MccoProblem> {
        self.problem.validate()?;
        Ok(self.problem)
    }
}

impl MccoProblem {
    pub(crate) fn rename(&mut self, name: &str) {
        self.name = name.to_string();
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of stages T.
    pub fn stages(&self) -> usize {
        self.stages.len()
    }

    /// d_0..d_T.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// m_1..m_T.
    pub fn noise_dims(&self) -> &[usize] {
        &self.noise_dims
    }

    /// Decision dimension d = d_T.
    pub fn decision_dim(&self) -> usize {
        *self.dims.last().unwrap_or(&0)
    }

    pub fn feasible_set(&self) -> &FeasibleSet {
        &self.feasible
    }

    pub fn is_differentiable(&self) -> bool {
        self.stages.iter().all(|s| s.jacobian.is_some())
    }

    /// Checks d_0 = 1, the dimension chain and that every evaluator exists.
    /// Evaluators are probed once on a fixed stream to confirm output shapes.
    pub fn validate(&self) -> Result<()> {
        let t_count = self.stages.len();
        if t_count == 0 {
            return Err(MccoError::MissingStage {
                stage: 1,
                what: "definition (T must be at least 1)".into(),
            });
        }
        if self.dims.len() != t_count + 1 {
            let stage = self.dims.len().min(t_count);
            return Err(MccoError::DimensionMismatch {
                stage,
                detail: format!(
                    "expected {} argument dimensions d_0..d_T, got {}",
                    t_count + 1,
                    self.dims.len()
                ),
            });
        }
        if self.dims[0] != 1 {
            return Err(MccoError::DimensionMismatch {
                stage: 0,
                detail: format!("d_0 must be 1, got {}", self.dims[0]),
            });
        }
        if let Some(t) = self.dims.iter().position(|&d| d == 0) {
            return Err(MccoError::DimensionMismatch {
                stage: t,
                detail: "dimension must be positive".into(),
            });
        }
        if self.feasible.dim() != self.decision_dim() {
            return Err(MccoError::DimensionMismatch {
                stage: t_count,
                detail: format!(
                    "feasible set has dimension {}, decision has {}",
                    self.feasible.dim(),
                    self.decision_dim()
                ),
            });
        }
        for (i, s) in self.stages.iter().enumerate() {
            let t = i + 1;
            if s.sampler.is_none() {
                return Err(MccoError::MissingStage { stage: t, what: "sampler".into() });
            }
            if s.integrand.is_none() {
                return Err(MccoError::MissingStage { stage: t, what: "integrand".into() });
            }
        }
        let mut stream = RngStream::new(0x5eed).derive(u64::MAX);
        let mut path: SamplePath = Vec::with_capacity(t_count);
        for t in 1..=t_count {
            let xi = self.sample(t, &path, &mut stream);
            if xi.len() != self.noise_dims[t - 1] {
                return Err(MccoError::DimensionMismatch {
                    stage: t,
                    detail: format!(
                        "sampler returned length {}, declared {}",
                        xi.len(),
                        self.noise_dims[t - 1]
                    ),
                });
            }
            let x = Vector::from_element(self.dims[t], 1.0);
            let out = self.f(t, &xi, &x);
            if out.len() != self.dims[t - 1] {
                return Err(MccoError::DimensionMismatch {
                    stage: t,
                    detail: format!(
                        "integrand returned length {}, expected d_{} = {}",
                        out.len(),
                        t - 1,
                        self.dims[t - 1]
                    ),
                });
            }
            if let Some(jac) = &self.stages[t - 1].jacobian {
                let j = jac(&xi, &x);
                if j.shape() != (self.dims[t], self.dims[t - 1]) {
                    return Err(MccoError::DimensionMismatch {
                        stage: t,
                        detail: format!(
                            "Jacobian has shape {:?}, expected ({}, {})",
                            j.shape(),
                            self.dims[t],
                            self.dims[t - 1]
                        ),
                    });
                }
            }
            path.push(xi);
        }
        Ok(())
    }

    /// Validation plus the requirement that every stage has a Jacobian.
    pub fn validate_for_gradient(&self) -> Result<()> {
        self.validate()?;
        match self.stages.iter().position(|s| s.jacobian.is_none()) {
            Some(i) => Err(MccoError::NotDifferentiable { stage: i + 1 }),
            None => Ok(()),
        }
    }

    fn check_stage(&self, t: usize, xi: &Vector, x: &Vector) -> Result<()> {
        if t == 0 || t > self.stages.len() {
            return Err(MccoError::DimensionMismatch {
                stage: t,
                detail: format!("stage must lie in 1..={}", self.stages.len()),
            });
        }
        if xi.len() != self.noise_dims[t - 1] || x.len() != self.dims[t] {
            return Err(MccoError::DimensionMismatch {
                stage: t,
                detail: format!(
                    "got noise {} / argument {}, declared {} / {}",
                    xi.len(),
                    x.len(),
                    self.noise_dims[t - 1],
                    self.dims[t]
                ),
            });
        }
        Ok(())
    }

    /// f_t(ξ_t, x_t) with shape checks.
    pub fn evaluate_integrand(&self, t: usize, xi: &Vector, x: &Vector) -> Result<Vector> {
        self.check_stage(t, xi, x)?;
        Ok(self.f(t, xi, x))
    }

    /// Transposed Jacobian of f_t at (ξ_t, x_t).
    pub fn integrand_jacobian(&self, t: usize, xi: &Vector, x: &Vector) -> Result<Matrix> {
        self.check_stage(t, xi, x)?;
        match &self.stages[t - 1].jacobian {
            Some(j) => Ok(j(xi, x)),
            None => Err(MccoError::NotDifferentiable { stage: t }),
        }
    }

    pub fn project(&self, x: &Vector) -> Result<Vector> {
        self.feasible.project(x)
    }

    /// Draws ξ_t given the history (its length must be t - 1).
    pub fn sample(&self, t: usize, history: &[Vector], stream: &mut RngStream) -> Vector {
        debug_assert_eq!(history.len(), t - 1);
        (self.stages[t - 1].sampler.as_ref().expect("validated sampler"))(history, stream)
    }

    #[inline]
    pub(crate) fn f(&self, t: usize, xi: &Vector, x: &Vector) -> Vector {
        (self.stages[t - 1].integrand.as_ref().expect("validated integrand"))(xi, x)
    }

    #[inline]
    pub(crate) fn jac(&self, t: usize, xi: &Vector, x: &Vector) -> Matrix {
        (self.stages[t - 1].jacobian.as_ref().expect("validated Jacobian"))(xi, x)
    }
}

/// Scalar vector helper.
pub fn scalar(v: f64) -> Vector {
    Vector::from_element(1, v)
}
