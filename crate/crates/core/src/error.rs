use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },

    #[error("unbound variable `{0}`")]
    UnboundVariable(String),

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("metric is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("metric is singular at the requested point")]
    SingularMetric,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate plane (gram determinant {0:e})")]
    DegeneratePlane(f64),

    #[error("vector is not unit length (norm deviation {0:e})")]
    NotUnit(f64),

    #[error("vector is not normal to the immersion (tangential residual {0:e})")]
    NotNormal(f64),

    #[error("vector is not aligned with a single ambient factor")]
    NotFactorAligned,

    #[error("jacobian is rank deficient")]
    RankDeficient,

    #[error("immersion is not isometric (residual {0:e})")]
    IsometryViolation(f64),

    #[error("warping function `{function}` is not positive at {point:?} (value {value})")]
    NonPositiveWarp { function: String, point: Vec<f64>, value: f64 },

    #[error("tangent vectors have different base points")]
    MismatchedBasePoint,

    #[error("space-form constant c is not declared for this scenario")]
    SpaceFormUndeclared,

    #[error("hypothesis `{tag}` does not hold (residual {residual:e})")]
    Hypothesis { tag: String, residual: f64 },

    #[error("invalid scenario: {0}")]
    Invalid(String),

    #[error("{section}, line {line}: {message}")]
    Scenario { section: String, line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}
