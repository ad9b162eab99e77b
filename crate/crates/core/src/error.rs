use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the analysis and optimization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({x}, {y}) lies outside the mesh")]
    PointOutsideDomain { x: f64, y: f64 },

    #[error("non-positive deformation Jacobian {jacobian:e} in element {element}")]
    NonPositiveJacobian { element: usize, jacobian: f64 },

    #[error("tangent stiffness is singular (pivot {pivot:e} at dof {dof})")]
    SingularTangent { dof: usize, pivot: f64 },

    #[error("input-point response matrix is singular (det {det:e})")]
    Singular2x2 { det: f64 },

    #[error("reduced adjoint system is singular (det {det:e})")]
    SingularReducedSystem { det: f64 },

    #[error("corrector did not converge in {iterations} iterations (residual {residual:e} N)")]
    MaxIterationsExceeded { iterations: usize, residual: f64 },

    #[error("equilibrium path failed at input fraction {fraction}: {reason}")]
    PathFailed { fraction: f64, reason: String },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("element size {h} m is too large to resolve {feature}")]
    FeatureTooSmall { feature: String, h: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh file line {line}: {message}")]
    MeshFormat { line: usize, message: String },

    #[error("unknown problem family `{0}`")]
    UnknownFamily(String),

    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),

    #[error("missing equilibrium state for load case {case}, step {step}")]
    MissingPathStep { case: usize, step: usize },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config error for `{key}`: {reason}")]
    ConfigValidation { key: String, reason: String },

    #[error("optimization aborted: {0}")]
    OptimizationAborted(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable variant name for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::PointOutsideDomain { .. } => "PointOutsideDomain",
            Error::NonPositiveJacobian { .. } => "NonPositiveJacobian",
            Error::SingularTangent { .. } => "SingularTangent",
            Error::Singular2x2 { .. } => "Singular2x2",
            Error::SingularReducedSystem { .. } => "SingularReducedSystem",
            Error::MaxIterationsExceeded { .. } => "MaxIterationsExceeded",
            Error::PathFailed { .. } => "PathFailed",
            Error::DegenerateGeometry(_) => "DegenerateGeometry",
            Error::FeatureTooSmall { .. } => "FeatureTooSmall",
            Error::InvalidMesh(_) => "InvalidMesh",
            Error::MeshFormat { .. } => "MeshFormat",
            Error::UnknownFamily(_) => "UnknownFamily",
            Error::UnknownFixture(_) => "UnknownFixture",
            Error::MissingPathStep { .. } => "MissingPathStep",
            Error::InvalidProblem(_) => "InvalidProblem",
            Error::ConfigParse { .. } => "ConfigParse",
            Error::ConfigValidation { .. } => "ConfigValidation",
            Error::OptimizationAborted(_) => "OptimizationAborted",
            Error::Io { .. } => "Io",
            Error::Format(_) => "Format",
        }
    }

    /// Errors after which a smaller displacement step may still succeed.
    pub fn is_recoverable_step_failure(&self) -> bool {
        matches!(
            self,
            Error::NonPositiveJacobian { .. }
                | Error::SingularTangent { .. }
                | Error::Singular2x2 { .. }
                | Error::MaxIterationsExceeded { .. }
        )
    }
}
