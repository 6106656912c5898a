use thiserror::Error;

/// Failures while loading or querying a lattice polytope.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolytopeError {
    #[error("malformed polytope document: {0}")]
    InvalidDocument(String),
    #[error("facet {normal:?} has right-hand side {rhs}, expected -1 (polytope is not reflexive)")]
    NonReflexive { normal: Vec<i64>, rhs: String },
    #[error("origin is not an interior point (facet {normal:?} has right-hand side {rhs})")]
    OriginNotInterior { normal: Vec<i64>, rhs: String },
    #[error("vertex and facet descriptions disagree: {0}")]
    InconsistentDescription(String),
    #[error("facets must be supplied for dimension {0} (automatic hull is limited to n <= 3)")]
    UnsupportedDimension(usize),
    #[error("barycenter is the origin; the ray through it is undefined")]
    BarycenterAtOrigin,
    #[error("point {0} lies outside the polytope")]
    PointOutsidePolytope(String),
}

/// Failures in the divisor / base-locus computations.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DivisorError {
    #[error("point {0:?} is not a lattice point of the polytope")]
    PointOutsidePolytope(Vec<i64>),
    #[error("face is improper (no active facets); base locus is undefined")]
    ImproperFace,
    #[error("barycenter is the origin (R = 1); no singular limit is predicted")]
    KEExists,
}

/// Failures of the reference-potential routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("tail bound could not be certified: {0}")]
    TailBoundFailure(String),
    #[error("limit weights must be strictly positive and sum to 1: {0}")]
    DegenerateWeights(String),
    #[error("numerical integration is limited to dimension <= 3 (got {0})")]
    UnsupportedDimension(usize),
}

/// Failures of the grid Monge-Ampere solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(
        "Newton iteration did not converge after {iterations} steps (residual {residual:.3e})"
    )]
    NotConverged { iterations: usize, residual: f64 },
    #[error("no damping factor restored positive-definiteness of the discrete Hessian")]
    ConvexityLost,
    #[error("minimizer {x_t:?} lies within two grid steps of the window edge")]
    MinimizerAtBoundary { x_t: Vec<f64> },
    #[error("exponential tail not certified (kappa fit {kappa:.3e} <= 0)")]
    TailNotCertified { kappa: f64 },
    #[error("invalid grid window: {0}")]
    InvalidWindow(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("PDE solves are limited to dimension 1 or 2 (got {0})")]
    UnsupportedDimension(usize),
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
}

/// Crate-level error.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
    #[error(transparent)]
    Divisor(#[from] DivisorError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("fixture mismatch: {0}")]
    Fixture(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
