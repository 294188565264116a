use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("graph induced by the rate matrix is disconnected: state {0} is unreachable from state 1")]
    DisconnectedGraph(usize),

    #[error("detailed balance fails on edge ({i}, {j}): relative defect {defect:.3e}")]
    DetailedBalanceViolation { i: usize, j: usize, defect: f64 },

    #[error("stationary probability of state {index} is {value:.3e}, not strictly positive")]
    DegenerateStationary { index: usize, value: f64 },

    #[error("vertex {vertex} is not an endpoint of edge ({i}, {j})")]
    UnsupportedVertex { i: usize, j: usize, vertex: usize },

    #[error("invalid chain definition: {0}")]
    InvalidChain(String),

    #[error("component {index} of the point is {value:.3e}, at or beyond the simplex boundary")]
    BoundaryPoint { index: usize, value: f64 },

    #[error("point does not sum to one (sum = {0:.17})")]
    NotNormalized(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("convex generator is not strictly convex at {0:.6e}")]
    NonconvexF(f64),

    #[error("mobility model has no associated divergence")]
    NoDivergenceDefined,

    #[error("invalid mobility parameter: {0}")]
    InvalidParameter(String),

    #[error("Onsager matrix is near singular: {0} eigenvalues below the kernel threshold")]
    NearSingular(usize),

    #[error("path left the simplex interior at t = {0:.6e}")]
    StepLeavesSimplex(f64),

    #[error("boundary value solver did not converge (residual {0:.3e})")]
    BvpNoConvergence(f64),

    #[error("tangent plane is degenerate (Gram determinant {0:.3e})")]
    DegeneratePlane(f64),

    #[error("closed form is singular at equal components {0} and {1}")]
    EqualComponents(usize, usize),

    #[error("chain does not have the three-state lattice structure: {0}")]
    NotLattice(String),
}

impl Error {
    /// Variant name, used by the command-line front end when reporting failures.
    pub fn name(&self) -> &'static str {
        match self {
            Error::DisconnectedGraph(_) => "DisconnectedGraph",
            Error::DetailedBalanceViolation { .. } => "DetailedBalanceViolation",
            Error::DegenerateStationary { .. } => "DegenerateStationary",
            Error::UnsupportedVertex { .. } => "UnsupportedVertex",
            Error::InvalidChain(_) => "InvalidChain",
            Error::BoundaryPoint { .. } => "BoundaryPoint",
            Error::NotNormalized(_) => "NotNormalized",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonconvexF(_) => "NonconvexF",
            Error::NoDivergenceDefined => "NoDivergenceDefined",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::NearSingular(_) => "NearSingular",
            Error::StepLeavesSimplex(_) => "StepLeavesSimplex",
            Error::BvpNoConvergence(_) => "BvpNoConvergence",
            Error::DegeneratePlane(_) => "DegeneratePlane",
            Error::EqualComponents(..) => "EqualComponents",
            Error::NotLattice(_) => "NotLattice",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
