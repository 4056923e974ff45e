use thiserror::Error;

/// Errors shared by all numerical modules.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The Legendre derivative recurrences divide by x^2 - 1 and cannot be
    /// evaluated within `tol_edge` of the endpoints.
    #[error("singular argument: |x| = {x} is within {tol} of 1")]
    SingularArgument { x: f64, tol: f64 },

    /// The gradient covariance is not positive definite at this (l, phi),
    /// so conditional quantities are undefined.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// A covariance matrix failed the positive-semidefiniteness check.
    #[error("covariance not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPositiveSemidefinite { min_eig: f64 },

    /// Adaptive quadrature stopped short of the requested tolerance.
    #[error("quadrature failure: achieved {achieved:.3e}, requested {requested:.3e}")]
    QuadratureFailure { achieved: f64, requested: f64 },

    /// A point is too close to a coordinate pole for the polar frame.
    #[error("pole proximity: sin(theta) = {sin_theta:.3e} below guard {guard:.3e}")]
    PoleProximity { sin_theta: f64, guard: f64 },

    /// An exact structural invariant (Morse relation, Euler characteristic)
    /// failed, signalling missed or spurious critical points.
    #[error("integrity violation: {0}")]
    Integrity(String),
}

pub type Result<T> = std::result::Result<T, Error>;
