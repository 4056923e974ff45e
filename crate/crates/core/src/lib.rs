//! Critical-point statistics of random Gaussian spherical harmonics.
//!
//! The crate splits into five layers:
//!
//! * [`legendre`] - exact Legendre polynomials with four derivatives and
//!   their high-degree Bessel-uniform asymptotics;
//! * [`covariance`] - the covariance objects of the two-point Kac-Rice
//!   computation along an equatorial geodesic: ingredient functions,
//!   gradient covariance, conditional Hessian covariance and its
//!   perturbation vector;
//! * [`gaussmoments`] - closed-form Gaussian moment constants, the
//!   derivatives of the conditional expectation at zero perturbation, the
//!   variance law and the value-restricted densities, each with an
//!   independent quadrature oracle;
//! * [`kacrice`] - the Monte Carlo / quadrature engine for the two-point
//!   correlation kernel, the Taylor term integrals and the long-range
//!   variance integral;
//! * [`field`] - sampling of random spherical harmonics, pointwise jets,
//!   critical point location and classification, and epsilon-nets.

pub mod covariance;
pub mod error;
pub mod field;
pub mod gaussmoments;
pub mod kacrice;
pub mod legendre;
pub mod quad;

pub use error::{Error, Result};
