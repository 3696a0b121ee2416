//! Multibang optimal control of the 1D Poisson equation.
//!
//! The library solves tracking-type optimal control problems whose control is
//! driven toward a prescribed finite set of values `u_1 < … < u_d` by a convex
//! piecewise-affine penalty, with an additional Moreau-Yosida term `γ/2 ‖u‖²`
//! that makes the optimality system solvable by a primal active-set method
//! (equivalently, a semismooth Newton method).
//!
//! Modules:
//! - [`piecewise`]: piecewise polynomials on [0,1], generic over the
//!   coefficient scalar; exact rational arithmetic carries the constructed
//!   benchmark solutions, the `f64` instantiation does the number crunching.
//! - [`penalty`]: the multibang integrand `g`, its integral functional `G`,
//!   adjoint-value classification, and the resolvent `H_γ`.
//! - [`banded`] / [`fem`]: banded LU and P1 finite elements on a uniform mesh
//!   of (0,1) with exact quadrature against piecewise polynomials.
//! - [`solver`]: the primal active-set iteration on the coupled KKT system and
//!   the equivalent semismooth Newton step.
//! - [`experiments`]: exact construction of the two shipped benchmark
//!   problems and the singular-set regularity diagnostics.
//! - [`harness`]: γ/h sweeps, numerical convergence orders, CSV emission.

// numeric kernels index band storage and mesh arrays directly, and
// NaN-rejecting comparisons are deliberately written in negated form
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod banded;
pub mod experiments;
pub mod fem;
pub mod harness;
pub mod penalty;
pub mod piecewise;
pub mod scalar;
pub mod solver;

pub use piecewise::{LevelSetItem, PiecewisePolynomial};
pub use scalar::Real;

/// Exact rational scalar: arbitrary-precision, always reduced, denominator > 0.
pub type Rational = num_rational::BigRational;

/// Piecewise polynomial with exact rational breakpoints and coefficients.
pub type RationalPiecewise = PiecewisePolynomial<Rational>;

/// Piecewise polynomial in double precision (the evaluation form).
pub type Piecewise64 = PiecewisePolynomial<f64>;

/// Multibang configuration at double precision.
pub type MultibangConfig64 = penalty::MultibangConfig<f64>;

/// Problem instance at double precision.
pub type ProblemInstance64 = solver::ProblemInstance<f64>;

/// Convenience constructor for exact rationals from a signed fraction.
pub fn rational(numerator: i64, denominator: i64) -> Rational {
    Rational::new(
        num_bigint::BigInt::from(numerator),
        num_bigint::BigInt::from(denominator),
    )
}

/// Library error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Structurally invalid argument (violated precondition).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A linear system that must be regular was singular.
    #[error("singular system: {0}")]
    Singular(String),
    /// A diagnostic computation could not produce a result.
    #[error("diagnostic failure: {0}")]
    Diagnostic(String),
    /// Filesystem failure, annotated with the offending path.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
