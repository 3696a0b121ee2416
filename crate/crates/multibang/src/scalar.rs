//! Scalar abstractions: a floating-point trait for the mesh-based numerics
//! and a coefficient trait for piecewise-polynomial arithmetic.

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Floating-point scalar for finite element and solver computations: f32 or f64.
///
/// Tolerances throughout the crate are stated for f64; the f32 instantiation
/// compiles and runs but is not expected to meet them.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Lift an f64 constant into the generic scalar.
#[inline]
pub fn real<F: Real>(x: f64) -> F {
    F::from_f64(x).expect("f64 constant not representable in scalar type")
}

/// Coefficient scalar for piecewise polynomials: exact rationals or floats.
pub trait Coeff: Num + std::ops::Neg<Output = Self> + PartialOrd + Clone + FromPrimitive + ToPrimitive {}

impl<T> Coeff for T where
    T: Num + std::ops::Neg<Output = T> + PartialOrd + Clone + FromPrimitive + ToPrimitive
{
}
