//! Numerical laboratory for small-ball estimates of random walks on groups.
//!
//! The core is generic over the scalar type: exact combinatorial quantities
//! work over [`Rational`], iterative numerics over `f32`/`f64`. The aliases
//! below fix `f64` for everyday use.

pub mod bounds;
pub mod error;
pub mod group;
pub mod linalg;
pub mod occupation;
pub mod profiles;
pub mod prooflab;
pub mod regularity;
pub mod scalar;
pub mod walk;

pub use error::{Error, Result};
pub use scalar::{Interval, Real, Scalar};

/// Exact rational scalar.
pub type Rational = num_rational::Ratio<i64>;

/// Killed walk distribution in double precision.
pub type Walk = walk::WalkDistribution<f64>;
