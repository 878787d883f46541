//! Concentration functions of weighted sums of i.i.d. random variables,
//! the approximating progressions and least common denominators that bound
//! them, and evaluators for the resulting inequalities.

// Guards of the form `!(x > 0.0)` must also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod concentration;
pub mod distributions;
pub mod error;
pub mod lcd;
pub mod progressions;
pub mod quadrature;
pub mod rng;
pub mod weights;

pub use error::{Error, Result};
pub use rng::RngSeed;
pub use weights::WeightVector;
