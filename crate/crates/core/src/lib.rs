//! Higher-order periodic homogenization: correctors, homogenized tensors,
//! 𝒜-harmonic and heterogeneous polynomials, and scale-resolved
//! doubling / three-ellipsoid measurements.

pub mod cell;
pub mod error;
pub mod homogop;
pub mod polyalg;
pub mod verify;

pub use error::{Error, Result};
