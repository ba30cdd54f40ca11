//! Exact polynomial and symmetric-tensor algebra.

pub mod harmonic;
pub mod json;
pub mod multi_index;
pub mod norms;
pub mod polynomial;
pub mod scalar;
pub mod tensor;

pub use harmonic::{apply_s, harmonic_decompose, harmonic_dim, harmonic_dim_homogeneous};
pub use multi_index::MultiIndex;
pub use norms::{l2_norm_ball, l2_norm_ellipsoid, l2_sq_inner_ball, Ellipsoid};
pub use polynomial::{poly_inner, Polynomial};
pub use scalar::Scalar;
pub use tensor::SymTensor;

/// Exact rational coefficients.
pub type Rational = num_rational::BigRational;
