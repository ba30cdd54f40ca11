//! Periodic cell problems: correctors `φ_m`, homogenized tensors `ā_m`, and
//! the energy identities relating them.

pub mod correctors;
pub mod field;
pub mod grid;
pub mod identities;
pub mod io;
pub mod operator;
pub mod solver;

pub use correctors::{compute_correctors, homogenized_matrix, CorrectorTable};
pub use field::{validate_coefficients, Builtin, CoefficientField, ValidationReport};
pub use grid::{Grid, GridFunction};
pub use identities::{check_identities, IdentityReport};
pub use solver::{solve_periodic, PeriodicSource};
