//! The homogenized operator `𝒜`, `𝒜`-harmonic polynomials, and heterogeneous
//! polynomials `ψ = Σ_n ∇^n q : φ_n`.

pub mod construct;
pub mod hetero;
pub mod operator;

pub use construct::{
    a_harmonic_defect, a_harmonic_dim, build_a_harmonic, build_a_harmonic_exact, harmonic_approximation, random_seed,
    AHarmonicPolynomial,
};
pub use hetero::{
    build_heterogeneous, psi_poly_error, residual_psi, HeterogeneousPolynomial, PsiPart,
};
pub use operator::{apply_a, random_synthetic_operator, HomogenizedOperator, Provenance};
