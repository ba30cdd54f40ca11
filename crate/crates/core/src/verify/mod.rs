//! Scale-resolved doubling and three-ellipsoid measurements.

pub mod quadrature;
pub mod study;

pub use quadrature::{norm_on_ellipsoid, LatticeIntegrand, LatticeQuadrature, QuadratureResult};
pub use study::{
    doubling_profile, minimal_scale_probe, run_scaling_study, three_ellipsoid_ratio, PsiCheck,
    ScalingConfig, ScalingReport,
};
