use homog_uc::cell::correctors::compute_correctors;
use homog_uc::cell::field::{Builtin, CoefficientField};
use homog_uc::polyalg::norms::{l2_norm_ellipsoid_avg, Ellipsoid};
use homog_uc::polyalg::polynomial::Polynomial;
use homog_uc::verify::quadrature::PolynomialOnLattice;
use homog_uc::verify::study::{
    fit_slope, run_scaling_study, three_ellipsoid_ratio, three_ellipsoid_ratio_poly, ScalingConfig,
};
use homog_uc::verify::{norm_on_ellipsoid, LatticeQuadrature};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn diag(a: f64, b: f64) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![a, b]))
}

#[test]
fn ellipse_area_by_quadrature() {
    // ‖1‖²_{L²(E_1)} = 2π for ā = diag(4, 1)
    let e = Ellipsoid::new(diag(4.0, 1.0), 1.0).unwrap();
    let q = norm_on_ellipsoid(&|_| 1.0, &e, 256).unwrap();
    assert!((q.value - 1.0).abs() <= q.error.max(1e-3));
    assert!((q.sq - 2.0 * std::f64::consts::PI).abs() < 1e-2);
}

#[test]
fn quadrature_agrees_with_the_closed_form() {
    let p = Polynomial::<f64>::var(2, 0).mul(&Polynomial::var(2, 1));
    let abar = diag(4.0 / 3.0, 1.5);
    let e = Ellipsoid::new(abar.clone(), 12.0).unwrap();
    let exact = l2_norm_ellipsoid_avg(&p, &e).unwrap();
    let quad = LatticeQuadrature::new(abar, 16, 2).unwrap();
    let got = quad
        .norm(&PolynomialOnLattice { p: &p, n: 16 }, 12.0)
        .unwrap();
    assert!(
        (got.value - exact).abs() <= 4.0 * got.error.max(1e-12 * exact),
        "{} vs {exact}",
        got.value
    );
}

#[test]
fn lattice_and_closed_form_ratios_agree() {
    let p =
        &Polynomial::<f64>::var(2, 0).mul(&Polynomial::var(2, 0)) - &Polynomial::constant(2, 0.5);
    let abar = diag(1.0, 1.0);
    let quad = LatticeQuadrature::new(abar.clone(), 16, 2).unwrap();
    let lattice =
        three_ellipsoid_ratio(&quad, &PolynomialOnLattice { p: &p, n: 16 }, 32.0, 0.5).unwrap();
    let exact = three_ellipsoid_ratio_poly(&p, 32.0, 0.5, &abar).unwrap();
    assert!((lattice.three_ratio - exact.three_ratio).abs() <= 4.0 * lattice.quad_err.max(1e-12));
}

#[test]
fn quadrature_refuses_coarse_lattices() {
    assert!(LatticeQuadrature::new(diag(1.0, 1.0), 4, 2).is_err());
    let e = Ellipsoid::new(diag(1.0, 1.0), 1.0).unwrap();
    assert!(norm_on_ellipsoid(&|_| 1.0, &e, 6).is_err());
}

#[test]
fn study_on_a_laminate_is_reproducible_and_contract_clean() {
    let f = CoefficientField::builtin(&Builtin::Laminate { a: 1.0, b: 2.0 }, 2, 8).unwrap();
    let t = compute_correctors(&f, 4, 1e-11).unwrap();
    let cfg = ScalingConfig {
        theta: 0.5,
        m_list: vec![2, 4],
        r_list: vec![16.0, 32.0, 64.0],
        seeds_per_degree: 1,
        quadrature_n: Some(8),
        rng_seed: 11,
    };
    let a = run_scaling_study(&cfg, &t, false).unwrap();
    let b = run_scaling_study(&cfg, &t, false).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.summary_json(), b.summary_json());
    assert!(a.flags.a_harmonic);
    assert!(a
        .rows
        .iter()
        .all(|r| r.ratios.norm_inner > 0.0 && r.ratios.doubling_ratio > 1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn homogeneous_polynomials_have_unit_three_ratio(
        c in prop::collection::vec(-1.0f64..1.0, 4),
        r in 1.0f64..100.0,
        theta in 0.1f64..0.5,
    ) {
        // ψ = p ∈ ℙ_3^* with ā = I: every normalized norm scales like r³
        let p = Polynomial::from_terms(
            2,
            homog_uc::polyalg::multi_index::MultiIndex::all_of_order(2, 3).into_iter().zip(c),
        ).unwrap();
        prop_assume!(!p.is_zero());
        let m = three_ellipsoid_ratio_poly(&p, r, theta, &diag(1.0, 1.0)).unwrap();
        prop_assert!((m.three_ratio - 1.0).abs() < 1e-10);
        prop_assert!((m.doubling_ratio - theta.powi(-3)).abs() < 1e-9 * theta.powi(-3));
    }

    #[test]
    fn slope_fit_recovers_power_laws(k in -3.0f64..3.0, c in 0.1f64..10.0) {
        let r: Vec<f64> = (0..6).map(|i| 64.0 * 2f64.powi(i)).collect();
        let x: Vec<f64> = r.iter().map(|r| r.ln()).collect();
        let y: Vec<f64> = r.iter().map(|r| (c * r.powf(k)).ln()).collect();
        let s = fit_slope(&x, &y).unwrap();
        prop_assert!((s - k).abs() < 1e-10);
    }
}
