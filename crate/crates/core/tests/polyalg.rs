use homog_uc::homogop::operator::tensor_avatar;
use homog_uc::polyalg::harmonic::{apply_s, harmonic_decompose, is_harmonic};
use homog_uc::polyalg::json::{
    parse_polynomial_rational, parse_polynomial_real, parse_tensor_rational,
    polynomial_rational_to_json, polynomial_real_to_json, tensor_rational_to_json,
};
use homog_uc::polyalg::multi_index::MultiIndex;
use homog_uc::polyalg::norms::{l2_norm_ball, l2_norm_grad_ball};
use homog_uc::polyalg::polynomial::{poly_inner, poly_norm, Polynomial};
use homog_uc::polyalg::scalar::Scalar;
use homog_uc::polyalg::tensor::SymTensor;
use homog_uc::polyalg::Rational;
use proptest::prelude::*;

fn rational_poly(d: usize, max_deg: u32) -> impl Strategy<Value = Polynomial<Rational>> {
    prop::collection::vec(
        (prop::collection::vec(0..=max_deg, d), -20i64..=20, 1i64..=9),
        0..8,
    )
    .prop_map(move |terms| {
        let mut p = Polynomial::zero(d);
        for (e, num, den) in terms {
            if e.iter().sum::<u32>() <= max_deg {
                p.add_term(MultiIndex::new(e), Rational::ratio(num, den));
            }
        }
        p
    })
}

fn homogeneous_real(d: usize, m: u32) -> impl Strategy<Value = Polynomial<f64>> {
    let n = MultiIndex::all_of_order(d, m).len();
    prop::collection::vec(-1.0f64..1.0, n).prop_map(move |c| {
        Polynomial::from_terms(d, MultiIndex::all_of_order(d, m).into_iter().zip(c)).unwrap()
    })
}

fn dim_and_poly() -> impl Strategy<Value = Polynomial<Rational>> {
    (2usize..=3).prop_flat_map(|d| rational_poly(d, 7))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn s_is_a_right_inverse_of_the_laplacian(p in dim_and_poly()) {
        prop_assert_eq!(apply_s(&p).laplacian(), p);
    }

    #[test]
    fn multiplication_by_r2_is_adjoint_to_the_laplacian(
        (p, q) in (2usize..=3).prop_flat_map(|d| (rational_poly(d, 5), rational_poly(d, 7)))
    ) {
        let lhs = poly_inner(&p.mult_r2(), &q).unwrap();
        let rhs = poly_inner(&p, &q.laplacian()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn decomposition_reassembles_into_harmonic_parts(p in dim_and_poly(), m in 0u32..=7) {
        let top = p.homogeneous_part(m);
        let parts = harmonic_decompose(&top).unwrap();
        let mut sum = Polynomial::zero(p.dim());
        for (k, pk) in parts.iter().enumerate() {
            prop_assert!(is_harmonic(pk));
            sum = &sum + &pk.mult_r2_pow(k as u32);
        }
        prop_assert_eq!(sum, top);
    }

    #[test]
    fn derivatives_are_linear_and_satisfy_the_product_rule(
        (p, q) in (2usize..=3).prop_flat_map(|d| (rational_poly(d, 4), rational_poly(d, 4)))
    ) {
        for i in 0..p.dim() {
            prop_assert_eq!((&p + &q).derivative(i), &p.derivative(i) + &q.derivative(i));
            let lhs = (&p * &q).derivative(i);
            let rhs = &(&p.derivative(i) * &q) + &(&p * &q.derivative(i));
            prop_assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn rational_json_round_trips_exactly(p in dim_and_poly()) {
        let text = polynomial_rational_to_json(&p);
        prop_assert_eq!(parse_polynomial_rational(&text, "p").unwrap(), p);
    }

    #[test]
    fn real_json_round_trips_bitwise(p in (2usize..=3).prop_flat_map(|d| homogeneous_real(d, 4))) {
        let q = parse_polynomial_real(&polynomial_real_to_json(&p), "p").unwrap();
        prop_assert_eq!(q, p);
    }

    #[test]
    fn inversion_bound_holds(p in (2usize..=3, 0u32..=8).prop_flat_map(|(d, m)| homogeneous_real(d, m))) {
        let m = p.degree().unwrap_or(0) as f64;
        let d = p.dim() as f64;
        let bound = poly_norm(&p) / (4.0 * m + 2.0 * d).sqrt();
        prop_assert!(poly_norm(&apply_s(&p)) <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn ball_norms_scale_homogeneously(
        p in (2usize..=3, 0u32..=6).prop_flat_map(|(d, m)| homogeneous_real(d, m)),
        r in 0.5f64..4.0,
    ) {
        // ‖p‖_{L²(B_r)} = r^{m + d/2} ‖p‖_{L²(B_1)} for p ∈ ℙ_m^*
        let m = p.degree().unwrap_or(0) as f64;
        let want = r.powf(m + p.dim() as f64 / 2.0) * l2_norm_ball(&p, 1.0).unwrap();
        let got = l2_norm_ball(&p, r).unwrap();
        prop_assert!((got - want).abs() <= 1e-10 * want.max(1e-300));
    }

    #[test]
    fn markov_holds_from_degree_three(
        p in (2usize..=3, 3u32..=8).prop_flat_map(|(d, m)| homogeneous_real(d, m)),
        r in 0.5f64..4.0,
    ) {
        let m = p.degree().unwrap_or(0) as f64;
        let lhs = l2_norm_grad_ball(&p, r).unwrap();
        prop_assert!(lhs <= m * m / r * l2_norm_ball(&p, r).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn tensor_pairing_with_outer_power_evaluates_the_avatar(
        c in prop::collection::vec(-5i64..=5, 5),
        x in prop::collection::vec(-3i64..=3, 2),
    ) {
        let t = SymTensor::from_entries(
            2,
            4,
            MultiIndex::all_of_order(2, 4).into_iter().zip(c.into_iter().map(Rational::from_i64)),
        ).unwrap();
        let x: Vec<Rational> = x.into_iter().map(Rational::from_i64).collect();
        let lhs = t.pair(&SymTensor::outer_power(&x, 4)).unwrap();
        prop_assert_eq!(lhs, tensor_avatar(&t).eval(&x));
        let back = parse_tensor_rational(&tensor_rational_to_json(&t), "t").unwrap();
        prop_assert_eq!(back, t);
    }
}

#[test]
fn low_degree_markov_counterexample() {
    // p = x₁ on B_1: ‖∇p‖/‖p‖ = √(d+2) > 1 = m²/r
    for d in [2usize, 3] {
        let p = Polynomial::<f64>::var(d, 0);
        let ratio = l2_norm_grad_ball(&p, 1.0).unwrap() / l2_norm_ball(&p, 1.0).unwrap();
        assert!((ratio - ((d + 2) as f64).sqrt()).abs() < 1e-12);
    }
}
