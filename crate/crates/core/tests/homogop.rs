use homog_uc::cell::correctors::compute_correctors;
use homog_uc::cell::field::{Builtin, CoefficientField};
use homog_uc::homogop::construct::{
    a_harmonic_basis, a_harmonic_defect, a_harmonic_dim, build_a_harmonic, build_a_harmonic_exact,
    polynomial_rank, random_seed,
};
use homog_uc::homogop::hetero::build_heterogeneous;
use homog_uc::homogop::operator::{
    apply_a, operator_to_json, parse_operator, random_synthetic_operator, HomogenizedOperator,
};
use homog_uc::polyalg::harmonic::harmonic_basis_homogeneous;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn laminate_operator_builds_a_harmonic_polynomials() {
    // ā = diag(4/3, 3/2) is not the identity, so this exercises the conjugated path.
    let f = CoefficientField::builtin(&Builtin::Laminate { a: 1.0, b: 2.0 }, 2, 16).unwrap();
    let t = compute_correctors(&f, 6, 1e-11).unwrap();
    let op = HomogenizedOperator::from_table(&t).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for m in 0..=6 {
        let p = random_seed(&op.abar_matrix(), m, &mut rng).unwrap();
        let q = build_a_harmonic(&op, &p).unwrap();
        assert_eq!(q.degree(), Some(m));
        // q − p has degree ≤ m − 2, up to rounding in the conjugated path
        let scale = p.terms().map(|(_, c)| c.abs()).fold(0.0, f64::max);
        let diff = &q.q - &p;
        for k in m.saturating_sub(1)..=m {
            let top = diff.homogeneous_part(k);
            assert!(
                top.terms().all(|(_, c)| c.abs() <= 1e-12 * scale),
                "m = {m}"
            );
        }
        assert!(a_harmonic_defect(&op, &q.q).unwrap() < 1e-9, "m = {m}");
    }
}

#[test]
fn a_harmonic_space_has_the_harmonic_dimension() {
    let f = CoefficientField::builtin(&Builtin::Checkerboard { a: 1.0, b: 3.0 }, 2, 8).unwrap();
    let t = compute_correctors(&f, 4, 1e-11).unwrap();
    let op = HomogenizedOperator::from_table(&t).unwrap();
    for m in 0..=4 {
        let basis: Vec<_> = a_harmonic_basis(&op, m)
            .unwrap()
            .into_iter()
            .map(|q| q.q)
            .collect();
        assert_eq!(polynomial_rank(&basis, 1e-10), a_harmonic_dim(2, m));
    }
}

#[test]
fn operator_json_round_trips() {
    let op = random_synthetic_operator(3, 6, &mut ChaCha8Rng::seed_from_u64(1))
        .unwrap()
        .to_f64();
    let back = parse_operator(&operator_to_json(&op), "op.json").unwrap();
    assert_eq!(back.max_order(), op.max_order());
    for (a, b) in back.tensors().zip(op.tensors()) {
        assert_eq!(a, b);
    }
}

#[test]
fn constant_coefficients_give_psi_equal_to_q() {
    let f = CoefficientField::builtin(
        &Builtin::Constant {
            matrix: vec![1.0, 0.0, 0.0, 1.0],
        },
        2,
        8,
    )
    .unwrap();
    let t = compute_correctors(&f, 3, 1e-12).unwrap();
    let op = HomogenizedOperator::from_table(&t).unwrap();
    let p = random_seed(&op.abar_matrix(), 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let q = build_a_harmonic(&op, &p).unwrap();
    let psi = build_heterogeneous(&q, &t).unwrap();
    for x in [[0.1, 0.7], [3.25, -1.5], [10.0, 4.0]] {
        let want = q.q.eval_f64(&x);
        assert!((psi.value(&x) - want).abs() <= 1e-10 * want.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn exact_construction_is_a_harmonic(seed in any::<u64>(), d in 2usize..=3, n in 0u32..=6) {
        let op = random_synthetic_operator(d, 6, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for h in harmonic_basis_homogeneous(d, n) {
            let q = build_a_harmonic_exact(&op, &h).unwrap();
            prop_assert!(apply_a(&op, &q.q).unwrap().is_zero());
            prop_assert_eq!(q.q.homogeneous_part(n), h.clone());
        }
    }
}
