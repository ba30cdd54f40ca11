//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Exits 0 regardless of the verdicts so that the rest of `cargo test` still
//! runs; set `HOMOG_UC_ACCEPTANCE_STRICT=1` to exit 1 when any criterion fails.

use std::time::{Duration, Instant};

use homog_uc::cell::correctors::{compute_correctors, homogenized_matrix, CorrectorTable};
use homog_uc::cell::field::{Builtin, CoefficientField};
use homog_uc::cell::identities::check_identities;
use homog_uc::homogop::construct::{build_a_harmonic, build_a_harmonic_exact, random_seed};
use homog_uc::homogop::hetero::{build_heterogeneous, residual_psi};
use homog_uc::homogop::operator::{apply_a, random_synthetic_operator, HomogenizedOperator};
use homog_uc::polyalg::harmonic::{apply_s, harmonic_basis_homogeneous, harmonic_decompose};
use homog_uc::polyalg::multi_index::MultiIndex;
use homog_uc::polyalg::norms::{l2_norm_ball, l2_norm_grad_ball};
use homog_uc::polyalg::polynomial::{poly_inner, poly_norm, Polynomial};
use homog_uc::polyalg::scalar::Scalar;
use homog_uc::polyalg::Rational;
use homog_uc::verify::study::{run_scaling_study, ScalingConfig, ScalingReport, R_SLOPE_BAND};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20240917;
const REL_TOL: f64 = 1e-12;
const NOISE: f64 = 1e-6;

struct Verdict {
    pass: bool,
    lines: Vec<String>,
}

impl Verdict {
    fn new() -> Self {
        Self {
            pass: true,
            lines: Vec::new(),
        }
    }

    fn require(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.lines
            .push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, line: String) {
        self.lines.push(format!("     {line}"));
    }
}

fn criterion(
    n: u32,
    title: &str,
    budget: Option<Duration>,
    passes: &mut Vec<bool>,
    f: impl FnOnce() -> Verdict,
) {
    let start = Instant::now();
    let mut v = f();
    let took = start.elapsed();
    if let Some(b) = budget {
        v.require(
            took < b,
            format!("runtime {:.1} s < {} s", took.as_secs_f64(), b.as_secs()),
        );
    }
    println!(
        "criterion {n}: {} {title} ({:.1} s)",
        if v.pass { "PASS" } else { "FAIL" },
        took.as_secs_f64()
    );
    for l in &v.lines {
        println!("    {l}");
    }
    passes.push(v.pass);
}

fn table(b: Builtin, n: usize, m_max: usize, tol: f64) -> CorrectorTable {
    let f = CoefficientField::builtin(&b, 2, n).expect("builtin field");
    compute_correctors(&f, m_max, tol).expect("corrector solve")
}

fn zero() -> Rational {
    Rational::from_i64(0)
}

fn random_rational(
    d: usize,
    deg: u32,
    homogeneous: bool,
    rng: &mut ChaCha8Rng,
) -> Polynomial<Rational> {
    let mut p = Polynomial::zero(d);
    let low = if homogeneous { deg } else { 0 };
    for m in low..=deg {
        for a in MultiIndex::all_of_order(d, m) {
            if rng.gen_bool(0.6) {
                p.add_term(
                    a,
                    Rational::ratio(rng.gen_range(-12..=12), rng.gen_range(1..=7)),
                );
            }
        }
    }
    // keep the top degree populated; 1/11 cannot cancel a coefficient with denominator ≤ 7
    let mut top = vec![0; d];
    top[0] = deg;
    p.add_term(MultiIndex::new(top), Rational::ratio(1, 11));
    p
}

fn random_f64(d: usize, deg: u32, homogeneous: bool, rng: &mut ChaCha8Rng) -> Polynomial<f64> {
    let mut p = Polynomial::zero(d);
    let low = if homogeneous { deg } else { 0 };
    for m in low..=deg {
        for a in MultiIndex::all_of_order(d, m) {
            p.add_term(a, rng.gen_range(-1.0..1.0));
        }
    }
    p
}

fn exact_algebra() -> Verdict {
    let mut v = Verdict::new();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for d in [2usize, 3] {
        let bases: Vec<Vec<Polynomial<Rational>>> =
            (0..=14).map(|n| harmonic_basis_homogeneous(d, n)).collect();
        let (mut inverse, mut orth, mut adjoint, mut decomp) = (0, 0, 0, 0);
        for m in 0..=12u32 {
            let p = random_rational(d, m, false, &mut rng);
            let s = apply_s(&p);
            if s.laplacian() != p {
                inverse += 1;
            }
            for h in bases.iter().take(m as usize + 3).flatten() {
                if poly_inner(&s, h).expect("same dimension") != zero() {
                    orth += 1;
                }
            }
            let q = random_rational(d, m + 2, false, &mut rng);
            let lhs = poly_inner(&p.mult_r2(), &q).expect("same dimension");
            let rhs = poly_inner(&p, &q.laplacian()).expect("same dimension");
            if lhs != rhs {
                adjoint += 1;
            }
            let top = p.homogeneous_part(m);
            let parts = harmonic_decompose(&top).expect("homogeneous input");
            let lifted: Vec<_> = parts
                .iter()
                .enumerate()
                .map(|(k, pk)| pk.mult_r2_pow(k as u32))
                .collect();
            let mut sum = Polynomial::zero(d);
            for l in &lifted {
                sum = &sum + l;
            }
            let harmonic = parts.iter().all(|pk| pk.laplacian().is_zero());
            let orthogonal = (0..lifted.len()).all(|j| {
                (j + 1..lifted.len())
                    .all(|k| poly_inner(&lifted[j], &lifted[k]).expect("same dimension") == zero())
            });
            if sum != top || !harmonic || !orthogonal {
                decomp += 1;
            }
        }
        v.require(
            inverse == 0,
            format!("d = {d}: ΔSp = p for degrees 0..=12 ({inverse} failures)"),
        );
        v.require(
            orth == 0,
            format!("d = {d}: ⟨Sp, h⟩ = 0 for harmonic h ({orth} failures)"),
        );
        v.require(
            adjoint == 0,
            format!("d = {d}: ⟨|x|²p, q⟩ = ⟨p, Δq⟩ ({adjoint} failures)"),
        );
        v.require(
            decomp == 0,
            format!("d = {d}: harmonic decomposition is orthogonal and exact ({decomp} failures)"),
        );
    }
    v
}

/// Counts violations of `lhs ≤ rhs·(1 + REL_TOL)`, with the worst `lhs/rhs` per degree.
struct BoundTally {
    name: &'static str,
    violations: usize,
    worst: Vec<(u32, f64)>,
}

impl BoundTally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            violations: 0,
            worst: Vec::new(),
        }
    }

    fn record(&mut self, m: u32, lhs: f64, rhs: f64) {
        let q = lhs / rhs;
        if q > 1.0 + REL_TOL {
            self.violations += 1;
        }
        match self.worst.iter_mut().find(|(k, _)| *k == m) {
            Some((_, w)) => *w = w.max(q),
            None => self.worst.push((m, q)),
        }
    }

    fn finish(mut self, v: &mut Verdict) {
        self.worst.sort_by_key(|(m, _)| *m);
        v.require(
            self.violations == 0,
            format!("{}: {} of 200 violate", self.name, self.violations),
        );
        let offenders: Vec<String> = self
            .worst
            .iter()
            .filter(|(_, q)| *q > 1.0 + REL_TOL)
            .map(|(m, q)| format!("m = {m}: max lhs/rhs = {q:.4}"))
            .collect();
        if !offenders.is_empty() {
            v.note(format!("{}: {}", self.name, offenders.join(", ")));
        }
    }
}

fn stated_bounds() -> Verdict {
    let mut v = Verdict::new();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 2);
    let mut inversion = BoundTally::new("‖Sp‖_ℙ ≤ (4m+2d)^(−1/2)‖p‖_ℙ");
    let mut lemma = BoundTally::new("‖Sp‖_L²(B_r) ≤ r²/(m+1)‖p‖_L²(B_r)");
    let mut markov = BoundTally::new("‖∇p‖_L²(B_r) ≤ m²/r‖p‖_L²(B_r)");
    for _ in 0..200 {
        let d = rng.gen_range(2..=3usize);
        let m = rng.gen_range(0..=12u32);
        let p = random_f64(d, m, true, &mut rng);
        let bound = (4.0 * m as f64 + 2.0 * d as f64).sqrt().recip();
        inversion.record(m, poly_norm(&apply_s(&p)), bound * poly_norm(&p));

        let d = rng.gen_range(2..=3usize);
        let m = rng.gen_range(0..=12u32);
        let r = rng.gen_range(0.25..8.0);
        let p = random_f64(d, m, true, &mut rng);
        let lhs = l2_norm_ball(&apply_s(&p), r).expect("ball norm");
        lemma.record(
            m,
            lhs,
            r * r / (m as f64 + 1.0) * l2_norm_ball(&p, r).expect("ball norm"),
        );

        let d = rng.gen_range(2..=3usize);
        let m = rng.gen_range(1..=12u32);
        let r = rng.gen_range(0.25..8.0);
        let p = random_f64(d, m, false, &mut rng);
        let lhs = l2_norm_grad_ball(&p, r).expect("ball norm");
        markov.record(
            m,
            lhs,
            (m * m) as f64 / r * l2_norm_ball(&p, r).expect("ball norm"),
        );
    }
    inversion.finish(&mut v);
    lemma.finish(&mut v);
    markov.finish(&mut v);
    v
}

/// Mean-zero periodic solution of `(α(1 + φ'))' = 0` for the two-phase laminate.
fn laminate_phi1(x: f64, a: f64, b: f64) -> f64 {
    let abar = 2.0 * a * b / (a + b);
    let (s1, s2) = (abar / a - 1.0, abar / b - 1.0);
    let raw = if x < 0.5 {
        s1 * x
    } else {
        s1 * 0.5 + s2 * (x - 0.5)
    };
    // ∫₀¹ of the raw profile
    let mean = s1 / 8.0 + s1 * 0.25 + s2 / 8.0;
    raw - mean
}

fn laminate_oracle() -> Verdict {
    let mut v = Verdict::new();
    let n = 512;
    let t = table(Builtin::Laminate { a: 1.0, b: 2.0 }, n, 2, 1e-10);
    let m = homogenized_matrix(&t).expect("ā_2");
    let want = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0 / 3.0, 1.5]));
    let err = (&m - &want).norm() / want.norm();
    v.require(
        err <= 2e-3,
        format!("‖ā_2 − diag(4/3, 3/2)‖/‖diag‖ = {err:.3e} ≤ 2e-3"),
    );
    let h = 1.0 / n as f64;
    let mut diff = 0.0;
    let mut norm = 0.0;
    for (e, exact_of) in [(0usize, true), (1, false)] {
        let phi = t.phi(1, &MultiIndex::unit(2, e)).expect("φ_1 component");
        for (idx, val) in phi.iter().enumerate() {
            let x1 = ((idx / n) as f64 + 0.5) * h;
            let exact = if exact_of {
                laminate_phi1(x1, 1.0, 2.0)
            } else {
                0.0
            };
            diff += (val - exact).powi(2);
            norm += exact * exact;
        }
    }
    let rel = (diff / norm).sqrt();
    v.require(
        rel <= 5e-3,
        format!("φ_1 relative L² error against the 1D profile = {rel:.3e} ≤ 5e-3"),
    );
    v
}

/// `value(256)` must be strictly below `value(128)` unless both are rounding noise.
fn refines(coarse: f64, fine: f64) -> bool {
    fine < coarse || (coarse <= NOISE && fine <= NOISE)
}

fn odd_vanishing(coarse: &CorrectorTable, fine: &CorrectorTable) -> Verdict {
    let mut v = Verdict::new();
    let (rc, rf) = (
        check_identities(coarse).odd_ratios,
        check_identities(fine).odd_ratios,
    );
    for m in [3usize, 5] {
        let a = rc
            .iter()
            .find(|(k, _)| *k == m)
            .map(|(_, r)| *r)
            .unwrap_or(f64::NAN);
        let b = rf
            .iter()
            .find(|(k, _)| *k == m)
            .map(|(_, r)| *r)
            .unwrap_or(f64::NAN);
        v.require(
            a < 5e-2,
            format!("|ā_{m}|/|ā_2| = {a:.3e} < 5e-2 at N = 128"),
        );
        v.require(
            refines(a, b),
            format!("|ā_{m}|/|ā_2| = {b:.3e} at N = 256 (smaller, or both ≤ {NOISE:e})"),
        );
    }
    v
}

fn identities(coarse: &CorrectorTable, fine: &CorrectorTable) -> Verdict {
    let mut v = Verdict::new();
    let (ic, iff) = (check_identities(coarse), check_identities(fine));
    for kind in ["magic", "even_order"] {
        let a = ic.max_of(kind).unwrap_or(f64::NAN);
        let b = iff.max_of(kind).unwrap_or(f64::NAN);
        v.require(
            a <= 5e-2,
            format!("{kind} discrepancy {a:.3e} ≤ 5e-2 at N = 128"),
        );
        v.require(
            refines(a, b),
            format!("{kind} discrepancy {b:.3e} at N = 256 (smaller, or both ≤ {NOISE:e})"),
        );
    }
    v
}

fn a_harmonic_contract() -> Verdict {
    let mut v = Verdict::new();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 6);
    let (mut total, mut bad) = (0usize, 0usize);
    for i in 0..20 {
        let d = if i < 10 { 2 } else { 3 };
        let op = random_synthetic_operator(d, 6, &mut rng).expect("synthetic operator");
        for n in 0..=8 {
            for h in harmonic_basis_homogeneous(d, n) {
                total += 1;
                let ok = build_a_harmonic_exact(&op, &h)
                    .and_then(|q| apply_a(&op, &q.q))
                    .map(|r| r.is_zero())
                    .unwrap_or(false);
                bad += usize::from(!ok);
            }
        }
    }
    v.require(
        bad == 0,
        format!("𝒜q = 0 exactly for {total} seeds over 20 operators (d = 2, 3; {bad} failures)"),
    );
    v
}

fn residuals(
    coarse: &CorrectorTable,
    fine: &CorrectorTable,
    truncate: bool,
) -> Vec<(u32, f64, f64)> {
    let mut out = Vec::new();
    for degree in 2..=4u32 {
        for s in 0..2u64 {
            let res = |t: &CorrectorTable| {
                let op = HomogenizedOperator::from_table(t).expect("table operator");
                let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ (u64::from(degree) << 8) ^ s);
                let p = random_seed(&op.abar_matrix(), degree, &mut rng).expect("seed");
                let q = build_a_harmonic(&op, &p).expect("𝒜-harmonic");
                let t = if truncate {
                    t.zeroed_above(2)
                } else {
                    t.clone()
                };
                residual_psi(&build_heterogeneous(&q, &t).expect("ψ")).expect("residual")
            };
            out.push((degree, res(coarse), res(fine)));
        }
    }
    out
}

fn residual_refinement(rows: &[(u32, f64, f64)]) -> Verdict {
    let mut v = Verdict::new();
    for (deg, a, b) in rows {
        v.require(
            a / b >= 1.7,
            format!(
                "degree {deg}: residual {a:.3e} → {b:.3e}, ratio {:.3} ≥ 1.7",
                a / b
            ),
        );
    }
    v
}

fn study_cfg(m_list: Vec<u32>, r_list: Vec<f64>, n: usize) -> ScalingConfig {
    ScalingConfig {
        theta: 0.5,
        m_list,
        r_list,
        seeds_per_degree: 1,
        quadrature_n: Some(n),
        rng_seed: SEED,
    }
}

const R_LIST: [f64; 5] = [64.0, 128.0, 256.0, 512.0, 1024.0];

fn decay_shape(lam: &CorrectorTable, constant: &CorrectorTable) -> (Verdict, ScalingReport) {
    let mut v = Verdict::new();
    let rep = run_scaling_study(
        &study_cfg(vec![2, 4, 6], R_LIST.to_vec(), lam.n()),
        lam,
        false,
    )
    .expect("study");
    for f in &rep.r_fits {
        let s = f.slope.map_or("n/a".into(), |s| format!("{s:.3}"));
        v.require(
            f.pass,
            format!(
                "m = {}: slope of log|ratio − 1| vs log r = {s} in [{}, {}] ({} points)",
                f.m, R_SLOPE_BAND.0, R_SLOPE_BAND.1, f.points
            ),
        );
    }
    for row in &rep.rows {
        v.note(format!(
            "m = {}, r = {}: three-ellipsoid ratio − 1 = {:+.3e} (quadrature error {:.1e})",
            row.m,
            row.ratios.r,
            row.ratios.three_ratio - 1.0,
            row.ratios.quad_err
        ));
    }
    let ctl = run_scaling_study(
        &study_cfg(vec![2, 4, 6], R_LIST.to_vec(), constant.n()),
        constant,
        false,
    )
    .expect("control study");
    let worst = ctl
        .rows
        .iter()
        .map(|r| (r.ratios.three_ratio - 1.0).abs())
        .fold(0.0, f64::max);
    v.require(
        worst <= 1e-3,
        format!("constant-coefficient control: max |ratio − 1| = {worst:.3e} ≤ 1e-3"),
    );
    (v, rep)
}

fn flatness(lam: &CorrectorTable) -> Verdict {
    let mut v = Verdict::new();
    for m in [2u32, 4, 6] {
        let start = f64::from(m).powi(4);
        let radii: Vec<f64> = (0..)
            .map(|k| start * 2f64.powi(k))
            .take_while(|r| *r <= 1024.0)
            .collect();
        if radii.is_empty() {
            v.note(format!(
                "m = {m}: [m⁴, 1024] = [{start}, 1024] is empty; nothing to measure"
            ));
            continue;
        }
        let rep = run_scaling_study(&study_cfg(vec![m], radii.clone(), lam.n()), lam, false)
            .expect("study");
        for f in &rep.flatness {
            let var = f.variation.unwrap_or(0.0);
            v.require(
                f.pass,
                format!(
                    "m = {m}: doubling profile over r ∈ {radii:?} varies by {:.3}% ≤ 10%",
                    100.0 * var
                ),
            );
        }
    }
    v
}

fn negative_controls(lam: &CorrectorTable, truncated: &[(u32, f64, f64)]) -> Verdict {
    let mut v = Verdict::new();
    let neg = run_scaling_study(
        &study_cfg(vec![2, 4, 6], R_LIST.to_vec(), lam.n()),
        lam,
        true,
    )
    .expect("study");
    for f in &neg.r_fits {
        let decays = f.slope.is_some_and(|s| s <= R_SLOPE_BAND.1);
        let s = f.slope.map_or("n/a".into(), |s| format!("{s:.3}"));
        v.require(
            !decays,
            format!(
                "non-𝒜-harmonic m = {}: ratio − 1 must not decay; slope = {s}",
                f.m
            ),
        );
    }
    let flagged = neg.psi_checks.iter().filter(|c| !c.pass).count();
    v.note(format!(
        "contract check flags {flagged} of {} non-𝒜-harmonic seeds (|𝒜q| > tolerance)",
        neg.psi_checks.len()
    ));
    for (deg, a, b) in truncated.iter().filter(|(d, _, _)| *d > 2) {
        v.require(
            a / b < 1.7,
            format!(
                "truncated table, degree {deg}: residual ratio {:.3} < 1.7",
                a / b
            ),
        );
    }
    v
}

fn main() {
    let strict = std::env::var("HOMOG_UC_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut passes = Vec::new();
    criterion(
        1,
        "exact algebra",
        Some(Duration::from_secs(10)),
        &mut passes,
        exact_algebra,
    );
    criterion(
        2,
        "stated bounds",
        Some(Duration::from_secs(30)),
        &mut passes,
        stated_bounds,
    );
    criterion(
        3,
        "laminate oracle",
        Some(Duration::from_secs(60)),
        &mut passes,
        laminate_oracle,
    );

    let checker = |n| table(Builtin::Checkerboard { a: 1.0, b: 4.0 }, n, 5, 1e-10);
    let mut boards = None;
    criterion(
        4,
        "odd-tensor vanishing",
        Some(Duration::from_secs(300)),
        &mut passes,
        || {
            let (c, f) = (checker(128), checker(256));
            let v = odd_vanishing(&c, &f);
            boards = Some((c, f));
            v
        },
    );
    let (c, f) = boards.expect("checkerboard tables");
    criterion(5, "identities", None, &mut passes, || identities(&c, &f));
    drop((c, f));

    criterion(
        6,
        "𝒜-harmonic contract",
        Some(Duration::from_secs(60)),
        &mut passes,
        a_harmonic_contract,
    );

    let laminate = |n| table(Builtin::Laminate { a: 1.0, b: 2.0 }, n, 4, 1e-10);
    let mut truncated = Vec::new();
    criterion(7, "ψ residual refinement", None, &mut passes, || {
        let (c, f) = (laminate(256), laminate(512));
        truncated = residuals(&c, &f, true);
        residual_refinement(&residuals(&c, &f, false))
    });

    let lam = table(Builtin::Laminate { a: 1.0, b: 2.0 }, 64, 6, 1e-11);
    let constant = {
        let f = CoefficientField::builtin(
            &Builtin::Constant {
                matrix: vec![1.5, 0.2, 0.2, 1.2],
            },
            2,
            16,
        )
        .expect("constant field");
        compute_correctors(&f, 6, 1e-11).expect("corrector solve")
    };
    criterion(
        8,
        "three-ellipsoid decay shape",
        Some(Duration::from_secs(600)),
        &mut passes,
        || decay_shape(&lam, &constant).0,
    );
    criterion(9, "doubling flatness", None, &mut passes, || flatness(&lam));
    criterion(10, "negative controls", None, &mut passes, || {
        negative_controls(&lam, &truncated)
    });

    let n_pass = passes.iter().filter(|p| **p).count();
    println!("acceptance: {n_pass}/{} criteria pass", passes.len());
    if strict && n_pass < passes.len() {
        std::process::exit(1);
    }
}
