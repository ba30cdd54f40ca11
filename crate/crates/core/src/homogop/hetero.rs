use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::cell::correctors::{homogenized_matrix, CorrectorTable};
use crate::cell::io::{write_field, FieldHeader, FieldKind};
use crate::error::{contract, Error, Result};
use crate::homogop::construct::AHarmonicPolynomial;
use crate::polyalg::multi_index::MultiIndex;
use crate::polyalg::polynomial::Polynomial;
use crate::verify::quadrature::{LatticeIntegrand, LatticeQuadrature};

/// A polynomial stored as `(monomial slot, coefficient)` pairs against a fixed
/// monomial list, for fast repeated evaluation.
#[derive(Clone, Debug)]
struct Packed(Vec<(usize, f64)>);

impl Packed {
    fn new(p: &Polynomial<f64>, slots: &[MultiIndex]) -> Self {
        Packed(
            p.terms()
                .map(|(a, c)| (slots.binary_search(a).expect("monomial in range"), *c))
                .collect(),
        )
    }

    fn eval(&self, mono: &[f64]) -> f64 {
        self.0.iter().map(|(i, c)| c * mono[*i]).sum()
    }
}

#[derive(Clone, Debug)]
struct Term {
    order: usize,
    component: usize,
    /// `C(n,α) ∂^α q`
    coeff: Polynomial<f64>,
    packed: Packed,
    grad: Vec<Packed>,
}

/// `ψ = Σ_n ∇^n q : φ_n`, with `φ_n` interpolated multilinearly between cell centres.
#[derive(Clone, Debug)]
pub struct HeterogeneousPolynomial<'a> {
    q: Polynomial<f64>,
    table: &'a CorrectorTable,
    terms: Vec<Term>,
    slots: Vec<MultiIndex>,
    degree: u32,
}

/// Which part of `ψ` an integrand refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PsiPart {
    Full,
    /// `ψ − q`
    Corrector,
}

impl<'a> HeterogeneousPolynomial<'a> {
    /// Pairs any polynomial with a table; no `𝒜`-harmonicity is required.
    pub fn from_polynomial(q: &Polynomial<f64>, table: &'a CorrectorTable) -> Result<Self> {
        let d = table.dim();
        if q.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: q.dim(),
            });
        }
        let degree = q.degree().unwrap_or(0);
        if degree as usize > table.m_max() {
            return Err(Error::TableTooShort {
                have: table.m_max(),
                need: degree as usize,
            });
        }
        let slots = MultiIndex::all_up_to(d, degree);
        let mut terms = Vec::new();
        for n in 0..=degree as usize {
            for (component, alpha) in table.components(n).iter().enumerate() {
                let coeff = q
                    .derivative_multi(alpha)
                    .scale(&(alpha.multinomial() as f64));
                if coeff.is_zero() {
                    continue;
                }
                terms.push(Term {
                    order: n,
                    component,
                    packed: Packed::new(&coeff, &slots),
                    grad: coeff
                        .gradient()
                        .iter()
                        .map(|g| Packed::new(g, &slots))
                        .collect(),
                    coeff,
                });
            }
        }
        Ok(HeterogeneousPolynomial {
            q: q.clone(),
            table,
            terms,
            slots,
            degree,
        })
    }

    pub fn q(&self) -> &Polynomial<f64> {
        &self.q
    }

    pub fn table(&self) -> &CorrectorTable {
        self.table
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.table.dim()
    }

    fn monomials(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let deg = self.degree as usize;
        let mut pw = vec![vec![1.0; deg + 1]; d];
        for k in 0..d {
            for p in 1..=deg {
                pw[k][p] = pw[k][p - 1] * x[k];
            }
        }
        self.slots
            .iter()
            .map(|a| (0..d).map(|k| pw[k][a.get(k) as usize]).product())
            .collect()
    }

    /// Multilinear interpolation stencil: `(cell, weight, ∇weight)`.
    fn stencil(&self, x: &[f64]) -> Vec<(usize, f64, [f64; 3])> {
        let d = self.dim();
        let n = self.table.n();
        let nf = n as f64;
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut f = [0.0; 3];
        for k in 0..d {
            let t = x[k] * nf - 0.5;
            let i0 = t.floor();
            f[k] = t - i0;
            let i0 = (i0 as i64).rem_euclid(n as i64) as usize;
            lo[k] = i0;
            hi[k] = (i0 + 1) % n;
        }
        let mut out = Vec::with_capacity(1 << d);
        for corner in 0..(1usize << d) {
            let mut idx = 0;
            let mut w = 1.0;
            let mut wk = [1.0; 3];
            let mut dk = [0.0; 3];
            for k in 0..d {
                let up = corner >> k & 1 == 1;
                idx = idx * n + if up { hi[k] } else { lo[k] };
                wk[k] = if up { f[k] } else { 1.0 - f[k] };
                dk[k] = if up { nf } else { -nf };
                w *= wk[k];
            }
            let mut g = [0.0; 3];
            for k in 0..d {
                g[k] = dk[k] * (0..d).filter(|&l| l != k).map(|l| wk[l]).product::<f64>();
            }
            out.push((idx, w, g));
        }
        out
    }

    fn eval_part(&self, x: &[f64], part: PsiPart, with_grad: bool) -> (f64, [f64; 3]) {
        let d = self.dim();
        let mono = self.monomials(x);
        let st = self.stencil(x);
        let mut v = 0.0;
        let mut g = [0.0; 3];
        for t in &self.terms {
            if t.order == 0 && part == PsiPart::Corrector {
                continue;
            }
            let c = t.packed.eval(&mono);
            let (phi, dphi) = if t.order == 0 {
                (1.0, [0.0; 3])
            } else {
                let vals = &self.table.phi_order(t.order)[t.component];
                let mut p = 0.0;
                let mut dp = [0.0; 3];
                for (idx, w, gw) in &st {
                    p += w * vals[*idx];
                    for k in 0..d {
                        dp[k] += gw[k] * vals[*idx];
                    }
                }
                (p, dp)
            };
            v += c * phi;
            if with_grad {
                for k in 0..d {
                    g[k] += t.grad[k].eval(&mono) * phi + c * dphi[k];
                }
            }
        }
        (v, g)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.eval_part(x, PsiPart::Full, false).0
    }

    /// `ψ(x) − q(x)`.
    pub fn corrector_part(&self, x: &[f64]) -> f64 {
        self.eval_part(x, PsiPart::Corrector, false).0
    }

    pub fn value_and_gradient(&self, x: &[f64]) -> (f64, [f64; 3]) {
        self.eval_part(x, PsiPart::Full, true)
    }

    /// Lattice view of `ψ` or of `ψ − q` on the table's own grid.
    pub fn integrand(&self, part: PsiPart) -> PsiIntegrand<'_, 'a> {
        PsiIntegrand { psi: self, part }
    }

    /// Samples on `origin + i·spacing`, `i ∈ {0..samples−1}^d`, first axis slowest.
    pub fn sample_window(&self, origin: &[f64], spacing: f64, samples: usize) -> Result<Vec<f64>> {
        let d = self.dim();
        if origin.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: origin.len(),
            });
        }
        if !(spacing > 0.0 && spacing.is_finite()) || samples < 2 {
            return contract("window needs a positive spacing and at least two samples per axis");
        }
        let total = samples.pow(d as u32);
        Ok((0..total)
            .into_par_iter()
            .map(|mut idx| {
                let mut x = [0.0; 3];
                for k in (0..d).rev() {
                    x[k] = origin[k] + (idx % samples) as f64 * spacing;
                    idx /= samples;
                }
                self.value(&x[..d])
            })
            .collect())
    }

    /// Writes a window of samples as a `window` field; returns the header path.
    pub fn export_window(
        &self,
        dir: &Path,
        stem: &str,
        origin: &[f64],
        spacing: f64,
        samples: usize,
    ) -> Result<PathBuf> {
        let values = self.sample_window(origin, spacing, samples)?;
        let header = FieldHeader {
            d: self.dim(),
            n: samples,
            kind: FieldKind::Window,
            order: 0,
            components: vec![vec![0; self.dim()]],
            payload: format!("{stem}.bin"),
            lambda: None,
            origin: Some(origin.to_vec()),
            spacing: Some(spacing),
        };
        write_field(dir, stem, &header, &[&values])
    }
}

pub struct PsiIntegrand<'p, 'a> {
    psi: &'p HeterogeneousPolynomial<'a>,
    part: PsiPart,
}

impl PsiIntegrand<'_, '_> {
    fn selected(&self) -> impl Iterator<Item = &Term> {
        let part = self.part;
        self.psi
            .terms
            .iter()
            .filter(move |t| !(part == PsiPart::Corrector && t.order == 0))
    }
}

impl LatticeIntegrand for PsiIntegrand<'_, '_> {
    fn dim(&self) -> usize {
        self.psi.dim()
    }

    fn samples_per_unit(&self) -> usize {
        self.psi.table.n()
    }

    fn coefficient_polynomials(&self) -> Vec<Polynomial<f64>> {
        self.selected().map(|t| t.coeff.clone()).collect()
    }

    fn node_weights(&self, a: usize) -> Option<&[f64]> {
        let t = self.selected().nth(a)?;
        if t.order == 0 {
            None
        } else {
            Some(&self.psi.table.phi_order(t.order)[t.component])
        }
    }
}

/// `ψ` for an `𝒜`-harmonic `q`; the table must reach the degree of `q`.
pub fn build_heterogeneous<'a>(
    q: &AHarmonicPolynomial<f64>,
    table: &'a CorrectorTable,
) -> Result<HeterogeneousPolynomial<'a>> {
    HeterogeneousPolynomial::from_polynomial(&q.q, table)
}

/// Weak residual of `−∇·a∇ψ` on the window `[−L, L]^d`, `L = half_width`.
///
/// Test functions are `v = B·ℓ` with the bump `B = Π(1 − (x_i/L)²)²` and
/// `ℓ ∈ {1, x_1/L, …, x_d/L}`. Returns `max_v |∫∇v·a∇ψ| / (‖∇v‖‖a∇ψ‖)`,
/// integrals taken by the midpoint rule on a lattice of spacing `h/2` that
/// never meets a cell face or an interpolation node.
pub fn residual_psi_window(psi: &HeterogeneousPolynomial, half_width: usize) -> Result<f64> {
    if half_width == 0 {
        return contract("window half-width must be at least one period");
    }
    let d = psi.dim();
    let n = psi.table.n();
    let field = psi.table.field();
    let l = half_width as f64;
    let per_axis = 4 * n * half_width;
    let sub = 0.5 / n as f64;
    let ntest = d + 1;
    let rows: Vec<Vec<f64>> = (0..per_axis.pow(d as u32 - 1))
        .into_par_iter()
        .map(|row| {
            let mut acc = vec![0.0; 2 * ntest + 1];
            let mut x = [0.0; 3];
            let mut rem = row;
            for k in (1..d).rev() {
                x[k] = -l + ((rem % per_axis) as f64 + 0.5) * sub;
                rem /= per_axis;
            }
            for i in 0..per_axis {
                x[0] = -l + (i as f64 + 0.5) * sub;
                let (_, g) = psi.value_and_gradient(&x[..d]);
                let mut cell = 0;
                for k in 0..d {
                    let c = ((x[k] * n as f64).floor() as i64).rem_euclid(n as i64) as usize;
                    cell = cell * n + c;
                }
                let mut flux = [0.0; 3];
                for a in 0..d {
                    for b in 0..d {
                        flux[a] += field.entry(cell, a, b) * g[b];
                    }
                }
                let z: Vec<f64> = (0..d).map(|k| x[k] / l).collect();
                let bump: f64 = z.iter().map(|t| (1.0 - t * t).powi(2)).product();
                let dbump: Vec<f64> = (0..d)
                    .map(|k| {
                        let t = z[k];
                        -4.0 * t * (1.0 - t * t) / l
                            * (0..d)
                                .filter(|&m| m != k)
                                .map(|m| (1.0 - z[m] * z[m]).powi(2))
                                .product::<f64>()
                    })
                    .collect();
                for tf in 0..ntest {
                    let (lin, dlin) = if tf == 0 {
                        (1.0, None)
                    } else {
                        (z[tf - 1], Some(tf - 1))
                    };
                    let mut gv = [0.0; 3];
                    for k in 0..d {
                        gv[k] = dbump[k] * lin + if dlin == Some(k) { bump / l } else { 0.0 };
                    }
                    let r: f64 = (0..d).map(|k| gv[k] * flux[k]).sum();
                    let gg: f64 = (0..d).map(|k| gv[k] * gv[k]).sum();
                    acc[tf] += r;
                    acc[ntest + tf] += gg;
                }
                acc[2 * ntest] += (0..d).map(|k| flux[k] * flux[k]).sum::<f64>();
            }
            acc
        })
        .collect();
    let mut tot = vec![0.0; 2 * ntest + 1];
    for r in &rows {
        for (t, v) in tot.iter_mut().zip(r) {
            *t += v;
        }
    }
    let flux_norm = tot[2 * ntest].sqrt();
    if flux_norm == 0.0 {
        return Ok(0.0);
    }
    Ok((0..ntest)
        .map(|k| tot[k].abs() / (tot[ntest + k].sqrt() * flux_norm))
        .fold(0.0, f64::max))
}

/// [`residual_psi_window`] on `[−1, 1]^d`.
pub fn residual_psi(psi: &HeterogeneousPolynomial) -> Result<f64> {
    residual_psi_window(psi, 1)
}

/// `‖ψ − q‖_{L²(E_r)} / ‖ψ‖_{L²(E_r)}` by lattice quadrature on the table grid,
/// with `E_r` built from the table's `ā`.
pub fn psi_poly_error(psi: &HeterogeneousPolynomial, r: f64) -> Result<f64> {
    let quad = LatticeQuadrature::new(
        homogenized_matrix(psi.table)?,
        psi.table.n(),
        psi.degree.max(1),
    )?;
    psi_poly_error_with(psi, r, &quad)
}

/// As [`psi_poly_error`], reusing a quadrature (and its moment cache).
pub fn psi_poly_error_with(
    psi: &HeterogeneousPolynomial,
    r: f64,
    quad: &LatticeQuadrature,
) -> Result<f64> {
    let num = quad.sq_integral(&psi.integrand(PsiPart::Corrector), r, 1)?;
    let den = quad.sq_integral(&psi.integrand(PsiPart::Full), r, 1)?;
    if den <= 0.0 {
        return Err(Error::ZeroNorm("psi vanishes on the ellipsoid".into()));
    }
    Ok((num.max(0.0) / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::correctors::compute_correctors;
    use crate::cell::field::{Builtin, CoefficientField};
    use crate::homogop::construct::build_a_harmonic;
    use crate::homogop::operator::HomogenizedOperator;
    use crate::verify::quadrature::norm_on_ellipsoid;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    fn laminate(n: usize, m_max: usize) -> CorrectorTable {
        let f = CoefficientField::builtin(&Builtin::Laminate { a: 1.0, b: 2.0 }, 2, n).unwrap();
        compute_correctors(&f, m_max, 1e-11).unwrap()
    }

    #[test]
    fn constant_coefficients_give_q() {
        let f = CoefficientField::builtin(
            &Builtin::Constant {
                matrix: vec![1.5, 0.2, 0.2, 1.2],
            },
            2,
            8,
        )
        .unwrap();
        let t = compute_correctors(&f, 3, 1e-10).unwrap();
        let q = Polynomial::from_terms(2, [(mi(&[3, 0]), 1.0), (mi(&[0, 1]), 2.0)]).unwrap();
        let psi = HeterogeneousPolynomial::from_polynomial(&q, &t).unwrap();
        for x in [[0.13, 0.7], [-2.3, 5.1], [10.0, -0.01]] {
            assert!((psi.value(&x) - q.eval_f64(&x)).abs() < 1e-12);
        }
        let one = Polynomial::constant(2, 1.0);
        let psi1 = HeterogeneousPolynomial::from_polynomial(&one, &t).unwrap();
        assert_eq!(psi1.value(&[0.3, 0.4]), 1.0);
    }

    #[test]
    fn first_order_laminate_expansion() {
        let t = laminate(16, 2);
        let q = Polynomial::var(2, 0);
        let psi = HeterogeneousPolynomial::from_polynomial(&q, &t).unwrap();
        let phi = t.phi(1, &mi(&[1, 0])).unwrap();
        // at cell centres ψ = x_1 + φ_1^{e_1}
        let grid = t.operator().grid();
        for idx in [0, 5, 77, 200] {
            let c = grid.center(idx);
            let x = [c[0] + 3.0, c[1] - 2.0];
            assert!((psi.value(&x) - x[0] - phi[idx]).abs() < 1e-12);
        }
    }

    #[test]
    fn table_too_short() {
        let t = laminate(8, 2);
        let q = Polynomial::monomial(mi(&[3, 0]), 1.0);
        assert!(matches!(
            HeterogeneousPolynomial::from_polynomial(&q, &t),
            Err(Error::TableTooShort { .. })
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let t = laminate(8, 3);
        let q = Polynomial::from_terms(2, [(mi(&[2, 1]), 1.0), (mi(&[0, 3]), -0.5)]).unwrap();
        let psi = HeterogeneousPolynomial::from_polynomial(&q, &t).unwrap();
        let x = [0.31, 1.17];
        let (_, g) = psi.value_and_gradient(&x);
        let e = 1e-6;
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += e;
            xm[k] -= e;
            let fd = (psi.value(&xp) - psi.value(&xm)) / (2.0 * e);
            assert!(
                (fd - g[k]).abs() < 1e-5 * g[k].abs().max(1.0),
                "{k}: {fd} {}",
                g[k]
            );
        }
    }

    #[test]
    fn residual_refines_and_truncation_is_detected() {
        let mut res = Vec::new();
        for n in [16, 32] {
            let t = laminate(n, 4);
            let op = HomogenizedOperator::from_table(&t).unwrap();
            let abar = op.abar_matrix();
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
            let seed = crate::homogop::construct::random_seed(&abar, 4, &mut rng).unwrap();
            let q = build_a_harmonic(&op, &seed).unwrap();
            let psi = build_heterogeneous(&q, &t).unwrap();
            res.push(residual_psi(&psi).unwrap());
            if n == 32 {
                let cut = t.zeroed_above(2);
                let bad = build_heterogeneous(&q, &cut).unwrap();
                let r = residual_psi(&bad).unwrap();
                assert!(r > 10.0 * res[1], "{r} vs {}", res[1]);
            }
        }
        assert!(res[0] / res[1] >= 1.7, "{res:?}");
    }

    #[test]
    fn lattice_norm_matches_pointwise_quadrature() {
        let t = laminate(8, 3);
        let q = Polynomial::from_terms(2, [(mi(&[1, 1]), 1.0), (mi(&[3, 0]), 0.2)]).unwrap();
        let psi = HeterogeneousPolynomial::from_polynomial(&q, &t).unwrap();
        let abar = homogenized_matrix(&t).unwrap();
        let quad = LatticeQuadrature::new(abar.clone(), 8, 3).unwrap();
        let e = crate::polyalg::norms::Ellipsoid::new(abar, 4.0).unwrap();
        let lat = quad.norm(&psi.integrand(PsiPart::Full), 4.0).unwrap();
        let brute = norm_on_ellipsoid(&|x| psi.value(x), &e, 8).unwrap();
        assert!(
            (lat.value / brute.value - 1.0).abs() < 1e-9,
            "{lat:?} {brute:?}"
        );
        let lat_c = quad.norm(&psi.integrand(PsiPart::Corrector), 4.0).unwrap();
        let brute_c = norm_on_ellipsoid(&|x| psi.corrector_part(x), &e, 8).unwrap();
        assert!((lat_c.value / brute_c.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn window_export_roundtrip() {
        let t = laminate(8, 2);
        let q = Polynomial::var(2, 1);
        let psi = HeterogeneousPolynomial::from_polynomial(&q, &t).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = psi
            .export_window(dir.path(), "win", &[-1.0, 0.5], 0.25, 9)
            .unwrap();
        let (h, data) = crate::cell::io::read_field(&path).unwrap();
        assert_eq!(h.kind, FieldKind::Window);
        assert_eq!(data[0].len(), 81);
        assert!((data[0][1] - psi.value(&[-1.0, 0.75])).abs() < 1e-15);
    }
}
