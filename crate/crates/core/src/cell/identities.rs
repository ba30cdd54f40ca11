//! Discrete evaluation of the energy identities linking correctors and
//! homogenized tensors:
//!
//! * `⟨∇φ_n a∇φ_m − φ_{n−1}aφ_{m−1}⟩ = −⟨∇φ_{n+1}a∇φ_{m−1} − φ_n aφ_{m−2}⟩`,
//! * `ā_n = (−1)^k ⟨∇φ_k a∇φ_{n−k} − φ_{k−1}aφ_{n−k−1}⟩`, `1 ≤ k ≤ n−1`,
//! * `⟨∇φ_n a∇φ_{n+1} − φ_{n−1}aφ_n⟩ = 0`, hence `ā_{2n+1} = 0`.

use std::collections::HashMap;

use serde::Serialize;

use crate::cell::correctors::CorrectorTable;
use crate::cell::grid::mean;
use crate::polyalg::multi_index::{factorial, MultiIndex};
use crate::polyalg::tensor::SymTensor;

/// Floor of the identity tolerance schedule.
pub const TOLERANCE_FLOOR: f64 = 1e-6;

/// `K_ref` in the schedule `max(1e−6, K_ref·h)`, calibrated on the two-phase
/// laminate (see [`calibrate_k_ref`]). The discrete identities hold to solver
/// tolerance there, so the floor dominates at every supported resolution.
pub const K_REF: f64 = 1e-6;

/// Pass threshold at mesh size `h`.
pub fn tolerance(h: f64) -> f64 {
    TOLERANCE_FLOOR.max(K_REF * h)
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityCheck {
    /// `magic`, `tock`, `even_order`, `odds_out`, `odd_vanish`.
    pub kind: String,
    pub n: usize,
    pub m: usize,
    pub max_discrepancy: f64,
    pub worst_component: Vec<u32>,
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub n_grid: usize,
    pub h: f64,
    pub threshold: f64,
    pub checks: Vec<IdentityCheck>,
    /// `|ā_m|/|ā_2|` for odd `m ≤ m_max`.
    pub odd_ratios: Vec<(usize, f64)>,
    /// `max_α ‖φ_m^α‖_∞` per order.
    pub sup_norms: Vec<f64>,
    pub pass: bool,
}

impl IdentityReport {
    pub fn max_of(&self, kind: &str) -> Option<f64> {
        self.checks
            .iter()
            .filter(|c| c.kind == kind)
            .map(|c| c.max_discrepancy)
            .reduce(f64::max)
    }
}

/// Face/cell derivatives of one corrector component, computed once.
struct Prepared {
    dfwd: Vec<Vec<f64>>,
    avgf: Vec<Vec<f64>>,
    central: Vec<Vec<f64>>,
    raw: Vec<f64>,
}

struct Energies<'a> {
    table: &'a CorrectorTable,
    prepared: HashMap<(usize, MultiIndex), Prepared>,
    has_off: bool,
}

impl<'a> Energies<'a> {
    fn new(table: &'a CorrectorTable) -> Self {
        let op = table.operator();
        let d = table.dim();
        let has_off = (0..d).any(|i| (0..d).any(|j| i != j && op.off_diag(i, j).is_some()));
        let mut prepared = HashMap::new();
        for m in 0..=table.m_max() {
            for a in table.components(m) {
                let v = table.phi(m, a).unwrap();
                prepared.insert(
                    (m, a.clone()),
                    Prepared {
                        dfwd: (0..d).map(|i| op.d_fwd(v, i)).collect(),
                        avgf: (0..d).map(|i| op.avg_fwd(v, i)).collect(),
                        central: if has_off {
                            (0..d).map(|i| op.central(v, i)).collect()
                        } else {
                            Vec::new()
                        },
                        raw: v.to_vec(),
                    },
                );
            }
        }
        Energies {
            table,
            prepared,
            has_off,
        }
    }

    fn get(&self, m: usize, a: &MultiIndex) -> &Prepared {
        &self.prepared[&(m, a.clone())]
    }

    /// `B(u, w)`.
    fn b(&self, u: &Prepared, w: &Prepared) -> f64 {
        let op = self.table.operator();
        let d = self.table.dim();
        let len = u.raw.len();
        let mut t = vec![0.0; len];
        for i in 0..d {
            let ah = op.face_coeff(i);
            for c in 0..len {
                t[c] += ah[c] * u.dfwd[i][c] * w.dfwd[i][c];
            }
        }
        if self.has_off {
            for i in 0..d {
                for j in 0..d {
                    if i == j {
                        continue;
                    }
                    if let Some(a) = op.off_diag(i, j) {
                        for c in 0..len {
                            t[c] += a[c] * u.central[i][c] * w.central[j][c];
                        }
                    }
                }
            }
        }
        mean(&t)
    }

    /// `⟨u a_kl w⟩` in its discrete form.
    fn p(&self, u: &Prepared, w: &Prepared, k: usize, l: usize) -> f64 {
        let op = self.table.operator();
        if k == l {
            let ah = op.face_coeff(k);
            let t: Vec<f64> = (0..u.raw.len())
                .map(|c| ah[c] * u.avgf[k][c] * w.avgf[k][c])
                .collect();
            mean(&t)
        } else {
            match op.off_diag(k, l) {
                Some(a) => {
                    let t: Vec<f64> = (0..u.raw.len())
                        .map(|c| a[c] * u.raw[c] * w.raw[c])
                        .collect();
                    mean(&t)
                }
                None => 0.0,
            }
        }
    }

    /// `sym⟨∇φ_n a∇φ_m − φ_{n−1}aφ_{m−1}⟩`, an order-`(n+m)` tensor; `n, m ≥ 1`.
    fn bracket(&self, n: usize, m: usize) -> SymTensor<f64> {
        let d = self.table.dim();
        let big = n + m;
        let fm = factorial(big as u32);
        let mut out = SymTensor::zeros(d, big as u32);
        for gamma in MultiIndex::all_of_order(d, big as u32) {
            let gf = gamma.factorial();
            let mut s = 0.0;
            for beta in MultiIndex::all_of_order(d, n as u32) {
                let Some(rho) = gamma.checked_sub(&beta) else {
                    continue;
                };
                let w = factorial(n as u32) * factorial(m as u32) * gf
                    / (fm * beta.factorial() * rho.factorial());
                s += w * self.b(self.get(n, &beta), self.get(m, &rho));
            }
            for k in 0..d {
                for l in 0..d {
                    let Some(rest) = gamma.dec(k).and_then(|g| g.dec(l)) else {
                        continue;
                    };
                    for beta in MultiIndex::all_of_order(d, n as u32 - 1) {
                        let Some(rho) = rest.checked_sub(&beta) else {
                            continue;
                        };
                        let w = factorial(n as u32 - 1) * factorial(m as u32 - 1) * gf
                            / (fm * beta.factorial() * rho.factorial());
                        s -= w * self.p(self.get(n - 1, &beta), self.get(m - 1, &rho), k, l);
                    }
                }
            }
            out.set(gamma, s).unwrap();
        }
        out
    }
}

fn compare(
    kind: &str,
    n: usize,
    m: usize,
    lhs: &SymTensor<f64>,
    rhs: &SymTensor<f64>,
    scale: f64,
) -> IdentityCheck {
    let mut worst = 0.0;
    let mut worst_component = Vec::new();
    for (a, l) in lhs.iter() {
        let r = rhs.at(a);
        let denom = l.abs().max(r.abs()).max(TOLERANCE_FLOOR * scale);
        let rel = (l - r).abs() / denom;
        if rel > worst || worst_component.is_empty() {
            worst = rel;
            worst_component = a.entries().to_vec();
        }
    }
    IdentityCheck {
        kind: kind.to_string(),
        n,
        m,
        max_discrepancy: worst,
        worst_component,
    }
}

/// Evaluates both sides of every identity available up to `m_max`.
pub fn check_identities(table: &CorrectorTable) -> IdentityReport {
    let mm = table.m_max();
    let e = Energies::new(table);
    let scale = table
        .abar(2)
        .map(|t| t.norm())
        .unwrap_or(1.0)
        .max(f64::MIN_POSITIVE);
    let mut brackets: HashMap<(usize, usize), SymTensor<f64>> = HashMap::new();
    let mut bracket = |n: usize, m: usize| -> SymTensor<f64> {
        brackets
            .entry((n, m))
            .or_insert_with(|| e.bracket(n, m))
            .clone()
    };
    let mut checks = Vec::new();

    for n in 1..mm {
        for m in 2..=mm - n {
            let lhs = bracket(n, m);
            let rhs = bracket(n + 1, m - 1).scale(&-1.0);
            checks.push(compare("magic", n, m, &lhs, &rhs, scale));
        }
    }
    for n in 2..=mm {
        let abar = table.abar(n).unwrap();
        for k in 1..n {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let rhs = bracket(k, n - k).scale(&sign);
            let kind = if 2 * k == n { "even_order" } else { "tock" };
            checks.push(compare(kind, n, k, abar, &rhs, scale));
        }
    }
    for n in 1..mm {
        if 2 * n + 1 > mm {
            break;
        }
        let lhs = bracket(n, n + 1);
        let zero = SymTensor::zeros(lhs.dim(), lhs.order());
        checks.push(compare("odds_out", n, n + 1, &lhs, &zero, scale));
    }

    let mut odd_ratios = Vec::new();
    for m in (1..=mm).step_by(2) {
        let ratio = table.abar(m).unwrap().norm() / scale;
        odd_ratios.push((m, ratio));
        checks.push(IdentityCheck {
            kind: "odd_vanish".into(),
            n: m,
            m: 0,
            max_discrepancy: ratio,
            worst_component: Vec::new(),
        });
    }

    let threshold = tolerance(table.h());
    let pass = checks
        .iter()
        .filter(|c| c.kind != "odd_vanish")
        .all(|c| c.max_discrepancy <= threshold);
    IdentityReport {
        n_grid: table.n(),
        h: table.h(),
        threshold,
        checks,
        odd_ratios,
        sup_norms: table.sup_norms(),
        pass,
    }
}

/// Re-derives `K_ref`: the largest identity discrepancy on the laminate at
/// resolution `n`, divided by `h`.
pub fn calibrate_k_ref(n: usize, m_max: usize, tol: f64) -> crate::error::Result<f64> {
    use crate::cell::correctors::compute_correctors;
    use crate::cell::field::{Builtin, CoefficientField};
    let f = CoefficientField::builtin(&Builtin::Laminate { a: 1.0, b: 2.0 }, 2, n)?;
    let t = compute_correctors(&f, m_max, tol)?;
    let r = check_identities(&t);
    let worst = r
        .checks
        .iter()
        .filter(|c| c.kind != "odd_vanish")
        .map(|c| c.max_discrepancy)
        .fold(0.0, f64::max);
    Ok(worst * n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::correctors::compute_correctors;
    use crate::cell::field::{Builtin, CoefficientField};

    #[test]
    fn constant_coefficients_satisfy_everything() {
        let f = CoefficientField::builtin(
            &Builtin::Constant {
                matrix: vec![2.0, 0.5, 0.5, 1.5],
            },
            2,
            8,
        )
        .unwrap();
        let t = compute_correctors(&f, 4, 1e-10).unwrap();
        let r = check_identities(&t);
        assert!(r.pass, "{r:?}");
        // ā_2 = (−1)⟨∇φ_1 a∇φ_1 − a⟩ = ⟨a⟩
        assert!(r.max_of("even_order").unwrap() < 1e-12);
    }

    #[test]
    fn laminate_identities_hold_to_solver_tolerance() {
        let f = CoefficientField::builtin(&Builtin::Laminate { a: 1.0, b: 2.0 }, 2, 16).unwrap();
        let t = compute_correctors(&f, 5, 1e-11).unwrap();
        let r = check_identities(&t);
        assert!(r.pass, "{:#?}", r.checks);
        assert!(r.max_of("magic").is_some());
        assert!(r.max_of("odds_out").is_some());
        for (m, ratio) in &r.odd_ratios {
            assert!(*ratio < 1e-6, "ā_{m} ratio {ratio}");
        }
    }

    #[test]
    fn calibration_stays_below_recorded_constant() {
        let k = calibrate_k_ref(16, 4, 1e-10).unwrap();
        assert!(k <= K_REF, "calibrated {k}");
    }
}
