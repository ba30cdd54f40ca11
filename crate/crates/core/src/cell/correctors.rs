use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::cell::field::CoefficientField;
use crate::cell::grid::{mean, sup_norm, GridFunction};
use crate::cell::operator::CellOperator;
use crate::cell::solver::{CellSolver, PeriodicSource, SolveStats};
use crate::error::{contract, Error, Result};
use crate::polyalg::multi_index::MultiIndex;
use crate::polyalg::tensor::SymTensor;

/// Largest corrector order the table will compute.
pub const MAX_ORDER: usize = 10;

/// Correctors `φ_0..φ_{m_max}` (one grid function per canonical multi-index)
/// and homogenized tensors `ā_0..ā_{m_max}`.
#[derive(Clone, Debug)]
pub struct CorrectorTable {
    field: CoefficientField,
    op: CellOperator,
    m_max: usize,
    tol: f64,
    components: Vec<Vec<MultiIndex>>,
    index: Vec<HashMap<MultiIndex, usize>>,
    phi: Vec<Vec<Vec<f64>>>,
    abar: Vec<SymTensor<f64>>,
    stats: Vec<Vec<SolveStats>>,
}

impl CorrectorTable {
    /// Assembles a table from precomputed data (e.g. read back from disk).
    pub fn from_parts(
        field: CoefficientField,
        m_max: usize,
        tol: f64,
        phi: Vec<Vec<Vec<f64>>>,
        abar: Vec<SymTensor<f64>>,
    ) -> Result<Self> {
        let d = field.dim();
        let len = field.num_cells();
        if phi.len() != m_max + 1 || abar.len() != m_max + 1 {
            return contract(format!(
                "table for m_max = {m_max} needs {} orders",
                m_max + 1
            ));
        }
        let components: Vec<Vec<MultiIndex>> = (0..=m_max)
            .map(|m| MultiIndex::all_of_order(d, m as u32))
            .collect();
        for (m, (p, a)) in phi.iter().zip(&abar).enumerate() {
            if p.len() != components[m].len() || p.iter().any(|v| v.len() != len) {
                return contract(format!("order {m} correctors have the wrong shape"));
            }
            if a.order() as usize != m || a.dim() != d {
                return contract(format!("tensor for order {m} has the wrong shape"));
            }
        }
        let index = components
            .iter()
            .map(|c| c.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect())
            .collect();
        let stats = (0..=m_max)
            .map(|m| vec![SolveStats::default(); components[m].len()])
            .collect();
        Ok(CorrectorTable {
            op: CellOperator::new(&field)?,
            field,
            m_max,
            tol,
            components,
            index,
            phi,
            abar,
            stats,
        })
    }

    pub fn field(&self) -> &CoefficientField {
        &self.field
    }

    pub fn operator(&self) -> &CellOperator {
        &self.op
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn n(&self) -> usize {
        self.field.n()
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n() as f64
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn components(&self, m: usize) -> &[MultiIndex] {
        &self.components[m]
    }

    /// `φ_m^α`; `None` outside the table (including `φ_{−1} = 0`).
    pub fn phi(&self, m: usize, alpha: &MultiIndex) -> Option<&[f64]> {
        let i = *self.index.get(m)?.get(alpha)?;
        Some(&self.phi[m][i])
    }

    pub fn phi_order(&self, m: usize) -> &[Vec<f64>] {
        &self.phi[m]
    }

    pub fn phi_grid(&self, m: usize, alpha: &MultiIndex) -> Option<GridFunction> {
        self.phi(m, alpha).map(|v| GridFunction {
            d: self.dim(),
            n: self.n(),
            values: v.to_vec(),
        })
    }

    pub fn abar(&self, m: usize) -> Option<&SymTensor<f64>> {
        self.abar.get(m)
    }

    pub fn abar_all(&self) -> &[SymTensor<f64>] {
        &self.abar
    }

    pub fn stats(&self, m: usize) -> &[SolveStats] {
        &self.stats[m]
    }

    /// `max_α ‖φ_m^α‖_∞` for each order.
    pub fn sup_norms(&self) -> Vec<f64> {
        self.phi
            .iter()
            .map(|p| p.iter().map(|v| sup_norm(v)).fold(0.0, f64::max))
            .collect()
    }

    /// A copy in which every corrector of order above `k` is replaced by zero
    /// (the homogenized tensors are kept). Used as a deliberate defect.
    pub fn zeroed_above(&self, k: usize) -> Self {
        let mut t = self.clone();
        for m in k + 1..=self.m_max {
            for v in &mut t.phi[m] {
                v.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        t
    }
}

/// Runs the corrector recursion up to order `m_max`.
///
/// For `|α| = n` the component `φ_n^α` solves, in weak form,
/// `−∇·a∇φ_n = ∇·(aφ_{n−1}) + a∇φ_{n−1} + aφ_{n−2} − ā_n` (all products
/// symmetrized), with `ā_n` the mean of the non-divergence part.
pub fn compute_correctors(
    field: &CoefficientField,
    m_max: usize,
    tol: f64,
) -> Result<CorrectorTable> {
    if m_max < 1 {
        return contract("m_max must be at least 1");
    }
    if m_max > MAX_ORDER {
        return contract(format!("m_max must be at most {MAX_ORDER}"));
    }
    let d = field.dim();
    let solver = CellSolver::new(CellOperator::new(field)?, tol)?;
    let len = field.num_cells();
    let mut table = CorrectorTable::from_parts(
        field.clone(),
        0,
        tol,
        vec![vec![vec![1.0; len]]],
        vec![SymTensor::zeros(d, 0)],
    )?;
    for n in 1..=m_max {
        let comps = MultiIndex::all_of_order(d, n as u32);
        let results: Vec<Result<(f64, Vec<f64>, SolveStats)>> = comps
            .par_iter()
            .map(|alpha| corrector_component(&solver, &table, n, alpha))
            .collect();
        let mut abar = SymTensor::zeros(d, n as u32);
        let mut phis = Vec::with_capacity(comps.len());
        let mut stats = Vec::with_capacity(comps.len());
        for (alpha, r) in comps.iter().zip(results) {
            let (a, phi, st) = r?;
            abar.set(alpha.clone(), a)?;
            phis.push(phi);
            stats.push(st);
        }
        table.index.push(
            comps
                .iter()
                .cloned()
                .enumerate()
                .map(|(i, a)| (a, i))
                .collect(),
        );
        table.components.push(comps);
        table.phi.push(phis);
        table.abar.push(abar);
        table.stats.push(stats);
        table.m_max = n;
    }
    Ok(table)
}

/// Source and solve for a single component `φ_n^α`; returns `(ā_n^α, φ_n^α, stats)`.
fn corrector_component(
    solver: &CellSolver,
    table: &CorrectorTable,
    n: usize,
    alpha: &MultiIndex,
) -> Result<(f64, Vec<f64>, SolveStats)> {
    let op = solver.operator();
    let d = op.dim();
    let len = op.len();
    let nf = n as f64;
    let prev = |k: usize| -> Option<&[f64]> {
        let b = alpha.dec(k)?;
        table.phi(n - 1, &b)
    };

    let mut src = PeriodicSource::empty(d);
    let mut g = vec![0.0; len];

    for k in 0..d {
        let ak = alpha.get(k) as f64;
        if ak == 0.0 {
            continue;
        }
        let w = ak / nf;
        let phi = prev(k).ok_or_else(|| Error::TableTooShort {
            have: table.m_max(),
            need: n - 1,
        })?;

        // ∇·(aφ_{n−1}): diagonal flux on faces, off-diagonal at cells.
        let face: Vec<f64> = op
            .avg_fwd(phi, k)
            .iter()
            .zip(op.face_coeff(k))
            .map(|(v, a)| w * v * a)
            .collect();
        src.flux_face[k] = Some(face);
        for i in 0..d {
            if i == k {
                continue;
            }
            if let Some(a) = op.off_diag(i, k) {
                let f = src.flux_cell[i].get_or_insert_with(|| vec![0.0; len]);
                for c in 0..len {
                    f[c] += w * a[c] * phi[c];
                }
            }
        }

        // a∇φ_{n−1}
        for (gc, v) in g.iter_mut().zip(op.flux_cell(phi, k)) {
            *gc += w * v;
        }
    }

    // aφ_{n−2}
    if n >= 2 {
        let denom = nf * (nf - 1.0);
        for k in 0..d {
            for l in 0..d {
                let ak = alpha.get(k) as f64;
                let al = alpha.get(l) as f64 - if k == l { 1.0 } else { 0.0 };
                if ak <= 0.0 || al <= 0.0 {
                    continue;
                }
                let Some(b) = alpha.dec(k).and_then(|b| b.dec(l)) else {
                    continue;
                };
                let phi = table.phi(n - 2, &b).ok_or(Error::TableTooShort {
                    have: table.m_max(),
                    need: n - 2,
                })?;
                let w = ak * al / denom;
                for (gc, v) in g.iter_mut().zip(op.aw(phi, k, l)) {
                    *gc += w * v;
                }
            }
        }
    }

    let abar = mean(&g);
    g.iter_mut().for_each(|v| *v -= abar);
    src.scalar = Some(g);
    let (phi, stats) = solver.solve(&src)?;
    Ok((abar, phi, stats))
}

/// `ā` as a matrix, `M_ij = (ā_2)_{e_i+e_j}`, so that `ā_2 : ∇²p = tr(M ∇²p)`.
pub fn homogenized_matrix(table: &CorrectorTable) -> Result<DMatrix<f64>> {
    if table.m_max() < 2 {
        return contract("homogenized matrix needs m_max >= 2");
    }
    Ok(tensor2_to_matrix(table.abar(2).unwrap()))
}

pub fn tensor2_to_matrix(t: &SymTensor<f64>) -> DMatrix<f64> {
    let d = t.dim();
    DMatrix::from_fn(d, d, |i, j| {
        t.at(&MultiIndex::unit(d, i).add(&MultiIndex::unit(d, j)))
    })
}

pub fn matrix_to_tensor2(m: &DMatrix<f64>) -> SymTensor<f64> {
    let d = m.nrows();
    let mut t = SymTensor::zeros(d, 2);
    for i in 0..d {
        for j in i..d {
            let a = MultiIndex::unit(d, i).add(&MultiIndex::unit(d, j));
            t.set(a, 0.5 * (m[(i, j)] + m[(j, i)])).unwrap();
        }
    }
    t
}
