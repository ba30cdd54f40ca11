use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::cell::grid::{mean, Grid};
use crate::cell::operator::CellOperator;
use crate::error::{contract, Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;

/// Iteration cap per unit of resolution: `cap = 50·N`.
pub const ITERATIONS_PER_N: usize = 50;

/// Exact inverse of the constant-coefficient operator at the reference matrix,
/// applied in Fourier space; the zero mode is projected out.
pub struct SpectralPreconditioner {
    d: usize,
    n: usize,
    inv_symbol: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl SpectralPreconditioner {
    pub fn new(op: &CellOperator) -> Self {
        let grid = op.grid();
        let (d, n) = (grid.dim(), grid.n());
        let a = op.reference_matrix();
        let inv_h2 = (n * n) as f64;
        let inv_symbol = (0..grid.len())
            .map(|idx| {
                let k = grid.coords(idx);
                let mut s = 0.0;
                for i in 0..d {
                    let t = PI * k[i] as f64 / n as f64;
                    s += a[i * d + i] * 4.0 * t.sin().powi(2) * inv_h2;
                    for j in 0..d {
                        if j != i {
                            let u = 2.0 * PI * k[j] as f64 / n as f64;
                            s += a[i * d + j] * (2.0 * t).sin() * u.sin() * inv_h2;
                        }
                    }
                }
                if idx == 0 || s <= 0.0 {
                    0.0
                } else {
                    1.0 / s
                }
            })
            .collect();
        let mut planner = FftPlanner::new();
        SpectralPreconditioner {
            d,
            n,
            inv_symbol,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = r.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut buf, self.d, self.n, &self.forward);
        for (b, s) in buf.iter_mut().zip(&self.inv_symbol) {
            *b *= *s;
        }
        fft_nd(&mut buf, self.d, self.n, &self.inverse);
        let scale = 1.0 / buf.len() as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }
}

/// In-place separable FFT over all axes of a row-major `n^d` array.
fn fft_nd(buf: &mut [Complex64], d: usize, n: usize, fft: &Arc<dyn Fft<f64>>) {
    let len = buf.len();
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    // Last axis is contiguous.
    fft.process_with_scratch(buf, &mut scratch);
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..d.saturating_sub(1) {
        let stride = n.pow((d - 1 - axis) as u32);
        let block = stride * n;
        for outer in (0..len).step_by(block) {
            for inner in 0..stride {
                let start = outer + inner;
                for (j, l) in line.iter_mut().enumerate() {
                    *l = buf[start + j * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, l) in line.iter().enumerate() {
                    buf[start + j * stride] = *l;
                }
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let p: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    crate::cell::grid::pairwise_sum(&p)
}

/// Preconditioned conjugate gradient for `K u = b` on mean-zero functions.
pub fn pcg(
    op: &CellOperator,
    pre: &SpectralPreconditioner,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    let mut u = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((u, SolveStats::default()));
    }
    let mut r = b.to_vec();
    let mut z = pre.apply(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut history = Vec::new();
    for it in 1..=max_iter {
        let kp = op.apply(&p);
        let pkp = dot(&p, &kp);
        if pkp <= 0.0 {
            return Err(Error::NotConverged {
                iterations: it,
                last: history.last().copied().unwrap_or(1.0),
                history,
            });
        }
        let alpha = rz / pkp;
        for i in 0..n {
            u[i] += alpha * p[i];
            r[i] -= alpha * kp[i];
        }
        let rel = dot(&r, &r).sqrt() / bnorm;
        history.push(rel);
        if rel <= tol {
            let m = mean(&u);
            u.iter_mut().for_each(|v| *v -= m);
            return Ok((
                u,
                SolveStats {
                    iterations: it,
                    relative_residual: rel,
                },
            ));
        }
        z = pre.apply(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        last: history.last().copied().unwrap_or(1.0),
        history,
    })
}

/// Right-hand side of the weak cell problem
/// `B(φ, v) = −⟨∇v · F⟩ + ⟨v g⟩` for all periodic `v`.
#[derive(Clone, Debug, Default)]
pub struct PeriodicSource {
    /// `F_i` on the faces `c + ½e_i` (diagonal part of the flux).
    pub flux_face: Vec<Option<Vec<f64>>>,
    /// `F_i` at cell centers (off-diagonal part, differenced centrally).
    pub flux_cell: Vec<Option<Vec<f64>>>,
    /// `g`; must have zero discrete mean.
    pub scalar: Option<Vec<f64>>,
}

impl PeriodicSource {
    pub fn empty(d: usize) -> Self {
        PeriodicSource {
            flux_face: vec![None; d],
            flux_cell: vec![None; d],
            scalar: None,
        }
    }

    /// Discrete right-hand side `Σ D_i^- F^face_i + Σ C_i F^cell_i + g`.
    pub fn assemble(&self, op: &CellOperator) -> Result<Vec<f64>> {
        let n = op.len();
        let d = op.dim();
        if self.flux_face.len() > d || self.flux_cell.len() > d {
            return contract("flux source has more components than dimensions");
        }
        let mut b = vec![0.0; n];
        let check = |v: &Vec<f64>| -> Result<()> {
            if v.len() != n {
                return contract(format!("source has {} values, grid has {n}", v.len()));
            }
            Ok(())
        };
        for (i, f) in self.flux_face.iter().enumerate() {
            if let Some(f) = f {
                check(f)?;
                for (bc, v) in b.iter_mut().zip(op.d_bwd(f, i)) {
                    *bc += v;
                }
            }
        }
        for (i, f) in self.flux_cell.iter().enumerate() {
            if let Some(f) = f {
                check(f)?;
                for (bc, v) in b.iter_mut().zip(op.central(f, i)) {
                    *bc += v;
                }
            }
        }
        if let Some(g) = &self.scalar {
            check(g)?;
            let m = mean(g);
            let scale = g.iter().fold(1.0f64, |s, v| s.max(v.abs()));
            if m.abs() > 1e-12 * scale {
                return Err(Error::IncompatibleSource(m));
            }
            for (bc, v) in b.iter_mut().zip(g) {
                *bc += v;
            }
        }
        // Remove the rounding-level mean so the system is consistent.
        let m = mean(&b);
        b.iter_mut().for_each(|v| *v -= m);
        Ok(b)
    }
}

/// Reusable solver state for one coefficient field.
pub struct CellSolver {
    op: CellOperator,
    pre: SpectralPreconditioner,
    tol: f64,
    max_iter: usize,
}

impl CellSolver {
    pub fn new(op: CellOperator, tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol < 1.0) {
            return contract(format!("solver tolerance {tol} must be in (0, 1)"));
        }
        let pre = SpectralPreconditioner::new(&op);
        let max_iter = ITERATIONS_PER_N * op.grid().n();
        Ok(CellSolver {
            op,
            pre,
            tol,
            max_iter,
        })
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn operator(&self) -> &CellOperator {
        &self.op
    }

    pub fn grid(&self) -> &Grid {
        self.op.grid()
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Mean-zero `φ` with `B(φ, v) = −⟨∇v·F⟩ + ⟨v g⟩`.
    pub fn solve(&self, src: &PeriodicSource) -> Result<(Vec<f64>, SolveStats)> {
        let b = src.assemble(&self.op)?;
        pcg(&self.op, &self.pre, &b, self.tol, self.max_iter)
    }
}

/// One-shot convenience wrapper around [`CellSolver`].
pub fn solve_periodic(
    field: &crate::cell::field::CoefficientField,
    src: &PeriodicSource,
    tol: f64,
) -> Result<Vec<f64>> {
    let solver = CellSolver::new(CellOperator::new(field)?, tol)?;
    Ok(solver.solve(src)?.0)
}
