//! Conservative finite-difference operators on the periodic cell grid.
//!
//! Diagonal fluxes live on faces with harmonic averaging of `a_ii`; off-diagonal
//! fluxes use centered differences at cell centers. Every operator here is
//! paired with its discrete adjoint so that the bilinear form
//!
//! `B(u,v) = ⟨Σ_i aH_i D_i u D_i v + Σ_{i≠j} a_ij C_i u C_j v⟩`
//!
//! is exactly `⟨v, K u⟩`.

use crate::cell::field::CoefficientField;
use crate::cell::grid::{mean, Grid};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct CellOperator {
    grid: Grid,
    inv_h: f64,
    /// `aH_i` on the face between `c` and `c + e_i`.
    ah: Vec<Vec<f64>>,
    /// Nonzero off-diagonal entries `a_ij`, `i < j`.
    off: Vec<(usize, usize, Vec<f64>)>,
    /// Constant reference matrix for the spectral preconditioner, row-major.
    a_ref: Vec<f64>,
}

impl CellOperator {
    pub fn new(field: &CoefficientField) -> Result<Self> {
        let d = field.dim();
        let grid = Grid::new(d, field.n())?;
        let mut ah = Vec::with_capacity(d);
        for i in 0..d {
            let aii = field.component(i, i);
            let plus = grid.plus(i);
            ah.push(
                (0..grid.len())
                    .map(|c| {
                        let (a, b) = (aii[c], aii[plus[c] as usize]);
                        2.0 * a * b / (a + b)
                    })
                    .collect::<Vec<f64>>(),
            );
        }
        let mut off = Vec::new();
        for i in 0..d {
            for j in i + 1..d {
                let aij = field.component(i, j);
                if aij.iter().any(|&v| v != 0.0) {
                    off.push((i, j, aij));
                }
            }
        }
        let mut a_ref = vec![0.0; d * d];
        for i in 0..d {
            a_ref[i * d + i] = mean(&ah[i]);
        }
        for (i, j, v) in &off {
            let m = mean(v);
            a_ref[i * d + j] = m;
            a_ref[j * d + i] = m;
        }
        Ok(CellOperator {
            inv_h: field.n() as f64,
            grid,
            ah,
            off,
            a_ref,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn reference_matrix(&self) -> &[f64] {
        &self.a_ref
    }

    pub fn face_coeff(&self, i: usize) -> &[f64] {
        &self.ah[i]
    }

    /// `a_ij` for `i ≠ j` if not identically zero.
    pub fn off_diag(&self, i: usize, j: usize) -> Option<&[f64]> {
        let (a, b) = (i.min(j), i.max(j));
        self.off
            .iter()
            .find(|(p, q, _)| *p == a && *q == b)
            .map(|(_, _, v)| v.as_slice())
    }

    /// `D_i u = (u(c+e_i) − u(c))/h`, a face quantity.
    pub fn d_fwd(&self, u: &[f64], i: usize) -> Vec<f64> {
        let p = self.grid.plus(i);
        (0..u.len())
            .map(|c| (u[p[c] as usize] - u[c]) * self.inv_h)
            .collect()
    }

    /// `D_i^- f = (f(c) − f(c−e_i))/h`, face to cell.
    pub fn d_bwd(&self, f: &[f64], i: usize) -> Vec<f64> {
        let m = self.grid.minus(i);
        (0..f.len())
            .map(|c| (f[c] - f[m[c] as usize]) * self.inv_h)
            .collect()
    }

    /// `C_i u = (u(c+e_i) − u(c−e_i))/(2h)`.
    pub fn central(&self, u: &[f64], i: usize) -> Vec<f64> {
        let p = self.grid.plus(i);
        let m = self.grid.minus(i);
        let s = 0.5 * self.inv_h;
        (0..u.len())
            .map(|c| (u[p[c] as usize] - u[m[c] as usize]) * s)
            .collect()
    }

    /// Cell to face average along axis `i`.
    pub fn avg_fwd(&self, u: &[f64], i: usize) -> Vec<f64> {
        let p = self.grid.plus(i);
        (0..u.len())
            .map(|c| 0.5 * (u[c] + u[p[c] as usize]))
            .collect()
    }

    /// Face to cell average along axis `i`.
    pub fn avg_bwd(&self, f: &[f64], i: usize) -> Vec<f64> {
        let m = self.grid.minus(i);
        (0..f.len())
            .map(|c| 0.5 * (f[c] + f[m[c] as usize]))
            .collect()
    }

    /// `K u = −Σ_i D_i^-(aH_i D_i u) − Σ_{i≠j} C_j(a_ij C_i u)`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = u.len();
        let mut out = vec![0.0; n];
        let h2 = self.inv_h * self.inv_h;
        for i in 0..self.dim() {
            let p = self.grid.plus(i);
            let m = self.grid.minus(i);
            let ah = &self.ah[i];
            for c in 0..n {
                let mc = m[c] as usize;
                let fp = ah[c] * (u[p[c] as usize] - u[c]);
                let fm = ah[mc] * (u[c] - u[mc]);
                out[c] -= (fp - fm) * h2;
            }
        }
        for (i, j, a) in &self.off {
            for (x, y) in [(*i, *j), (*j, *i)] {
                let ci: Vec<f64> = self
                    .central(u, x)
                    .iter()
                    .zip(a)
                    .map(|(g, a)| g * a)
                    .collect();
                let cj = self.central(&ci, y);
                for c in 0..n {
                    out[c] -= cj[c];
                }
            }
        }
        out
    }

    /// `B(u, v)`.
    pub fn energy(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut terms = vec![0.0; u.len()];
        for i in 0..self.dim() {
            let du = self.d_fwd(u, i);
            let dv = self.d_fwd(v, i);
            for c in 0..u.len() {
                terms[c] += self.ah[i][c] * du[c] * dv[c];
            }
        }
        for (i, j, a) in &self.off {
            let ui = self.central(u, *i);
            let uj = self.central(u, *j);
            let vi = self.central(v, *i);
            let vj = self.central(v, *j);
            for c in 0..u.len() {
                terms[c] += a[c] * (ui[c] * vj[c] + uj[c] * vi[c]);
            }
        }
        mean(&terms)
    }

    /// Cell value of the flux `(a∇w)_k`: `avg_bwd(aH_k D_k w) + Σ_{j≠k} a_kj C_j w`.
    pub fn flux_cell(&self, w: &[f64], k: usize) -> Vec<f64> {
        let dk = self.d_fwd(w, k);
        let face: Vec<f64> = dk.iter().zip(&self.ah[k]).map(|(g, a)| g * a).collect();
        let mut out = self.avg_bwd(&face, k);
        for j in 0..self.dim() {
            if j == k {
                continue;
            }
            if let Some(a) = self.off_diag(k, j) {
                let cj = self.central(w, j);
                for c in 0..out.len() {
                    out[c] += a[c] * cj[c];
                }
            }
        }
        out
    }

    /// Cell value of `a_kl w`; the diagonal uses the face coefficient so that it
    /// pairs with the face flux of the adjoint equation.
    pub fn aw(&self, w: &[f64], k: usize, l: usize) -> Vec<f64> {
        if k == l {
            let f: Vec<f64> = self
                .avg_fwd(w, k)
                .iter()
                .zip(&self.ah[k])
                .map(|(x, a)| x * a)
                .collect();
            self.avg_bwd(&f, k)
        } else {
            match self.off_diag(k, l) {
                Some(a) => w.iter().zip(a).map(|(x, a)| x * a).collect(),
                None => vec![0.0; w.len()],
            }
        }
    }

    /// `⟨u a_kl w⟩` in the discrete form matching [`CellOperator::aw`].
    pub fn pair_aw(&self, u: &[f64], w: &[f64], k: usize, l: usize) -> f64 {
        if k == l {
            let uf = self.avg_fwd(u, k);
            let wf = self.avg_fwd(w, k);
            let t: Vec<f64> = (0..u.len())
                .map(|c| self.ah[k][c] * uf[c] * wf[c])
                .collect();
            mean(&t)
        } else {
            match self.off_diag(k, l) {
                Some(a) => {
                    let t: Vec<f64> = (0..u.len()).map(|c| a[c] * u[c] * w[c]).collect();
                    mean(&t)
                }
                None => 0.0,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::field::Builtin;
    use crate::cell::grid::mean_product;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn operator_is_adjoint_of_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let aniso = CoefficientField::builtin(
            &Builtin::Constant {
                matrix: vec![2.0, 0.5, 0.5, 1.5],
            },
            2,
            8,
        )
        .unwrap();
        let cb =
            CoefficientField::builtin(&Builtin::Checkerboard { a: 1.0, b: 4.0 }, 2, 8).unwrap();
        for f in [aniso, cb] {
            let op = CellOperator::new(&f).unwrap();
            let u = random(op.len(), &mut rng);
            let v = random(op.len(), &mut rng);
            let b = op.energy(&u, &v);
            assert!((b - mean_product(&v, &op.apply(&u))).abs() < 1e-10 * b.abs().max(1.0));
            assert!((b - op.energy(&v, &u)).abs() < 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn summation_by_parts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = CoefficientField::builtin(&Builtin::Laminate { a: 1.0, b: 2.0 }, 3, 4).unwrap();
        let op = CellOperator::new(&f).unwrap();
        let u = random(op.len(), &mut rng);
        let v = random(op.len(), &mut rng);
        for i in 0..3 {
            // ⟨v D_i^- w⟩ = −⟨D_i v · w⟩, ⟨v C_i w⟩ = −⟨C_i v · w⟩, ⟨avg_bwd f · v⟩ = ⟨f · avg_fwd v⟩
            let lhs = mean_product(&v, &op.d_bwd(&u, i));
            assert!((lhs + mean_product(&op.d_fwd(&v, i), &u)).abs() < 1e-12);
            let lhs = mean_product(&v, &op.central(&u, i));
            assert!((lhs + mean_product(&op.central(&v, i), &u)).abs() < 1e-12);
            let lhs = mean_product(&op.avg_bwd(&u, i), &v);
            assert!((lhs - mean_product(&u, &op.avg_fwd(&v, i))).abs() < 1e-12);
        }
    }

    #[test]
    fn constants_are_in_the_kernel() {
        let f = CoefficientField::builtin(&Builtin::Trig { c: 2.0 }, 2, 8).unwrap();
        let op = CellOperator::new(&f).unwrap();
        let one = vec![1.0; op.len()];
        assert!(op.apply(&one).iter().all(|v| v.abs() < 1e-12));
        assert!(op.flux_cell(&one, 0).iter().all(|v| v.abs() < 1e-12));
    }
}
