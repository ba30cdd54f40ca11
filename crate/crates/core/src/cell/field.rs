use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cell::grid::Grid;
use crate::error::{contract, Error, Result};

/// Relative slack when checking `I ≤ a ≤ ΛI`.
const ELLIPTICITY_SLACK: f64 = 1e-12;

/// Periodic symmetric-matrix field sampled at cell centers.
#[derive(Clone, Debug)]
pub struct CoefficientField {
    d: usize,
    n: usize,
    lambda: f64,
    /// `d×d` row-major per cell.
    values: Vec<f64>,
}

/// Named coefficient families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase", deny_unknown_fields)]
pub enum Builtin {
    /// `a ≡ A`, row-major `d×d`.
    Constant { matrix: Vec<f64> },
    /// `a = α(x_1) I` with `α = a` on `[0,½)` and `b` on `[½,1)`.
    Laminate { a: f64, b: f64 },
    /// `a = α(x) I`, `α = a` where `Σ_k ⌊2x_k⌋` is even, `b` elsewhere.
    Checkerboard { a: f64, b: f64 },
    /// `a = (c + sin 2πx_1 sin 2πx_2) I`.
    Trig { c: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub min_eig: f64,
    pub max_eig: f64,
    pub lambda: f64,
}

impl CoefficientField {
    /// Builds a field and checks symmetry and `I ≤ a ≤ ΛI` at every sample.
    pub fn new(d: usize, n: usize, lambda: f64, values: Vec<f64>) -> Result<Self> {
        let grid_len = n.checked_pow(d as u32).unwrap_or(usize::MAX);
        if values.len() != grid_len.saturating_mul(d * d) {
            return contract(format!(
                "coefficient field has {} values, expected {d}² per cell on {n}^{d} cells",
                values.len()
            ));
        }
        let f = CoefficientField {
            d,
            n,
            lambda,
            values,
        };
        validate_coefficients(&f)?;
        Ok(f)
    }

    /// As [`CoefficientField::new`] with `Λ` taken as the largest sampled eigenvalue.
    pub fn with_auto_lambda(d: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        let f = CoefficientField {
            d,
            n,
            lambda: f64::INFINITY,
            values,
        };
        let rep = validate_coefficients(&f)?;
        Self::new(d, n, rep.max_eig.max(1.0), f.values)
    }

    pub fn builtin(b: &Builtin, d: usize, n: usize) -> Result<Self> {
        let grid = Grid::new(d, n)?;
        let scalar_field = |alpha: &dyn Fn(&[f64]) -> f64| -> Vec<f64> {
            let mut v = vec![0.0; grid.len() * d * d];
            for idx in 0..grid.len() {
                let x = grid.center(idx);
                let s = alpha(&x[..d]);
                for i in 0..d {
                    v[idx * d * d + i * d + i] = s;
                }
            }
            v
        };
        let values = match b {
            Builtin::Constant { matrix } => {
                if matrix.len() != d * d {
                    return contract(format!("constant matrix needs {} entries", d * d));
                }
                matrix
                    .iter()
                    .copied()
                    .cycle()
                    .take(grid.len() * d * d)
                    .collect()
            }
            Builtin::Laminate { a, b } => {
                let (a, b) = (*a, *b);
                scalar_field(&|x| if x[0] < 0.5 { a } else { b })
            }
            Builtin::Checkerboard { a, b } => {
                let (a, b) = (*a, *b);
                scalar_field(&|x| {
                    let parity: usize = x.iter().map(|&t| (2.0 * t).floor() as usize).sum();
                    if parity % 2 == 0 {
                        a
                    } else {
                        b
                    }
                })
            }
            Builtin::Trig { c } => {
                if d < 2 {
                    return contract("trig field needs d >= 2");
                }
                let c = *c;
                scalar_field(&|x| c + (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin())
            }
        };
        Self::with_auto_lambda(d, n, values)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn num_cells(&self) -> usize {
        self.values.len() / (self.d * self.d)
    }

    /// `a_ij` at cell `idx`.
    pub fn entry(&self, idx: usize, i: usize, j: usize) -> f64 {
        self.values[idx * self.d * self.d + i * self.d + j]
    }

    /// `a_ij` over all cells.
    pub fn component(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.num_cells()).map(|c| self.entry(c, i, j)).collect()
    }

    /// Whether `a_ij ≡ 0` for all `i ≠ j`.
    pub fn is_diagonal(&self) -> bool {
        (0..self.num_cells())
            .all(|c| (0..self.d).all(|i| (0..self.d).all(|j| i == j || self.entry(c, i, j) == 0.0)))
    }

    /// Resamples a field on a finer grid (`n` must divide `n_new`) by injection.
    pub fn refine(&self, n_new: usize) -> Result<Self> {
        if n_new % self.n != 0 {
            return contract(format!("{} does not divide {n_new}", self.n));
        }
        let f = n_new / self.n;
        let src = Grid::new(self.d, self.n)?;
        let dst = Grid::new(self.d, n_new)?;
        let dd = self.d * self.d;
        let mut values = vec![0.0; dst.len() * dd];
        for idx in 0..dst.len() {
            let c = dst.coords(idx);
            let sc: Vec<usize> = c[..self.d].iter().map(|&x| x / f).collect();
            let s = src.index(&sc);
            values[idx * dd..(idx + 1) * dd].copy_from_slice(&self.values[s * dd..(s + 1) * dd]);
        }
        CoefficientField::new(self.d, n_new, self.lambda, values)
    }
}

/// Samplewise check of symmetry and `I ≤ a ≤ ΛI`.
pub fn validate_coefficients(f: &CoefficientField) -> Result<ValidationReport> {
    let d = f.d;
    if !(1..=3).contains(&d) {
        return contract(format!("dimension {d} not supported"));
    }
    if f.lambda.is_nan() || f.lambda < 1.0 {
        return contract(format!("ellipticity bound {} must be >= 1", f.lambda));
    }
    let grid = Grid::new(d, f.n)?;
    let mut min_eig = f64::INFINITY;
    let mut max_eig = f64::NEG_INFINITY;
    for idx in 0..grid.len() {
        let m = &f.values[idx * d * d..(idx + 1) * d * d];
        if m.iter().any(|v| !v.is_finite()) {
            return contract(format!(
                "non-finite coefficient at cell {:?}",
                &grid.coords(idx)[..d]
            ));
        }
        let scale = m.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        let mut diagonal = true;
        for i in 0..d {
            for j in 0..d {
                if (m[i * d + j] - m[j * d + i]).abs() > 1e-12 * scale {
                    return contract(format!(
                        "coefficient not symmetric at cell {:?}",
                        &grid.coords(idx)[..d]
                    ));
                }
                if i != j && m[i * d + j] != 0.0 {
                    diagonal = false;
                }
            }
        }
        let eigs: Vec<f64> = if diagonal {
            (0..d).map(|i| m[i * d + i]).collect()
        } else {
            SymmetricEigen::new(DMatrix::from_row_slice(d, d, m))
                .eigenvalues
                .iter()
                .copied()
                .collect()
        };
        let lo = eigs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo < 1.0 - ELLIPTICITY_SLACK || hi > f.lambda * (1.0 + ELLIPTICITY_SLACK) {
            let mut eigs = eigs;
            eigs.sort_by(|a, b| a.total_cmp(b));
            return Err(Error::Ellipticity {
                cell: grid.coords(idx)[..d].to_vec(),
                eigs,
                lambda: f.lambda,
            });
        }
        min_eig = min_eig.min(lo);
        max_eig = max_eig.max(hi);
    }
    Ok(ValidationReport {
        min_eig,
        max_eig,
        lambda: f.lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_passes() {
        let f = CoefficientField::builtin(
            &Builtin::Constant {
                matrix: vec![1.0, 0.0, 0.0, 1.0],
            },
            2,
            4,
        )
        .unwrap();
        let r = validate_coefficients(&f).unwrap();
        assert_eq!((r.min_eig, r.max_eig), (1.0, 1.0));
    }

    #[test]
    fn anisotropic_constant_passes() {
        let f = CoefficientField::new(2, 4, 5.0, [1.0, 0.0, 0.0, 5.0].repeat(16)).unwrap();
        let r = validate_coefficients(&f).unwrap();
        assert_eq!((r.min_eig, r.max_eig), (1.0, 5.0));
    }

    #[test]
    fn small_eigenvalue_is_rejected_with_cell() {
        let mut v = [1.0, 0.0, 0.0, 1.0].repeat(16);
        let idx = 4 + 2; // cell (1, 2)
        v[idx * 4] = 0.5;
        match CoefficientField::new(2, 4, 2.0, v) {
            Err(Error::Ellipticity { cell, eigs, .. }) => {
                assert_eq!(cell, vec![1, 2]);
                assert_eq!(eigs[0], 0.5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_large_eigenvalue_is_rejected() {
        assert!(CoefficientField::new(2, 4, 2.0, [1.0, 0.0, 0.0, 3.0].repeat(16)).is_err());
    }

    #[test]
    fn laminate_layout() {
        let f = CoefficientField::builtin(&Builtin::Laminate { a: 1.0, b: 2.0 }, 2, 4).unwrap();
        let g = Grid::new(2, 4).unwrap();
        assert_eq!(f.entry(g.index(&[1, 3]), 0, 0), 1.0);
        assert_eq!(f.entry(g.index(&[2, 0]), 1, 1), 2.0);
        assert_eq!(f.lambda(), 2.0);
    }

    #[test]
    fn checkerboard_layout_and_refinement() {
        let f = CoefficientField::builtin(&Builtin::Checkerboard { a: 1.0, b: 4.0 }, 2, 4).unwrap();
        let g = Grid::new(2, 4).unwrap();
        assert_eq!(f.entry(g.index(&[0, 0]), 0, 0), 1.0);
        assert_eq!(f.entry(g.index(&[0, 2]), 0, 0), 4.0);
        assert_eq!(f.entry(g.index(&[3, 3]), 0, 0), 1.0);
        let fine = f.refine(8).unwrap();
        let direct =
            CoefficientField::builtin(&Builtin::Checkerboard { a: 1.0, b: 4.0 }, 2, 8).unwrap();
        assert_eq!(fine.values(), direct.values());
    }

    #[test]
    fn trig_needs_large_enough_constant() {
        assert!(CoefficientField::builtin(&Builtin::Trig { c: 2.0 }, 2, 8).is_ok());
        assert!(CoefficientField::builtin(&Builtin::Trig { c: 1.5 }, 2, 8).is_err());
    }
}
