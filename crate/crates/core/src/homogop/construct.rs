use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::error::{contract, Result};
use crate::homogop::operator::{
    apply_a, contract_gradient, tensor_avatar, tensor_from_avatar, HomogenizedOperator,
};
use crate::polyalg::harmonic::{apply_s, harmonic_basis_homogeneous, harmonic_dim};
use crate::polyalg::json::polynomial_real_to_json;
use crate::polyalg::norms::{l2_norm_ellipsoid, l2_sq_inner_ball, Ellipsoid};
use crate::polyalg::polynomial::Polynomial;
use crate::polyalg::scalar::Scalar;
use crate::polyalg::tensor::SymTensor;
use crate::polyalg::Rational;

/// An `𝒜`-harmonic polynomial `q` together with the harmonic seed it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct AHarmonicPolynomial<T> {
    pub q: Polynomial<T>,
    pub seed: Polynomial<T>,
    pub op: HomogenizedOperator<T>,
}

impl<T: Scalar> AHarmonicPolynomial<T> {
    pub fn degree(&self) -> Option<u32> {
        self.q.degree()
    }

    pub fn to_f64(&self) -> AHarmonicPolynomial<f64> {
        AHarmonicPolynomial {
            q: self.q.to_f64(),
            seed: self.seed.to_f64(),
            op: self.op.to_f64(),
        }
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc {
            q: serde_json::Value,
            seed: serde_json::Value,
        }
        let doc = Doc {
            q: serde_json::from_str(&polynomial_real_to_json(&self.q)).unwrap(),
            seed: serde_json::from_str(&polynomial_real_to_json(&self.seed)).unwrap(),
        };
        serde_json::to_string_pretty(&doc).expect("serializable")
    }
}

/// The recursion `q_0 = p`, `p_k = Σ_{j=2}^{k+1} ā_{2j} : ∇^{2j} q_{k+1−j}`,
/// `q_k = −S(p_k)`, in coordinates where `ā_2 = I`. Returns `Σ_k q_k`.
fn recursion<T: Scalar>(higher: &[(u32, SymTensor<T>)], p: &Polynomial<T>) -> Polynomial<T> {
    let d = p.dim();
    let tensor = |j: u32| higher.iter().find(|(o, _)| *o == 2 * j).map(|(_, t)| t);
    let mut qs = vec![p.clone()];
    let mut q = p.clone();
    let max_k = p.degree().unwrap_or(0) as usize / 2 + 1;
    for k in 1..=max_k {
        let mut pk = Polynomial::zero(d);
        for j in 2..=(k as u32 + 1) {
            if let Some(t) = tensor(j) {
                pk = &pk + &contract_gradient(t, &qs[k + 1 - j as usize]);
            }
        }
        let qk = -&apply_s(&pk);
        q = &q + &qk;
        qs.push(qk);
    }
    q
}

fn higher_tensors<T: Scalar>(op: &HomogenizedOperator<T>) -> Vec<(u32, SymTensor<T>)> {
    op.tensors()
        .filter(|t| t.order() >= 4)
        .map(|t| (t.order(), t.clone()))
        .collect()
}

/// Exact construction; the operator must have `ā_2 = I` and the seed must be harmonic.
pub fn build_a_harmonic_exact(
    op: &HomogenizedOperator<Rational>,
    p: &Polynomial<Rational>,
) -> Result<AHarmonicPolynomial<Rational>> {
    if !op.is_normalized() {
        return contract("the exact construction requires a_2 = I; use the floating-point path");
    }
    if !p.laplacian().is_zero() {
        return contract("seed is not harmonic");
    }
    Ok(AHarmonicPolynomial {
        q: recursion(&higher_tensors(op), p),
        seed: p.clone(),
        op: op.clone(),
    })
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// `ā^{1/2}` and `ā^{−1/2}` of an SPD matrix.
pub fn sqrt_and_inverse(abar: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let eig = nalgebra::SymmetricEigen::new(abar.clone());
    let v = &eig.eigenvectors;
    let s = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let si = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    (v * s * v.transpose(), v * si * v.transpose())
}

/// Largest coefficient magnitude.
fn coeff_scale(p: &Polynomial<f64>) -> f64 {
    p.terms().map(|(_, c)| c.abs()).fold(0.0, f64::max)
}

/// `|𝒜q|` relative to the triangle-inequality bound
/// `max_k Σ_{|β|=2k} C(2k,β)|(ā_{2k})_β|·|∂^β q|` (coefficient maxima), so that
/// cancellation down to rounding reads as ~1e−16 at every degree.
pub fn a_harmonic_defect(op: &HomogenizedOperator<f64>, q: &Polynomial<f64>) -> Result<f64> {
    let total = coeff_scale(&apply_a(op, q)?);
    let scale = op
        .tensors()
        .map(|t| {
            t.iter()
                .map(|(beta, c)| {
                    beta.multinomial() as f64 * c.abs() * coeff_scale(&q.derivative_multi(beta))
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    Ok(if scale == 0.0 { 0.0 } else { total / scale })
}

/// Floating-point construction for a general `ā_2`: conjugate by `ā^{1/2}`,
/// run the recursion, and map back. The seed must satisfy `∇·ā∇p = 0`.
pub fn build_a_harmonic(
    op: &HomogenizedOperator<f64>,
    p: &Polynomial<f64>,
) -> Result<AHarmonicPolynomial<f64>> {
    let (l, li) = sqrt_and_inverse(&op.abar_matrix());
    let (l_rows, li_rows) = (matrix_rows(&l), matrix_rows(&li));
    let pt = p.change_of_variables(&l_rows)?;
    let lap = pt.laplacian();
    if coeff_scale(&lap) > 1e-9 * coeff_scale(&pt).max(f64::MIN_POSITIVE) {
        return contract("seed is not a-bar-harmonic");
    }
    let higher = higher_tensors(op)
        .into_iter()
        .map(|(o, t)| {
            Ok((
                o,
                tensor_from_avatar(&tensor_avatar(&t).change_of_variables(&li_rows)?, o)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let qt = recursion(&higher, &pt);
    Ok(AHarmonicPolynomial {
        q: qt.change_of_variables(&li_rows)?,
        seed: p.clone(),
        op: op.clone(),
    })
}

/// `(seed, ‖q − seed‖_{L²(E_r)} / ‖q‖_{L²(E_r)})`, `E_r` built from the operator's `ā`.
pub fn harmonic_approximation(
    q: &AHarmonicPolynomial<f64>,
    r: f64,
) -> Result<(Polynomial<f64>, f64)> {
    let e = Ellipsoid::new(q.op.abar_matrix(), r)?;
    let diff = &q.q - &q.seed;
    let nq = l2_norm_ellipsoid(&q.q, &e)?;
    let rel = if diff.is_zero() {
        0.0
    } else {
        l2_norm_ellipsoid(&diff, &e)? / nq
    };
    Ok((q.seed.clone(), rel))
}

/// `dim 𝔸̄_m = dim ℋ_m`.
pub fn a_harmonic_dim(d: usize, m: u32) -> usize {
    harmonic_dim(d, m)
}

/// Homogeneous harmonic polynomials of degree `n`, orthonormal in `L²(B_1)`.
pub fn orthonormal_harmonic_basis(d: usize, n: u32) -> Result<Vec<Polynomial<f64>>> {
    let raw: Vec<Polynomial<f64>> = harmonic_basis_homogeneous(d, n)
        .iter()
        .map(|p| p.to_f64())
        .collect();
    let mut out: Vec<Polynomial<f64>> = Vec::with_capacity(raw.len());
    for p in raw {
        let mut v = p;
        // Two passes of modified Gram–Schmidt.
        for _ in 0..2 {
            for b in &out {
                let c = l2_sq_inner_ball(&v, b, 1.0)?;
                v = &v - &b.scale(&c);
            }
        }
        let norm = l2_sq_inner_ball(&v, &v, 1.0)?.sqrt();
        out.push(v.scale(&(1.0 / norm)));
    }
    Ok(out)
}

/// A random `ā`-harmonic homogeneous seed of degree `n`: coefficients uniform in
/// `[−1, 1]` on a `B_1`-orthonormal harmonic basis, pulled back by `ā^{−1/2}`.
pub fn random_seed(abar: &DMatrix<f64>, n: u32, rng: &mut impl Rng) -> Result<Polynomial<f64>> {
    let d = abar.nrows();
    let basis = orthonormal_harmonic_basis(d, n)?;
    let mut p = Polynomial::zero(d);
    for b in &basis {
        let c: f64 = rng.gen_range(-1.0..=1.0);
        p = &p + &b.scale(&c);
    }
    let (_, li) = sqrt_and_inverse(abar);
    p.change_of_variables(&matrix_rows(&li))
}

/// Images of a basis of `ℋ_m` (pulled back to `ā`-harmonic seeds) under the construction.
pub fn a_harmonic_basis(
    op: &HomogenizedOperator<f64>,
    m: u32,
) -> Result<Vec<AHarmonicPolynomial<f64>>> {
    let (_, li) = sqrt_and_inverse(&op.abar_matrix());
    let li = matrix_rows(&li);
    let mut out = Vec::new();
    for n in 0..=m {
        for h in harmonic_basis_homogeneous(op.dim(), n) {
            let seed = h.to_f64().change_of_variables(&li)?;
            out.push(build_a_harmonic(op, &seed)?);
        }
    }
    Ok(out)
}

/// Numerical rank of the coefficient vectors of a family of polynomials.
pub fn polynomial_rank(polys: &[Polynomial<f64>], rel_tol: f64) -> usize {
    use std::collections::BTreeSet;
    let keys: Vec<_> = polys
        .iter()
        .flat_map(|p| p.terms().map(|(a, _)| a.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if keys.is_empty() {
        return 0;
    }
    let m = DMatrix::from_fn(polys.len(), keys.len(), |i, j| polys[i].coeff(&keys[j]));
    let sv = m.svd(false, false).singular_values;
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}
