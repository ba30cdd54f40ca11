use num_rational::BigRational;

use crate::error::{contract, Result};
use crate::polyalg::multi_index::{count_of_order, MultiIndex};
use crate::polyalg::polynomial::Polynomial;
use crate::polyalg::scalar::Scalar;

/// `Δ(|x|^{2j} h) = c(j, n)·|x|^{2j-2} h` for `h` harmonic homogeneous of degree `n`.
fn commutator_const(j: u32, n: u32, d: usize) -> i64 {
    2 * j as i64 * (d as i64 + 2 * n as i64 + 2 * j as i64 - 2)
}

/// Splits a homogeneous polynomial of degree `m` into `p = Σ_k |x|^{2k} p_k`
/// with each `p_k` harmonic of degree `m − 2k`.
///
/// Peels from the top: `Δ^K p` only sees `p_K`, and so on downward.
pub fn harmonic_decompose<T: Scalar>(p: &Polynomial<T>) -> Result<Vec<Polynomial<T>>> {
    match p.degree() {
        None => Ok(vec![Polynomial::zero(p.dim())]),
        Some(m) => harmonic_decompose_deg(p, m),
    }
}

/// As [`harmonic_decompose`], with the degree given (needed for the zero polynomial).
pub fn harmonic_decompose_deg<T: Scalar>(p: &Polynomial<T>, m: u32) -> Result<Vec<Polynomial<T>>> {
    if !p.is_homogeneous() || p.degree().is_some_and(|deg| deg != m) {
        return contract(format!(
            "harmonic_decompose needs a homogeneous polynomial of degree {m}"
        ));
    }
    let d = p.dim();
    let kmax = m / 2;
    let mut parts = vec![Polynomial::zero(d); kmax as usize + 1];
    let mut rem = p.clone();
    for k in (0..=kmax).rev() {
        if rem.is_zero() {
            break;
        }
        let n = m - 2 * k;
        let mut lap = rem.clone();
        let mut c: i64 = 1;
        for i in 0..k {
            lap = lap.laplacian();
            c *= commutator_const(k - i, n, d);
        }
        let pk = lap.scale(&(T::one() / T::from_i64(c)));
        rem = &rem - &pk.mult_r2_pow(k);
        parts[k as usize] = pk;
    }
    debug_assert!(rem.is_zero());
    Ok(parts)
}

/// `b_k = (2k+2)(d+2m−2k)`.
pub fn b_coeff(k: u32, m: u32, d: usize) -> i64 {
    (2 * k as i64 + 2) * (d as i64 + 2 * m as i64 - 2 * k as i64)
}

/// The right inverse `S` of the Laplacian with range orthogonal to harmonic polynomials.
pub fn apply_s<T: Scalar>(p: &Polynomial<T>) -> Polynomial<T> {
    let d = p.dim();
    let mut out = Polynomial::zero(d);
    for (m, part) in p.homogeneous_parts() {
        let comps = harmonic_decompose_deg(&part, m).expect("homogeneous part");
        for (k, pk) in comps.iter().enumerate() {
            if pk.is_zero() {
                continue;
            }
            let k = k as u32;
            let t = pk
                .mult_r2_pow(k + 1)
                .scale(&(T::one() / T::from_i64(b_coeff(k, m, d))));
            out = &out + &t;
        }
    }
    out
}

pub fn is_harmonic<T: Scalar>(p: &Polynomial<T>) -> bool {
    p.laplacian().is_zero()
}

/// `dim ℋ*_n`: homogeneous harmonic polynomials of degree `n`.
pub fn harmonic_dim_homogeneous(d: usize, n: u32) -> usize {
    let total = count_of_order(d, n);
    if n >= 2 {
        total - count_of_order(d, n - 2)
    } else {
        total
    }
}

/// `dim ℋ_m = Σ_{n≤m} dim ℋ*_n`.
pub fn harmonic_dim(d: usize, m: u32) -> usize {
    (0..=m).map(|n| harmonic_dim_homogeneous(d, n)).sum()
}

/// An exact basis of `ℋ*_n`: harmonic projections of the monomials `x^α` with `α_1 ≤ 1`.
pub fn harmonic_basis_homogeneous(d: usize, n: u32) -> Vec<Polynomial<BigRational>> {
    let mut out = Vec::new();
    for a in MultiIndex::all_of_order(d, n) {
        if a.get(0) > 1 {
            continue;
        }
        let mono = Polynomial::monomial(a, BigRational::from_i64(1));
        let parts = harmonic_decompose_deg(&mono, n).expect("monomial is homogeneous");
        out.push(parts.into_iter().next().unwrap());
    }
    debug_assert_eq!(out.len(), harmonic_dim_homogeneous(d, n));
    out
}
