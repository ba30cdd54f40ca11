use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{contract, Error, Result};
use crate::polyalg::multi_index::MultiIndex;
use crate::polyalg::scalar::Scalar;
use crate::polyalg::tensor::SymTensor;

/// Sparse multivariate polynomial in `d` variables. Zero coefficients are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial<T> {
    dim: usize,
    terms: BTreeMap<MultiIndex, T>,
}

impl<T: Scalar> Polynomial<T> {
    pub fn zero(dim: usize) -> Self {
        assert!(dim >= 1, "polynomials need d >= 1");
        Polynomial {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: T) -> Self {
        Self::monomial(MultiIndex::zero(dim), c)
    }

    pub fn monomial(alpha: MultiIndex, c: T) -> Self {
        let mut p = Self::zero(alpha.dim());
        p.add_term(alpha, c);
        p
    }

    /// The coordinate function `x_i`.
    pub fn var(dim: usize, i: usize) -> Self {
        Self::monomial(MultiIndex::unit(dim, i), T::one())
    }

    /// `|x|²`.
    pub fn r2(dim: usize) -> Self {
        let mut p = Self::zero(dim);
        for i in 0..dim {
            let mut a = vec![0; dim];
            a[i] = 2;
            p.add_term(MultiIndex::new(a), T::one());
        }
        p
    }

    pub fn from_terms(
        dim: usize,
        terms: impl IntoIterator<Item = (MultiIndex, T)>,
    ) -> Result<Self> {
        let mut p = Self::zero(dim);
        for (a, c) in terms {
            if a.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: a.dim(),
                });
            }
            p.add_term(a, c);
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Degree, `None` for the zero polynomial (degree −∞).
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|a| a.order()).max()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &T)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> T {
        self.terms.get(alpha).cloned().unwrap_or_else(T::zero)
    }

    pub fn add_term(&mut self, alpha: MultiIndex, c: T) {
        debug_assert_eq!(alpha.dim(), self.dim);
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&alpha) {
            Some(v) => {
                let s = v.clone() + c;
                if s.is_zero() {
                    self.terms.remove(&alpha);
                } else {
                    *v = s;
                }
            }
            None => {
                self.terms.insert(alpha, c);
            }
        }
    }

    /// Homogeneous iff every term has the same order; zero counts as homogeneous.
    pub fn is_homogeneous(&self) -> bool {
        let mut orders = self.terms.keys().map(|a| a.order());
        match orders.next() {
            None => true,
            Some(m) => orders.all(|o| o == m),
        }
    }

    pub fn homogeneous_part(&self, m: u32) -> Self {
        Polynomial {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .filter(|(a, _)| a.order() == m)
                .map(|(a, c)| (a.clone(), c.clone()))
                .collect(),
        }
    }

    /// Nonzero homogeneous parts keyed by degree.
    pub fn homogeneous_parts(&self) -> BTreeMap<u32, Self> {
        let mut out: BTreeMap<u32, Self> = BTreeMap::new();
        for (a, c) in &self.terms {
            out.entry(a.order())
                .or_insert_with(|| Self::zero(self.dim))
                .terms
                .insert(a.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, c: &T) -> Self {
        if c.is_zero() {
            return Self::zero(self.dim);
        }
        Polynomial {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|(a, v)| (a.clone(), v.clone() * c.clone()))
                .collect(),
        }
    }

    pub fn map_coeffs<U: Scalar>(&self, f: impl Fn(&T) -> U) -> Polynomial<U> {
        let mut p = Polynomial::zero(self.dim);
        for (a, c) in &self.terms {
            p.add_term(a.clone(), f(c));
        }
        p
    }

    pub fn to_f64(&self) -> Polynomial<f64> {
        self.map_coeffs(|c| c.to_f64())
    }

    /// `∂p/∂x_i`.
    pub fn derivative(&self, i: usize) -> Self {
        let mut p = Self::zero(self.dim);
        for (a, c) in &self.terms {
            let e = a.get(i);
            if e > 0 {
                p.add_term(a.dec(i).unwrap(), c.clone() * T::from_i64(e as i64));
            }
        }
        p
    }

    /// `∂^β p`.
    pub fn derivative_multi(&self, beta: &MultiIndex) -> Self {
        let mut p = Self::zero(self.dim);
        for (a, c) in &self.terms {
            if let Some(rest) = a.checked_sub(beta) {
                let mut f: u128 = 1;
                for (&ai, &bi) in a.entries().iter().zip(beta.entries()) {
                    for k in 0..bi {
                        f *= (ai - k) as u128;
                    }
                }
                p.add_term(rest, c.clone() * T::from_u128(f));
            }
        }
        p
    }

    pub fn gradient(&self) -> Vec<Self> {
        (0..self.dim).map(|i| self.derivative(i)).collect()
    }

    /// `∇^n p` as a tensor whose entries are the polynomials `∂^α p`, `|α| = n`.
    pub fn grad_tensor(&self, n: u32) -> SymTensor<Polynomial<T>> {
        let mut t = SymTensor::empty(self.dim, n);
        for a in MultiIndex::all_of_order(self.dim, n) {
            let da = self.derivative_multi(&a);
            if !da.is_zero() {
                t.set(a, da).expect("index has the right order");
            }
        }
        t
    }

    /// `∇^n p(x)` as a numeric tensor.
    pub fn grad_tensor_at(&self, n: u32, x: &[f64]) -> SymTensor<f64> {
        self.grad_tensor(n).map(|q| q.eval_f64(x))
    }

    pub fn laplacian(&self) -> Self {
        let mut p = Self::zero(self.dim);
        for (a, c) in &self.terms {
            for i in 0..self.dim {
                let e = a.get(i);
                if e >= 2 {
                    let mut b = a.entries().to_vec();
                    b[i] -= 2;
                    p.add_term(
                        MultiIndex::new(b),
                        c.clone() * T::from_i64((e * (e - 1)) as i64),
                    );
                }
            }
        }
        p
    }

    /// `|x|² p`.
    pub fn mult_r2(&self) -> Self {
        let mut p = Self::zero(self.dim);
        for (a, c) in &self.terms {
            for i in 0..self.dim {
                let mut b = a.entries().to_vec();
                b[i] += 2;
                p.add_term(MultiIndex::new(b), c.clone());
            }
        }
        p
    }

    /// `|x|^{2k} p`.
    pub fn mult_r2_pow(&self, k: u32) -> Self {
        (0..k).fold(self.clone(), |acc, _| acc.mult_r2())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut p = Self::zero(self.dim);
        for (a, c) in &self.terms {
            for (b, e) in &other.terms {
                p.add_term(a.add(b), c.clone() * e.clone());
            }
        }
        p
    }

    pub fn eval(&self, x: &[T]) -> T {
        let mut acc = T::zero();
        for (a, c) in &self.terms {
            let mut v = c.clone();
            for (i, &e) in a.entries().iter().enumerate() {
                for _ in 0..e {
                    v = v * x[i].clone();
                }
            }
            acc = acc + v;
        }
        acc
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(a, c)| c.to_f64() * a.monomial_at(x))
            .sum()
    }

    /// `x ↦ p(Lx)`, expanded.
    pub fn change_of_variables(&self, l: &[Vec<T>]) -> Result<Self> {
        let d = self.dim;
        if l.len() != d || l.iter().any(|row| row.len() != d) {
            return contract(format!("change of variables needs a {d}x{d} matrix"));
        }
        if determinant(l).is_zero() {
            return Err(Error::Singular);
        }
        // (Lx)_i as linear polynomials, and their powers on demand.
        let lin: Vec<Self> = l
            .iter()
            .map(|row| {
                let mut p = Self::zero(d);
                for (j, c) in row.iter().enumerate() {
                    p.add_term(MultiIndex::unit(d, j), c.clone());
                }
                p
            })
            .collect();
        let max_deg = self.degree().unwrap_or(0) as usize;
        let mut powers: Vec<Vec<Self>> = Vec::with_capacity(d);
        for li in &lin {
            let mut pw = vec![Self::constant(d, T::one())];
            for k in 1..=max_deg {
                let next = pw[k - 1].mul(li);
                pw.push(next);
            }
            powers.push(pw);
        }
        let mut out = Self::zero(d);
        for (a, c) in &self.terms {
            let mut term = Self::constant(d, c.clone());
            for (i, &e) in a.entries().iter().enumerate() {
                if e > 0 {
                    term = term.mul(&powers[i][e as usize]);
                }
            }
            out = &out + &term;
        }
        Ok(out)
    }
}

/// Determinant by fraction-free-enough Gaussian elimination with magnitude pivoting.
pub fn determinant<T: Scalar>(m: &[Vec<T>]) -> T {
    let n = m.len();
    let mut a: Vec<Vec<T>> = m.to_vec();
    let mut det = T::one();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col]
                .magnitude()
                .partial_cmp(&a[j][col].magnitude())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let Some(p) = pivot else { return T::zero() };
        if a[p][col].is_zero() || (!T::EXACT && a[p][col].magnitude() < 1e-300) {
            return T::zero();
        }
        if p != col {
            a.swap(p, col);
            det = T::zero() - det;
        }
        let pv = a[col][col].clone();
        det = det * pv.clone();
        for r in col + 1..n {
            let f = a[r][col].clone() / pv.clone();
            if f.is_zero() {
                continue;
            }
            for c in col..n {
                let v = a[col][c].clone() * f.clone();
                a[r][c] = a[r][c].clone() - v;
            }
        }
    }
    det
}

/// `⟨p, q⟩_ℙ = Σ_α α! p_α q_α`.
pub fn poly_inner<T: Scalar>(p: &Polynomial<T>, q: &Polynomial<T>) -> Result<T> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    let mut acc = T::zero();
    for (a, c) in p.terms() {
        if let Some(e) = q.terms.get(a) {
            acc = acc + T::from_u128(a.factorial_u128()) * c.clone() * e.clone();
        }
    }
    Ok(acc)
}

/// `‖p‖_ℙ`.
pub fn poly_norm<T: Scalar>(p: &Polynomial<T>) -> f64 {
    poly_inner(p, p).map(|v| v.to_f64().sqrt()).unwrap_or(0.0)
}

impl<T: Scalar> Add for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn add(self, rhs: &Polynomial<T>) -> Polynomial<T> {
        assert_eq!(
            self.dim, rhs.dim,
            "adding polynomials of different dimension"
        );
        let mut out = self.clone();
        for (a, c) in &rhs.terms {
            out.add_term(a.clone(), c.clone());
        }
        out
    }
}

impl<T: Scalar> Sub for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn sub(self, rhs: &Polynomial<T>) -> Polynomial<T> {
        assert_eq!(
            self.dim, rhs.dim,
            "subtracting polynomials of different dimension"
        );
        let mut out = self.clone();
        for (a, c) in &rhs.terms {
            out.add_term(a.clone(), T::zero() - c.clone());
        }
        out
    }
}

impl<T: Scalar> Neg for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn neg(self) -> Polynomial<T> {
        self.scale(&(T::zero() - T::one()))
    }
}

impl<T: Scalar> Mul for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn mul(self, rhs: &Polynomial<T>) -> Polynomial<T> {
        Polynomial::mul(self, rhs)
    }
}
