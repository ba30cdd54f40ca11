use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{OnceLock, RwLock};

use nalgebra::{DMatrix, SymmetricEigen};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::polyalg::multi_index::MultiIndex;
use crate::polyalg::polynomial::Polynomial;
use crate::polyalg::scalar::Scalar;

/// `Γ(n/2)` with its `√π` factor split off: returns `(q, has_sqrt_pi)` with
/// `Γ(n/2) = q·√π` when `n` is odd, `q` otherwise.
fn half_gamma(n: u32) -> (BigRational, bool) {
    assert!(n >= 1);
    let mut q = BigRational::one();
    if n % 2 == 0 {
        // Γ(k) = (k−1)!
        for i in 1..n / 2 {
            q *= BigRational::from_integer(BigInt::from(i));
        }
        (q, false)
    } else {
        // Γ(k+½) = (k−½)(k−3/2)…(½)·√π
        let mut x = n as i64 - 2;
        while x > 0 {
            q *= BigRational::new(BigInt::from(x), BigInt::from(2));
            x -= 2;
        }
        (q, true)
    }
}

/// `π^{⌊d/2⌋}`: every unit-ball moment in dimension `d` is this times a rational.
pub fn moment_scale(d: usize) -> f64 {
    PI.powi((d / 2) as i32)
}

fn rational_cache() -> &'static RwLock<HashMap<MultiIndex, BigRational>> {
    static CACHE: OnceLock<RwLock<HashMap<MultiIndex, BigRational>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

fn float_cache() -> &'static RwLock<HashMap<MultiIndex, f64>> {
    static CACHE: OnceLock<RwLock<HashMap<MultiIndex, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// `∫_{B_1} x^α dx / π^{⌊d/2⌋}`, exact.
///
/// `∫_{B_1} x^α = 2 Π Γ((α_i+1)/2) / (Γ((|α|+d)/2)·(|α|+d))`, zero if any `α_i` is odd.
pub fn unit_ball_moment_rational(alpha: &MultiIndex) -> BigRational {
    if alpha.entries().iter().any(|a| a % 2 == 1) {
        return BigRational::zero();
    }
    if let Some(v) = rational_cache().read().unwrap().get(alpha) {
        return v.clone();
    }
    let d = alpha.dim();
    let mut num = BigRational::from_integer(BigInt::from(2));
    let mut sqrt_pis = 0;
    for &a in alpha.entries() {
        let (g, s) = half_gamma(a + 1);
        num *= g;
        sqrt_pis += s as usize;
    }
    let total = alpha.order() + d as u32;
    let (den, s) = half_gamma(total);
    let sqrt_pis = sqrt_pis - s as usize;
    // Remaining √π count is d or d−1; their product is exactly π^{⌊d/2⌋}.
    debug_assert_eq!(sqrt_pis / 2, d / 2);
    let v = num / den / BigRational::from_integer(BigInt::from(total));
    // Idempotent fill: racing writers insert the same value.
    rational_cache()
        .write()
        .unwrap()
        .insert(alpha.clone(), v.clone());
    v
}

/// `∫_{B_1} x^α dx`.
pub fn unit_ball_moment(alpha: &MultiIndex) -> f64 {
    if alpha.entries().iter().any(|a| a % 2 == 1) {
        return 0.0;
    }
    if let Some(&v) = float_cache().read().unwrap().get(alpha) {
        return v;
    }
    let v = unit_ball_moment_rational(alpha).to_f64() * moment_scale(alpha.dim());
    float_cache().write().unwrap().insert(alpha.clone(), v);
    v
}

/// `∫_{B_r} x^α dx`.
pub fn ball_moment(alpha: &MultiIndex, r: f64) -> f64 {
    unit_ball_moment(alpha) * r.powi((alpha.order() as usize + alpha.dim()) as i32)
}

/// `|B_r|`.
pub fn ball_volume(d: usize, r: f64) -> f64 {
    ball_moment(&MultiIndex::zero(d), r)
}

fn check_radius(r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidRadius(r))
    }
}

fn check_dims<T, U>(p: &Polynomial<T>, q: &Polynomial<U>) -> Result<()>
where
    T: Scalar,
    U: Scalar,
{
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    Ok(())
}

/// `∫_{B_r} p q dx`.
pub fn l2_sq_inner_ball<T: Scalar>(p: &Polynomial<T>, q: &Polynomial<T>, r: f64) -> Result<f64> {
    check_radius(r)?;
    check_dims(p, q)?;
    let d = p.dim() as i32;
    let mut acc = 0.0;
    for (a, c) in p.terms() {
        let cf = c.to_f64();
        for (b, e) in q.terms() {
            let ab = a.add(b);
            let m = unit_ball_moment(&ab);
            if m != 0.0 {
                acc += cf * e.to_f64() * m * r.powi(ab.order() as i32 + d);
            }
        }
    }
    Ok(acc)
}

/// `∫_{B_r} p q dx / π^{⌊d/2⌋}`, exact for rational `r`.
pub fn l2_sq_inner_ball_exact(
    p: &Polynomial<BigRational>,
    q: &Polynomial<BigRational>,
    r: &BigRational,
) -> Result<BigRational> {
    if *r <= BigRational::zero() {
        return Err(Error::InvalidRadius(r.to_f64()));
    }
    check_dims(p, q)?;
    let d = p.dim() as i32;
    let mut acc = BigRational::zero();
    for (a, c) in p.terms() {
        for (b, e) in q.terms() {
            let ab = a.add(b);
            let m = unit_ball_moment_rational(&ab);
            if !m.is_zero() {
                acc += c * e * m * num_traits::pow(r.clone(), (ab.order() as i32 + d) as usize);
            }
        }
    }
    Ok(acc)
}

/// `‖p‖_{L²(B_r)}`.
pub fn l2_norm_ball<T: Scalar>(p: &Polynomial<T>, r: f64) -> Result<f64> {
    Ok(l2_sq_inner_ball(p, p, r)?.max(0.0).sqrt())
}

/// Volume-normalized `‖p‖_{\underline{L}²(B_r)}`.
pub fn l2_norm_ball_avg<T: Scalar>(p: &Polynomial<T>, r: f64) -> Result<f64> {
    Ok(l2_norm_ball(p, r)? / ball_volume(p.dim(), r).sqrt())
}

/// `‖∇p‖_{L²(B_r)}`.
pub fn l2_norm_grad_ball<T: Scalar>(p: &Polynomial<T>, r: f64) -> Result<f64> {
    let mut s = 0.0;
    for g in p.gradient() {
        s += l2_sq_inner_ball(&g, &g, r)?;
    }
    Ok(s.max(0.0).sqrt())
}

/// `E_r = {x : x·ā⁻¹x ≤ r²} = ā^{1/2} B_r`.
#[derive(Clone, Debug)]
pub struct Ellipsoid {
    abar: DMatrix<f64>,
    sqrt: DMatrix<f64>,
    inv: DMatrix<f64>,
    det: f64,
    r: f64,
}

impl Ellipsoid {
    pub fn new(abar: DMatrix<f64>, r: f64) -> Result<Self> {
        check_radius(r)?;
        let d = abar.nrows();
        if d == 0 || abar.ncols() != d {
            return Err(Error::NotSpd(format!(
                "{}x{} is not square",
                d,
                abar.ncols()
            )));
        }
        if abar.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotSpd("non-finite entry".into()));
        }
        let scale = abar.amax().max(1.0);
        if (&abar - abar.transpose()).amax() > 1e-12 * scale {
            return Err(Error::NotSpd("not symmetric".into()));
        }
        let eig = SymmetricEigen::new(abar.clone());
        let min = eig.eigenvalues.min();
        if min <= 1e-14 * scale {
            return Err(Error::NotSpd(format!("smallest eigenvalue {min:e}")));
        }
        let sqrt = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt))
            * eig.eigenvectors.transpose();
        let inv = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l))
            * eig.eigenvectors.transpose();
        let det = eig.eigenvalues.product();
        Ok(Ellipsoid {
            abar,
            sqrt,
            inv,
            det,
            r,
        })
    }

    pub fn ball(d: usize, r: f64) -> Result<Self> {
        Self::new(DMatrix::identity(d, d), r)
    }

    pub fn with_radius(&self, r: f64) -> Result<Self> {
        check_radius(r)?;
        Ok(Ellipsoid { r, ..self.clone() })
    }

    pub fn dim(&self) -> usize {
        self.abar.nrows()
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn abar(&self) -> &DMatrix<f64> {
        &self.abar
    }

    /// `ā^{1/2}`.
    pub fn sqrt_abar(&self) -> &DMatrix<f64> {
        &self.sqrt
    }

    pub fn abar_inv(&self) -> &DMatrix<f64> {
        &self.inv
    }

    pub fn det_abar(&self) -> f64 {
        self.det
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let v = nalgebra::DVector::from_column_slice(x);
        v.dot(&(&self.inv * &v)) <= self.r * self.r
    }

    /// `|E_r| = r^d det(ā)^{1/2} |B_1|`.
    pub fn volume(&self) -> f64 {
        self.det.sqrt() * ball_volume(self.dim(), self.r)
    }

    /// `p ∘ ā^{1/2}`, the pullback to the ball.
    pub fn pull_back(&self, p: &Polynomial<f64>) -> Result<Polynomial<f64>> {
        let d = self.dim();
        let rows: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| self.sqrt[(i, j)]).collect())
            .collect();
        p.change_of_variables(&rows)
    }
}

/// `‖p‖_{L²(E_r)} = det(ā)^{1/4} ‖p∘ā^{1/2}‖_{L²(B_r)}`.
pub fn l2_norm_ellipsoid<T: Scalar>(p: &Polynomial<T>, e: &Ellipsoid) -> Result<f64> {
    Ok(l2_sq_inner_ellipsoid(p, p, e)?.max(0.0).sqrt())
}

pub fn l2_sq_inner_ellipsoid<T: Scalar>(
    p: &Polynomial<T>,
    q: &Polynomial<T>,
    e: &Ellipsoid,
) -> Result<f64> {
    if p.dim() != e.dim() {
        return Err(Error::DimensionMismatch {
            expected: e.dim(),
            got: p.dim(),
        });
    }
    check_dims(p, q)?;
    let pp = e.pull_back(&p.to_f64())?;
    let qq = e.pull_back(&q.to_f64())?;
    Ok(e.det.sqrt() * l2_sq_inner_ball(&pp, &qq, e.r)?)
}

/// Volume-normalized `‖p‖_{\underline{L}²(E_r)}`.
pub fn l2_norm_ellipsoid_avg<T: Scalar>(p: &Polynomial<T>, e: &Ellipsoid) -> Result<f64> {
    Ok(l2_norm_ellipsoid(p, e)? / e.volume().sqrt())
}
