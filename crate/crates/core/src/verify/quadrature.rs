//! Midpoint quadrature over ellipsoids on lattices of spacing `1/n`.
//!
//! Sample points are `x = (i + ½)/n`, `i ∈ ℤ^d` (the cell centres of the
//! periodic grid repeated over all of space). A point whose box crosses the
//! boundary of `E_s` is weighted by the volume fraction of its box under the
//! tangent plane; all other points have weight 0 or 1. The error estimate
//! compares with the same rule on the sub-lattice of stride 2.
//!
//! Integrands that are, at the nodes of residue class `j`, a polynomial
//! `Σ_a w_a(j) c_a(x)` are summed through lattice power moments
//! `S_j(γ) = Σ_k weight(x) (x/s)^γ`, which makes radii in the thousands cheap.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::polyalg::multi_index::factorial;
use crate::polyalg::norms::Ellipsoid;
use crate::polyalg::polynomial::Polynomial;

pub const MIN_SAMPLES_PER_UNIT: usize = 8;
/// Refuse brute-force quadratures with more sample points than this.
pub const MAX_POINTS: f64 = 4e9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadratureResult {
    /// Volume-normalized norm `(|E|^{−1}∫_E f²)^{1/2}`.
    pub value: f64,
    /// `∫_E f²`.
    pub sq: f64,
    /// `|value − value_coarse|`.
    pub error: f64,
    /// Normalized norm from the stride-2 rule.
    pub coarse: f64,
}

/// Fraction of the box `x + [−δ/2, δ/2]^d` lying in `{y : n·(y − x) ≤ t}`,
/// given `a_i = |n_i| δ` and the box side `δ`.
pub fn box_fraction(t: f64, a: &[f64], delta: f64) -> f64 {
    let a: Vec<f64> = a.iter().cloned().filter(|&v| v > 1e-3 * delta).collect();
    let k = a.len();
    let half: f64 = a.iter().sum::<f64>() / 2.0;
    if t >= half {
        return 1.0;
    }
    if t <= -half {
        return 0.0;
    }
    let tp = t + half;
    let mut acc = 0.0;
    for mask in 0u32..(1 << k) {
        let mut s = 0.0;
        for (i, ai) in a.iter().enumerate() {
            if mask & (1 << i) != 0 {
                s += ai;
            }
        }
        let v = (tp - s).max(0.0).powi(k as i32);
        if mask.count_ones() % 2 == 0 {
            acc += v;
        } else {
            acc -= v;
        }
    }
    let denom = factorial(k as u32) * a.iter().product::<f64>();
    (acc / denom).clamp(0.0, 1.0)
}

/// Geometry shared by both quadrature paths.
#[derive(Clone, Debug)]
struct Geometry {
    d: usize,
    m: DMatrix<f64>,
    s: f64,
    /// Half-extent of `E_s` along each axis.
    ext: Vec<f64>,
    sqrt_lmax: f64,
}

impl Geometry {
    fn new(e: &Ellipsoid) -> Self {
        let d = e.dim();
        let m = e.abar_inv().clone();
        let lmax = nalgebra::SymmetricEigen::new(m.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        Geometry {
            d,
            s: e.radius(),
            ext: (0..d)
                .map(|i| e.radius() * e.abar()[(i, i)].sqrt())
                .collect(),
            m,
            sqrt_lmax: lmax.sqrt(),
        }
    }

    /// Band half-width in level-set units for boxes of side `delta`.
    fn margin(&self, delta: f64) -> f64 {
        delta * (self.d as f64).sqrt() / 2.0 * self.sqrt_lmax
    }

    fn level(&self, x: &[f64]) -> f64 {
        let mut q = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                q += x[i] * self.m[(i, j)] * x[j];
            }
        }
        q.max(0.0).sqrt()
    }

    fn weight(&self, x: &[f64], delta: f64) -> f64 {
        let g = self.level(x);
        let mu = self.margin(delta);
        if g <= self.s - mu {
            return 1.0;
        }
        if g >= self.s + mu {
            return 0.0;
        }
        let grad: Vec<f64> = (0..self.d)
            .map(|i| (0..self.d).map(|j| self.m[(i, j)] * x[j]).sum::<f64>() / g)
            .collect();
        let gn = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        let t = (self.s - g) / gn;
        let a: Vec<f64> = grad.iter().map(|v| v.abs() / gn * delta).collect();
        box_fraction(t, &a, delta)
    }

    /// Roots of `level(x0, rest) = rho` in `x0`, if any.
    fn chord(&self, rest: &[f64], rho: f64) -> Option<(f64, f64)> {
        if rho <= 0.0 {
            return None;
        }
        let m00 = self.m[(0, 0)];
        let mut b = 0.0;
        let mut c = 0.0;
        for k in 1..self.d {
            b += self.m[(0, k)] * rest[k - 1];
            for l in 1..self.d {
                c += rest[k - 1] * self.m[(k, l)] * rest[l - 1];
            }
        }
        let disc = b * b - m00 * (c - rho * rho);
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        Some(((-b - sq) / m00, (-b + sq) / m00))
    }
}

/// Lattice indices `i` (multiples of `stride`) with `(i + ½)/n ∈ [a, b]`.
fn index_range(a: f64, b: f64, n: usize, stride: usize) -> Option<(i64, i64)> {
    let nf = n as f64;
    let lo = (a * nf - 0.5).ceil() as i64;
    let hi = (b * nf - 0.5).floor() as i64;
    let st = stride as i64;
    let lo = lo.div_euclid(st) + if lo.rem_euclid(st) == 0 { 0 } else { 1 };
    let hi = hi.div_euclid(st);
    (lo <= hi).then_some((lo * st, hi * st))
}

/// Other-axis index tuples (multiples of `stride`) covering the bounding box.
fn row_indices(g: &Geometry, n: usize, stride: usize, delta: f64) -> Vec<Vec<i64>> {
    let mut rows: Vec<Vec<i64>> = vec![Vec::new()];
    for k in 1..g.d {
        let e = g.ext[k] * (1.0 + g.margin(delta) / g.s) + delta;
        let Some((lo, hi)) = index_range(-e, e, n, stride) else {
            return Vec::new();
        };
        let mut next = Vec::new();
        for r in &rows {
            let mut i = lo;
            while i <= hi {
                let mut v = r.clone();
                v.push(i);
                next.push(v);
                i += stride as i64;
            }
        }
        rows = next;
    }
    rows
}

fn coord(i: i64, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

/// Brute-force midpoint rule for an arbitrary integrand on spacing `stride/n`.
fn brute_sq(f: &(dyn Fn(&[f64]) -> f64 + Sync), g: &Geometry, n: usize, stride: usize) -> f64 {
    let delta = stride as f64 / n as f64;
    let rows = row_indices(g, n, stride, delta);
    let outer = g.s + g.margin(delta);
    let partial: Vec<f64> = rows
        .par_iter()
        .map(|r| {
            let rest: Vec<f64> = r.iter().map(|&i| coord(i, n)).collect();
            let Some((a, b)) = g.chord(&rest, outer) else {
                return 0.0;
            };
            let Some((lo, hi)) = index_range(a - delta, b + delta, n, stride) else {
                return 0.0;
            };
            let mut x = vec![0.0; g.d];
            x[1..].copy_from_slice(&rest);
            let mut acc = 0.0;
            let mut i = lo;
            while i <= hi {
                x[0] = coord(i, n);
                let w = g.weight(&x, delta);
                if w > 0.0 {
                    let v = f(&x);
                    acc += w * v * v;
                }
                i += stride as i64;
            }
            acc
        })
        .collect();
    partial.iter().sum::<f64>() * delta.powi(g.d as i32)
}

/// Volume-normalized `L²(E)` norm of `f` by the midpoint rule with
/// `samples_per_unit` points per unit length along each axis.
pub fn norm_on_ellipsoid(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    e: &Ellipsoid,
    samples_per_unit: usize,
) -> Result<QuadratureResult> {
    if samples_per_unit < MIN_SAMPLES_PER_UNIT {
        return Err(Error::Quadrature(format!(
            "{samples_per_unit} samples per unit cell; at least {MIN_SAMPLES_PER_UNIT} are required"
        )));
    }
    if samples_per_unit % 2 == 1 {
        return Err(Error::Quadrature(
            "samples per unit cell must be even".into(),
        ));
    }
    let g = Geometry::new(e);
    let points: f64 = g
        .ext
        .iter()
        .map(|x| 2.0 * x * samples_per_unit as f64 + 2.0)
        .product();
    if points > MAX_POINTS {
        return Err(Error::Quadrature(format!(
            "{points:.3e} sample points exceed the limit"
        )));
    }
    let vol = e.volume();
    let fine = brute_sq(f, &g, samples_per_unit, 1);
    let coarse = brute_sq(f, &g, samples_per_unit, 2);
    Ok(result(fine, coarse, vol))
}

fn result(fine: f64, coarse: f64, vol: f64) -> QuadratureResult {
    let value = (fine / vol).sqrt();
    let c = (coarse / vol).sqrt();
    QuadratureResult {
        value,
        sq: fine,
        error: (value - c).abs(),
        coarse: c,
    }
}

/// An integrand that is, at every node `x ≡ (j + ½)/n (mod 1)`, the
/// polynomial `Σ_a w_a(j) c_a(x)`.
pub trait LatticeIntegrand: Sync {
    fn dim(&self) -> usize;

    fn samples_per_unit(&self) -> usize;

    fn coefficient_polynomials(&self) -> Vec<Polynomial<f64>>;

    /// Node weights `w_a` on the periodic grid; `None` means `w_a ≡ 1`.
    fn node_weights(&self, a: usize) -> Option<&[f64]>;
}

/// A plain polynomial sampled on a lattice of spacing `1/n`.
pub struct PolynomialOnLattice<'a> {
    pub p: &'a Polynomial<f64>,
    pub n: usize,
}

impl LatticeIntegrand for PolynomialOnLattice<'_> {
    fn dim(&self) -> usize {
        self.p.dim()
    }

    fn samples_per_unit(&self) -> usize {
        self.n
    }

    fn coefficient_polynomials(&self) -> Vec<Polynomial<f64>> {
        vec![self.p.clone()]
    }

    fn node_weights(&self, _: usize) -> Option<&[f64]> {
        None
    }
}

/// Weighted lattice power sums `S_j(γ) = Σ_k w(x) (x/s)^γ`, `x = k + (j + ½)/n`,
/// over the nodes of stride `stride`, for exponents `γ_i ≤ pmax`.
#[derive(Clone, Debug)]
pub struct LatticeMoments {
    d: usize,
    n: usize,
    stride: usize,
    s: f64,
    pmax: usize,
    sums: Vec<f64>,
}

fn grid_index(coords: &[usize], n: usize) -> usize {
    coords.iter().fold(0, |acc, &c| acc * n + c)
}

impl LatticeMoments {
    pub fn compute(e: &Ellipsoid, n: usize, pmax: usize, stride: usize) -> Result<Self> {
        if n < MIN_SAMPLES_PER_UNIT || n % stride != 0 {
            return Err(Error::Quadrature(format!(
                "{n} samples per unit cell with stride {stride}"
            )));
        }
        let g = Geometry::new(e);
        let d = g.d;
        let delta = stride as f64 / n as f64;
        let np = pmax + 1;
        let block = np.pow(d as u32);
        let cells = n.pow(d as u32);
        let s = g.s;
        let inner = s - g.margin(delta);
        let outer = s + g.margin(delta);

        // Prefix sums along axis 0 per residue class.
        let e0 = g.ext[0] * (1.0 + g.margin(delta) / s) + 2.0 * delta;
        let kmin = ((-e0).floor() as i64) - 1;
        let kmax = (e0.ceil() as i64) + 1;
        let nk = (kmax - kmin + 1) as usize;
        let residues: Vec<usize> = (0..n).step_by(stride).collect();
        let mut prefix = vec![0.0; n * (nk + 1) * np];
        for &j0 in &residues {
            let base = j0 * (nk + 1) * np;
            for t in 0..nk {
                let x = (kmin + t as i64) as f64 + (j0 as f64 + 0.5) / n as f64;
                let u = x / s;
                let mut pw = 1.0;
                for p in 0..np {
                    prefix[base + (t + 1) * np + p] = prefix[base + t * np + p] + pw;
                    pw *= u;
                }
            }
        }
        let range_sum = |j0: usize, lo: i64, hi: i64, out: &mut [f64]| {
            // global indices i ∈ [lo, hi], i ≡ j0 (mod n)
            let klo = (lo - j0 as i64).div_euclid(n as i64)
                + if (lo - j0 as i64).rem_euclid(n as i64) == 0 {
                    0
                } else {
                    1
                };
            let khi = (hi - j0 as i64).div_euclid(n as i64);
            if klo > khi {
                return false;
            }
            let (a, b) = ((klo - kmin) as usize, (khi - kmin + 1) as usize);
            let base = j0 * (nk + 1) * np;
            for p in 0..np {
                out[p] = prefix[base + b * np + p] - prefix[base + a * np + p];
            }
            true
        };

        let rows = row_indices(&g, n, stride, delta);
        // Rows sharing the same residue tuple accumulate into the same slots,
        // so parallelize over residue tuples of the other axes.
        let mut by_class: HashMap<Vec<usize>, Vec<&Vec<i64>>> = HashMap::new();
        for r in &rows {
            let cls: Vec<usize> = r.iter().map(|&i| i.rem_euclid(n as i64) as usize).collect();
            by_class.entry(cls).or_default().push(r);
        }
        let mut classes: Vec<_> = by_class.into_iter().collect();
        classes.sort();
        let rest_block = np.pow(d as u32 - 1);
        let partial: Vec<(Vec<usize>, Vec<f64>)> = classes
            .par_iter()
            .map(|(cls, rows)| {
                // slots: j0 × γ
                let mut acc = vec![0.0; n * block];
                let mut a = vec![0.0; np];
                let mut yp = vec![0.0; rest_block];
                let mut x = vec![0.0; d];
                for r in rows {
                    let rest: Vec<f64> = r.iter().map(|&i| coord(i, n)).collect();
                    let Some((oa, ob)) = g.chord(&rest, outer) else {
                        continue;
                    };
                    // Power products of the other coordinates.
                    yp[0] = 1.0;
                    let mut len = 1;
                    for v in &rest {
                        let u = v / s;
                        let mut next = vec![0.0; len * np];
                        for (idx, y) in yp[..len].iter().enumerate() {
                            let mut pw = *y;
                            for p in 0..np {
                                next[idx * np + p] = pw;
                                pw *= u;
                            }
                        }
                        len *= np;
                        yp[..len].copy_from_slice(&next);
                    }
                    let interior = g
                        .chord(&rest, inner)
                        .and_then(|(ia, ib)| index_range(ia, ib, n, stride));
                    if let Some((lo, hi)) = interior {
                        for &j0 in &residues {
                            if range_sum(j0, lo, hi, &mut a) {
                                let slot = &mut acc[j0 * block..(j0 + 1) * block];
                                for (p, av) in a.iter().enumerate() {
                                    let row = &mut slot[p * rest_block..(p + 1) * rest_block];
                                    for (o, y) in row.iter_mut().zip(&yp) {
                                        *o += av * y;
                                    }
                                }
                            }
                        }
                    }
                    let Some((olo, ohi)) = index_range(oa - delta, ob + delta, n, stride) else {
                        continue;
                    };
                    x[1..].copy_from_slice(&rest);
                    let mut i = olo;
                    while i <= ohi {
                        if let Some((lo, hi)) = interior {
                            if i >= lo && i <= hi {
                                i = hi + stride as i64;
                                continue;
                            }
                        }
                        x[0] = coord(i, n);
                        let w = g.weight(&x, delta);
                        if w > 0.0 {
                            let j0 = i.rem_euclid(n as i64) as usize;
                            let u = x[0] / s;
                            let slot = &mut acc[j0 * block..(j0 + 1) * block];
                            let mut pw = w;
                            for p in 0..np {
                                let row = &mut slot[p * rest_block..(p + 1) * rest_block];
                                for (o, y) in row.iter_mut().zip(&yp) {
                                    *o += pw * y;
                                }
                                pw *= u;
                            }
                        }
                        i += stride as i64;
                    }
                }
                (cls.clone(), acc)
            })
            .collect();

        let mut sums = vec![0.0; cells * block];
        let mut coords = vec![0usize; d];
        for (cls, acc) in partial {
            for j0 in 0..n {
                coords[0] = j0;
                coords[1..].copy_from_slice(&cls);
                let j = grid_index(&coords, n);
                for (o, v) in sums[j * block..(j + 1) * block]
                    .iter_mut()
                    .zip(&acc[j0 * block..(j0 + 1) * block])
                {
                    *o += v;
                }
            }
        }
        Ok(LatticeMoments {
            d,
            n,
            stride,
            s,
            pmax,
            sums,
        })
    }

    pub fn pmax(&self) -> usize {
        self.pmax
    }

    /// `∫_E f²` for a lattice integrand of degree at most `pmax/2`.
    pub fn sq_integral(&self, f: &dyn LatticeIntegrand) -> Result<f64> {
        if f.dim() != self.d || f.samples_per_unit() != self.n {
            return Err(Error::Quadrature(
                "integrand does not live on this lattice".into(),
            ));
        }
        let polys = f.coefficient_polynomials();
        let deg = polys.iter().filter_map(|p| p.degree()).max().unwrap_or(0) as usize;
        if 2 * deg > self.pmax {
            return Err(Error::Quadrature(format!(
                "degree {deg} exceeds the moment table"
            )));
        }
        let d = self.d;
        let nq = deg + 1;
        let qblock = nq.pow(d as u32);
        let np = self.pmax + 1;
        let block = np.pow(d as u32);
        // Dense coefficients in u = x/s.
        let dense: Vec<Vec<f64>> = polys
            .iter()
            .map(|p| {
                let mut v = vec![0.0; qblock];
                for (a, c) in p.terms() {
                    let idx = a.entries().iter().fold(0, |acc, &e| acc * nq + e as usize);
                    v[idx] = c * self.s.powi(a.order() as i32);
                }
                v
            })
            .collect();
        let weights: Vec<Option<&[f64]>> = (0..polys.len()).map(|a| f.node_weights(a)).collect();
        // Map from Q-exponent to S-exponent layout.
        let expo: Vec<Vec<usize>> = (0..qblock)
            .map(|mut idx| {
                let mut e = vec![0; d];
                for k in (0..d).rev() {
                    e[k] = idx % nq;
                    idx /= nq;
                }
                e
            })
            .collect();
        let n = self.n;
        let cells = n.pow(d as u32);
        let stride = self.stride;
        let per_cell: Vec<f64> = (0..cells)
            .into_par_iter()
            .map(|j| {
                let mut rem = j;
                for _ in 0..d {
                    if (rem % n) % stride != 0 {
                        return 0.0;
                    }
                    rem /= n;
                }
                let mut q = vec![0.0; qblock];
                for (a, v) in dense.iter().enumerate() {
                    let w = weights[a].map_or(1.0, |w| w[j]);
                    if w != 0.0 {
                        for (o, c) in q.iter_mut().zip(v) {
                            *o += w * c;
                        }
                    }
                }
                let s = &self.sums[j * block..(j + 1) * block];
                let mut acc = 0.0;
                for (i1, c1) in q.iter().enumerate() {
                    if *c1 == 0.0 {
                        continue;
                    }
                    for (i2, c2) in q.iter().enumerate() {
                        if *c2 == 0.0 {
                            continue;
                        }
                        let idx = expo[i1]
                            .iter()
                            .zip(&expo[i2])
                            .fold(0, |acc, (a, b)| acc * np + a + b);
                        acc += c1 * c2 * s[idx];
                    }
                }
                acc
            })
            .collect();
        let delta = stride as f64 / n as f64;
        Ok(per_cell.iter().sum::<f64>() * delta.powi(d as i32))
    }
}

/// Lattice quadrature for one `ā` and one lattice, caching moments per radius.
pub struct LatticeQuadrature {
    abar: DMatrix<f64>,
    n: usize,
    pmax: usize,
    cache: Mutex<HashMap<(u64, usize), Arc<LatticeMoments>>>,
}

impl LatticeQuadrature {
    pub fn new(abar: DMatrix<f64>, n: usize, max_degree: u32) -> Result<Self> {
        Ellipsoid::new(abar.clone(), 1.0)?;
        if n < MIN_SAMPLES_PER_UNIT {
            return Err(Error::Quadrature(format!(
                "{n} samples per unit cell; at least {MIN_SAMPLES_PER_UNIT} are required"
            )));
        }
        if n % 2 == 1 {
            return Err(Error::Quadrature(
                "samples per unit cell must be even".into(),
            ));
        }
        Ok(LatticeQuadrature {
            abar,
            n,
            pmax: 2 * max_degree as usize,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn abar(&self) -> &DMatrix<f64> {
        &self.abar
    }

    pub fn samples_per_unit(&self) -> usize {
        self.n
    }

    pub fn ellipsoid(&self, r: f64) -> Result<Ellipsoid> {
        Ellipsoid::new(self.abar.clone(), r)
    }

    fn moments(&self, r: f64, stride: usize) -> Result<Arc<LatticeMoments>> {
        let key = (r.to_bits(), stride);
        if let Some(m) = self.cache.lock().unwrap().get(&key) {
            return Ok(m.clone());
        }
        let m = Arc::new(LatticeMoments::compute(
            &self.ellipsoid(r)?,
            self.n,
            self.pmax,
            stride,
        )?);
        self.cache.lock().unwrap().insert(key, m.clone());
        Ok(m)
    }

    /// `∫_{E_r} f²` on the full lattice (`stride = 1`) or its stride-2 sub-lattice.
    pub fn sq_integral(&self, f: &dyn LatticeIntegrand, r: f64, stride: usize) -> Result<f64> {
        self.moments(r, stride)?.sq_integral(f)
    }

    pub fn norm(&self, f: &dyn LatticeIntegrand, r: f64) -> Result<QuadratureResult> {
        let vol = self.ellipsoid(r)?.volume();
        let fine = self.sq_integral(f, r, 1)?;
        let coarse = self.sq_integral(f, r, 2)?;
        Ok(result(fine, coarse, vol))
    }
}
