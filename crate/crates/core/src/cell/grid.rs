use crate::error::{contract, Result};

/// Largest supported resolution per axis.
pub const MAX_N: usize = 4096;

/// Uniform periodic cell-centered grid on the unit torus `[0,1)^d`.
///
/// Cells are stored row-major with the first axis slowest; cell `i` has
/// center `(i + ½)h`, `h = 1/N`.
#[derive(Clone, Debug)]
pub struct Grid {
    d: usize,
    n: usize,
    len: usize,
    strides: Vec<usize>,
    plus: Vec<Vec<u32>>,
    minus: Vec<Vec<u32>>,
}

impl Grid {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return contract(format!("grid dimension must be 1, 2 or 3, got {d}"));
        }
        if !(2..=MAX_N).contains(&n) {
            return contract(format!("grid resolution must be in 2..={MAX_N}, got {n}"));
        }
        let len = n.pow(d as u32);
        if len > u32::MAX as usize {
            return contract("grid too large");
        }
        let strides: Vec<usize> = (0..d).map(|k| n.pow((d - 1 - k) as u32)).collect();
        let mut plus = Vec::with_capacity(d);
        let mut minus = Vec::with_capacity(d);
        for &s in &strides {
            let mut p = Vec::with_capacity(len);
            let mut m = Vec::with_capacity(len);
            for idx in 0..len {
                let c = (idx / s) % n;
                let base = idx - c * s;
                p.push((base + ((c + 1) % n) * s) as u32);
                m.push((base + ((c + n - 1) % n) * s) as u32);
            }
            plus.push(p);
            minus.push(m);
        }
        Ok(Grid {
            d,
            n,
            len,
            strides,
            plus,
            minus,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Neighbor table `c ↦ c + e_axis`.
    pub fn plus(&self, axis: usize) -> &[u32] {
        &self.plus[axis]
    }

    /// Neighbor table `c ↦ c − e_axis`.
    pub fn minus(&self, axis: usize) -> &[u32] {
        &self.minus[axis]
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let mut c = [0; 3];
        for k in 0..self.d {
            c[k] = (idx / self.strides[k]) % self.n;
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| (c % self.n) * s)
            .sum()
    }

    /// Cell center of `idx`.
    pub fn center(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        let mut x = [0.0; 3];
        for k in 0..self.d {
            x[k] = (c[k] as f64 + 0.5) * self.h();
        }
        x
    }

    /// Samples `f` at every cell center.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len)
            .map(|i| f(&self.center(i)[..self.d]))
            .collect()
    }
}

/// Sum with a fixed pairwise reduction tree, so results do not depend on
/// how callers chunk their work.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    const BASE: usize = 64;
    if v.len() <= BASE {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// The discrete mean `⟨u⟩`.
pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    pairwise_sum(v) / v.len() as f64
}

/// Mean of the pointwise product.
pub fn mean_product(u: &[f64], v: &[f64]) -> f64 {
    let p: Vec<f64> = u.iter().zip(v).map(|(a, b)| a * b).collect();
    mean(&p)
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn l2_mean_norm(v: &[f64]) -> f64 {
    mean_product(v, v).sqrt()
}

/// A scalar function on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub d: usize,
    pub n: usize,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(d: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n.pow(d as u32) {
            return contract(format!(
                "grid function has {} values, expected {}",
                values.len(),
                n.pow(d as u32)
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return contract("grid function has non-finite values");
        }
        Ok(GridFunction { d, n, values })
    }

    pub fn constant(d: usize, n: usize, c: f64) -> Self {
        GridFunction {
            d,
            n,
            values: vec![c; n.pow(d as u32)],
        }
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }
}
