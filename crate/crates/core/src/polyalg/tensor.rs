use std::collections::BTreeMap;

use crate::error::{contract, Result};
use crate::polyalg::multi_index::MultiIndex;
use crate::polyalg::scalar::Scalar;

/// A symmetric tensor of order `m` in `d` dimensions, stored per canonical
/// multi-index `|α| = m`. Missing entries are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensor<E> {
    dim: usize,
    order: u32,
    entries: BTreeMap<MultiIndex, E>,
}

impl<E: Clone> SymTensor<E> {
    pub fn empty(dim: usize, order: u32) -> Self {
        SymTensor {
            dim,
            order,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn get(&self, alpha: &MultiIndex) -> Option<&E> {
        self.entries.get(alpha)
    }

    pub fn set(&mut self, alpha: MultiIndex, value: E) -> Result<()> {
        if alpha.dim() != self.dim || alpha.order() != self.order {
            return contract(format!(
                "index {alpha:?} does not belong to a tensor of order {} in dimension {}",
                self.order, self.dim
            ));
        }
        self.entries.insert(alpha, value);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, &E)> {
        self.entries.iter()
    }

    pub fn map<F, U: Clone>(&self, mut f: F) -> SymTensor<U>
    where
        F: FnMut(&E) -> U,
    {
        SymTensor {
            dim: self.dim,
            order: self.order,
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), f(v)))
                .collect(),
        }
    }
}

impl<T: Scalar> SymTensor<T> {
    pub fn zeros(dim: usize, order: u32) -> Self {
        SymTensor::empty(dim, order)
    }

    pub fn from_entries(
        dim: usize,
        order: u32,
        entries: impl IntoIterator<Item = (MultiIndex, T)>,
    ) -> Result<Self> {
        let mut t = SymTensor::zeros(dim, order);
        for (a, v) in entries {
            t.set(a, v)?;
        }
        Ok(t)
    }

    /// `x^{⊗m}`: entries `x^α`.
    pub fn outer_power(x: &[T], order: u32) -> Self {
        let d = x.len();
        let entries = MultiIndex::all_of_order(d, order)
            .into_iter()
            .map(|a| {
                let mut v = T::one();
                for (i, &e) in a.entries().iter().enumerate() {
                    for _ in 0..e {
                        v = v * x[i].clone();
                    }
                }
                (a, v)
            })
            .collect();
        SymTensor {
            dim: d,
            order,
            entries,
        }
    }

    /// Entry with zero default.
    pub fn at(&self, alpha: &MultiIndex) -> T {
        self.entries.get(alpha).cloned().unwrap_or_else(T::zero)
    }

    /// `(S:T) = Σ_{|α|=m} C(m,α) S_α T_α`.
    pub fn pair(&self, other: &SymTensor<T>) -> Result<T> {
        if self.order != other.order {
            return contract(format!(
                "tensor orders differ: {} vs {}",
                self.order, other.order
            ));
        }
        if self.dim != other.dim {
            return contract(format!(
                "tensor dimensions differ: {} vs {}",
                self.dim, other.dim
            ));
        }
        let mut acc = T::zero();
        for (a, s) in &self.entries {
            if let Some(t) = other.entries.get(a) {
                acc = acc + T::from_u128(a.multinomial()) * s.clone() * t.clone();
            }
        }
        Ok(acc)
    }

    /// `|T| = (T:T)^{1/2}`.
    pub fn norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|(a, v)| a.multinomial() as f64 * v.to_f64().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&self, c: &T) -> Self {
        self.map(|v| v.clone() * c.clone())
    }

    pub fn add(&self, other: &SymTensor<T>) -> Result<Self> {
        if self.order != other.order || self.dim != other.dim {
            return contract("cannot add tensors of different shapes");
        }
        let mut out = self.clone();
        for (a, v) in &other.entries {
            let e = out.entries.entry(a.clone()).or_insert_with(T::zero);
            *e = e.clone() + v.clone();
        }
        Ok(out)
    }

    pub fn to_f64(&self) -> SymTensor<f64> {
        self.map(|v| v.to_f64())
    }
}
