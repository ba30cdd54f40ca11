use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A multi-index `α ∈ ℕ₀^d`.
///
/// Ordered graded-lexicographically: first by `|α|`, then entrywise.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        assert!(!entries.is_empty(), "multi-index needs d >= 1");
        MultiIndex(entries)
    }

    pub fn zero(d: usize) -> Self {
        MultiIndex::new(vec![0; d])
    }

    /// The unit multi-index `e_i`.
    pub fn unit(d: usize, i: usize) -> Self {
        let mut v = vec![0; d];
        v[i] = 1;
        MultiIndex(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn get(&self, i: usize) -> u32 {
        self.0[i]
    }

    /// `α!`
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&a| factorial(a)).product()
    }

    /// `α!` as an exact integer.
    pub fn factorial_u128(&self) -> u128 {
        self.0.iter().map(|&a| factorial_u128(a)).product()
    }

    /// Multinomial coefficient `|α|! / α!`.
    pub fn multinomial(&self) -> u128 {
        factorial_u128(self.order()) / self.factorial_u128()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.dim(), other.dim());
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `α − β`, or `None` when some entry would go negative.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        debug_assert_eq!(self.dim(), other.dim());
        let mut v = Vec::with_capacity(self.dim());
        for (a, b) in self.0.iter().zip(&other.0) {
            v.push(a.checked_sub(*b)?);
        }
        Some(MultiIndex(v))
    }

    pub fn inc(&self, i: usize) -> MultiIndex {
        let mut v = self.0.clone();
        v[i] += 1;
        MultiIndex(v)
    }

    pub fn dec(&self, i: usize) -> Option<MultiIndex> {
        let mut v = self.0.clone();
        v[i] = v[i].checked_sub(1)?;
        Some(MultiIndex(v))
    }

    /// `β ≤ α` entrywise.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// `x^α` at a real point.
    pub fn monomial_at(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&a, &xi)| xi.powi(a as i32))
            .product()
    }

    /// All multi-indices of order exactly `m` in `d` variables, in canonical order.
    pub fn all_of_order(d: usize, m: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; d];
        fill(&mut out, &mut cur, 0, m);
        out.sort();
        out
    }

    /// All multi-indices with `|α| ≤ m`, canonical order.
    pub fn all_up_to(d: usize, m: u32) -> Vec<MultiIndex> {
        (0..=m).flat_map(|k| Self::all_of_order(d, k)).collect()
    }

    /// All `β ≤ α` entrywise.
    pub fn sub_indices(&self) -> Vec<MultiIndex> {
        let mut out = vec![Vec::with_capacity(self.dim())];
        for &a in &self.0 {
            let mut next = Vec::with_capacity(out.len() * (a as usize + 1));
            for prefix in &out {
                for b in 0..=a {
                    let mut p = prefix.clone();
                    p.push(b);
                    next.push(p);
                }
            }
            out = next;
        }
        let mut res: Vec<_> = out.into_iter().map(MultiIndex).collect();
        res.sort();
        res
    }
}

fn fill(out: &mut Vec<MultiIndex>, cur: &mut Vec<u32>, pos: usize, remaining: u32) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        out.push(MultiIndex(cur.clone()));
        return;
    }
    for a in 0..=remaining {
        cur[pos] = a;
        fill(out, cur, pos + 1, remaining - a);
    }
    cur[pos] = 0;
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<&[u32]> for MultiIndex {
    fn from(v: &[u32]) -> Self {
        MultiIndex::new(v.to_vec())
    }
}

pub fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

pub fn factorial_u128(n: u32) -> u128 {
    (1..=n as u128).product()
}

/// Number of multi-indices of order `m` in `d` variables: `C(m+d-1, d-1)`.
pub fn count_of_order(d: usize, m: u32) -> usize {
    binomial(m as u64 + d as u64 - 1, d as u64 - 1) as usize
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_is_graded() {
        let all = MultiIndex::all_up_to(2, 2);
        let got: Vec<Vec<u32>> = all.iter().map(|a| a.entries().to_vec()).collect();
        assert_eq!(
            got,
            vec![
                vec![0, 0],
                vec![0, 1],
                vec![1, 0],
                vec![0, 2],
                vec![1, 1],
                vec![2, 0]
            ]
        );
    }

    #[test]
    fn counts_match_enumeration() {
        for d in 1..=4 {
            for m in 0..=8 {
                assert_eq!(MultiIndex::all_of_order(d, m).len(), count_of_order(d, m));
            }
        }
    }

    #[test]
    fn multinomial_sums_to_power() {
        // Σ_{|α|=m} m!/α! = d^m
        for d in 1..=3usize {
            for m in 0..=7 {
                let s: u128 = MultiIndex::all_of_order(d, m)
                    .iter()
                    .map(|a| a.multinomial())
                    .sum();
                assert_eq!(s, (d as u128).pow(m));
            }
        }
    }

    #[test]
    fn sub_indices_enumerates_box() {
        let a = MultiIndex::new(vec![2, 1]);
        assert_eq!(a.sub_indices().len(), 6);
        assert!(a.sub_indices().iter().all(|b| b.le(&a)));
    }
}
