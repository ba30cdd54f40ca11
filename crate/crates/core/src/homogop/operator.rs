use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cell::correctors::CorrectorTable;
use crate::error::{contract, Error, Result};
use crate::polyalg::json::{tensor_real_from_value, tensor_real_to_value};
use crate::polyalg::multi_index::MultiIndex;
use crate::polyalg::polynomial::Polynomial;
use crate::polyalg::scalar::Scalar;
use crate::polyalg::tensor::SymTensor;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Provenance {
    Synthetic,
    Table { n: usize, m_max: usize },
}

/// `ā_2 = I` plus random rational `ā_4, …, ā_{max_order}` with entries
/// `j/den`, `|j| ≤ 10`, `den ∈ {10, 20, 40}`.
pub fn random_synthetic_operator(
    dim: usize,
    max_order: u32,
    rng: &mut impl rand::Rng,
) -> Result<HomogenizedOperator<crate::polyalg::Rational>> {
    use crate::polyalg::Rational;
    let mut tensors = Vec::new();
    let mut a2 = SymTensor::<Rational>::zeros(dim, 2);
    for i in 0..dim {
        let mut v = vec![0u32; dim];
        v[i] = 2;
        a2.set(MultiIndex::new(v), Rational::from_i64(1))?;
    }
    tensors.push(a2);
    for order in (4..=max_order).step_by(2) {
        let mut t = SymTensor::<Rational>::zeros(dim, order);
        for alpha in MultiIndex::all_of_order(dim, order) {
            let den = [10, 20, 40][rng.gen_range(0..3)];
            t.set(alpha, Rational::ratio(rng.gen_range(-10..=10), den))?;
        }
        tensors.push(t);
    }
    HomogenizedOperator::new(dim, tensors, Provenance::Synthetic)
}

/// `𝒜 = −Σ_k ā_{2k} : ∇^{2k}`, stored by even order.
#[derive(Clone, Debug, PartialEq)]
pub struct HomogenizedOperator<T> {
    dim: usize,
    tensors: BTreeMap<u32, SymTensor<T>>,
    provenance: Provenance,
}

/// `T : ∇^n p = Σ_{|α|=n} C(n,α) T_α ∂^α p`.
pub fn contract_gradient<T: Scalar>(t: &SymTensor<T>, p: &Polynomial<T>) -> Polynomial<T> {
    let mut out = Polynomial::zero(p.dim());
    if p.degree().is_none_or(|deg| deg < t.order()) {
        return out;
    }
    for (alpha, c) in t.iter() {
        if c.is_zero() {
            continue;
        }
        let w = T::from_u128(alpha.multinomial()) * c.clone();
        out = &out + &p.derivative_multi(alpha).scale(&w);
    }
    out
}

/// `ξ ↦ T : ξ^{⊗m}`, the polynomial carrying the same data as `T`.
pub fn tensor_avatar<T: Scalar>(t: &SymTensor<T>) -> Polynomial<T> {
    let mut p = Polynomial::zero(t.dim());
    for (alpha, c) in t.iter() {
        p.add_term(alpha.clone(), T::from_u128(alpha.multinomial()) * c.clone());
    }
    p
}

/// Inverse of [`tensor_avatar`] on homogeneous polynomials of degree `m`.
pub fn tensor_from_avatar<T: Scalar>(p: &Polynomial<T>, m: u32) -> Result<SymTensor<T>> {
    let mut t = SymTensor::empty(p.dim(), m);
    for (alpha, c) in p.terms() {
        if alpha.order() != m {
            return contract(format!(
                "avatar has a term of degree {} in an order-{m} tensor",
                alpha.order()
            ));
        }
        t.set(alpha.clone(), c.clone() / T::from_u128(alpha.multinomial()))?;
    }
    Ok(t)
}

impl<T: Scalar> HomogenizedOperator<T> {
    /// `tensors` lists `ā_2, ā_4, …` in any order; odd orders are rejected and
    /// `ā_2` must be positive definite.
    pub fn new(dim: usize, tensors: Vec<SymTensor<T>>, provenance: Provenance) -> Result<Self> {
        let mut map = BTreeMap::new();
        for t in tensors {
            if t.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: t.dim(),
                });
            }
            if t.order() < 2 || t.order() % 2 == 1 {
                return contract(format!(
                    "homogenized operator takes even orders >= 2, got {}",
                    t.order()
                ));
            }
            if map.insert(t.order(), t).is_some() {
                return contract("duplicate tensor order");
            }
        }
        let Some(a2) = map.get(&2) else {
            return contract("homogenized operator needs a_2");
        };
        let m = tensor2_matrix_f64(a2);
        let eig = nalgebra::SymmetricEigen::new(m.clone());
        let min = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(Error::NotSpd(format!("a_2 has minimal eigenvalue {min}")));
        }
        Ok(HomogenizedOperator {
            dim,
            tensors: map,
            provenance,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn tensor(&self, order: u32) -> Option<&SymTensor<T>> {
        self.tensors.get(&order)
    }

    pub fn tensors(&self) -> impl Iterator<Item = &SymTensor<T>> {
        self.tensors.values()
    }

    pub fn max_order(&self) -> u32 {
        *self.tensors.keys().next_back().unwrap()
    }

    pub fn abar_matrix(&self) -> DMatrix<f64> {
        tensor2_matrix_f64(&self.tensors[&2])
    }

    /// Whether `ā_2` is exactly the identity.
    pub fn is_normalized(&self) -> bool {
        let a2 = &self.tensors[&2];
        MultiIndex::all_of_order(self.dim, 2).iter().all(|a| {
            let diag = a.entries().contains(&2);
            a2.at(a) == if diag { T::one() } else { T::zero() }
        })
    }

    /// Same operator with `ā_{2k}` for `k ≥ 2` dropped.
    pub fn leading_part(&self) -> Self {
        HomogenizedOperator {
            dim: self.dim,
            tensors: self
                .tensors
                .range(..=2)
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn to_f64(&self) -> HomogenizedOperator<f64> {
        HomogenizedOperator {
            dim: self.dim,
            tensors: self.tensors.iter().map(|(k, v)| (*k, v.to_f64())).collect(),
            provenance: self.provenance.clone(),
        }
    }
}

impl HomogenizedOperator<f64> {
    /// The even tensors `ā_2, ā_4, …` of a corrector table.
    pub fn from_table(table: &CorrectorTable) -> Result<Self> {
        if table.m_max() < 2 {
            return Err(Error::TableTooShort {
                have: table.m_max(),
                need: 2,
            });
        }
        let tensors = (2..=table.m_max())
            .step_by(2)
            .map(|m| table.abar(m).unwrap().clone())
            .collect();
        Self::new(
            table.dim(),
            tensors,
            Provenance::Table {
                n: table.n(),
                m_max: table.m_max(),
            },
        )
    }
}

pub(crate) fn tensor2_matrix_f64<T: Scalar>(t: &SymTensor<T>) -> DMatrix<f64> {
    let d = t.dim();
    DMatrix::from_fn(d, d, |i, j| {
        t.at(&MultiIndex::unit(d, i).add(&MultiIndex::unit(d, j)))
            .to_f64()
    })
}

/// `𝒜p = −Σ_k ā_{2k} : ∇^{2k} p`.
pub fn apply_a<T: Scalar>(op: &HomogenizedOperator<T>, p: &Polynomial<T>) -> Result<Polynomial<T>> {
    if p.dim() != op.dim {
        return Err(Error::DimensionMismatch {
            expected: op.dim,
            got: p.dim(),
        });
    }
    let mut out = Polynomial::zero(op.dim);
    for t in op.tensors.values() {
        out = &out - &contract_gradient(t, p);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorDoc {
    d: usize,
    provenance: Provenance,
    tensors: Vec<serde_json::Value>,
}

pub fn operator_to_json<T: Scalar>(op: &HomogenizedOperator<T>) -> String {
    let doc = OperatorDoc {
        d: op.dim,
        provenance: op.provenance.clone(),
        tensors: op.tensors.values().map(tensor_real_to_value).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("serializable")
}

pub fn parse_operator(text: &str, label: &str) -> Result<HomogenizedOperator<f64>> {
    let doc: OperatorDoc = serde_json::from_str(text).map_err(|e| Error::Format {
        file: label.into(),
        msg: e.to_string(),
    })?;
    let tensors = doc
        .tensors
        .iter()
        .map(|v| tensor_real_from_value(v, label))
        .collect::<Result<Vec<_>>>()?;
    HomogenizedOperator::new(doc.d, tensors, doc.provenance).map_err(|e| Error::Format {
        file: label.into(),
        msg: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::Rational;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    fn identity2<T: Scalar>(d: usize) -> SymTensor<T> {
        let mut t = SymTensor::zeros(d, 2);
        for i in 0..d {
            t.set(
                MultiIndex::unit(d, i).add(&MultiIndex::unit(d, i)),
                T::one(),
            )
            .unwrap();
        }
        t
    }

    #[test]
    fn leading_term_is_minus_trace() {
        // A = [[2, 1/2], [1/2, 3]]: −tr(A∇²p) for p = x1² + x1 x2 + x2³
        let mut a2 = SymTensor::<f64>::zeros(2, 2);
        a2.set(mi(&[2, 0]), 2.0).unwrap();
        a2.set(mi(&[1, 1]), 0.5).unwrap();
        a2.set(mi(&[0, 2]), 3.0).unwrap();
        let op = HomogenizedOperator::new(2, vec![a2], Provenance::Synthetic).unwrap();
        let p = Polynomial::from_terms(
            2,
            [(mi(&[2, 0]), 1.0), (mi(&[1, 1]), 1.0), (mi(&[0, 3]), 1.0)],
        )
        .unwrap();
        let ap = apply_a(&op, &p).unwrap();
        // ∂11 p = 2, ∂12 p = 1, ∂22 p = 6 x2
        let want = Polynomial::from_terms(
            2,
            [
                (mi(&[0, 0]), -(2.0 * 2.0 + 2.0 * 0.5)),
                (mi(&[0, 1]), -18.0),
            ],
        )
        .unwrap();
        assert_eq!(ap, want);
        let lin = Polynomial::from_terms(2, [(mi(&[1, 0]), 3.0), (mi(&[0, 0]), 1.0)]).unwrap();
        assert!(apply_a(&op, &lin).unwrap().is_zero());
    }

    #[test]
    fn synthetic_fourth_order_entry() {
        let t = Rational::ratio(1, 20);
        let mut a4 = SymTensor::<Rational>::empty(2, 4);
        a4.set(mi(&[4, 0]), t.clone()).unwrap();
        let op =
            HomogenizedOperator::new(2, vec![identity2(2), a4], Provenance::Synthetic).unwrap();
        let p = Polynomial::monomial(mi(&[4, 0]), Rational::from_i64(1));
        let ap = apply_a(&op, &p).unwrap();
        let want = Polynomial::from_terms(
            2,
            [
                (mi(&[2, 0]), Rational::from_i64(-12)),
                (mi(&[0, 0]), Rational::from_i64(-24) * t),
            ],
        )
        .unwrap();
        assert_eq!(ap, want);
    }

    #[test]
    fn avatar_roundtrip_and_pairing() {
        let mut t = SymTensor::<Rational>::empty(3, 3);
        t.set(mi(&[1, 1, 1]), Rational::ratio(1, 3)).unwrap();
        t.set(mi(&[3, 0, 0]), Rational::ratio(-2, 7)).unwrap();
        let av = tensor_avatar(&t);
        assert_eq!(tensor_from_avatar(&av, 3).unwrap(), t);
        // T : ∇³(ξ·x)³/3! = T : ξ^{⊗3} = avatar(ξ)
        let xi = [
            Rational::from_i64(2),
            Rational::from_i64(-1),
            Rational::ratio(1, 2),
        ];
        let lin =
            Polynomial::from_terms(3, (0..3).map(|i| (MultiIndex::unit(3, i), xi[i].clone())))
                .unwrap();
        let cube = lin.mul(&lin).mul(&lin).scale(&Rational::ratio(1, 6));
        assert_eq!(
            contract_gradient(&t, &cube).coeff(&MultiIndex::zero(3)),
            av.eval(&xi)
        );
    }

    #[test]
    fn rejects_bad_operators() {
        let mut odd = SymTensor::<f64>::zeros(2, 3);
        odd.set(mi(&[3, 0]), 1.0).unwrap();
        assert!(
            HomogenizedOperator::new(2, vec![identity2(2), odd], Provenance::Synthetic).is_err()
        );
        assert!(HomogenizedOperator::<f64>::new(2, vec![], Provenance::Synthetic).is_err());
        let neg = identity2::<f64>(2).scale(&-1.0);
        assert!(HomogenizedOperator::new(2, vec![neg], Provenance::Synthetic).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let mut a4 = SymTensor::<f64>::zeros(2, 4);
        a4.set(mi(&[2, 2]), 0.125).unwrap();
        let op =
            HomogenizedOperator::new(2, vec![identity2(2), a4], Provenance::Synthetic).unwrap();
        let back = parse_operator(&operator_to_json(&op), "op").unwrap();
        assert_eq!(back, op);
    }
}
