//! JSON forms of polynomials and symmetric tensors.
//!
//! Polynomial: `{"d": 2, "terms": [{"alpha": [2, 0], "num": 1, "den": 2}]}`; the
//! real path writes `"value"` instead of `num`/`den`. Tensor: `{"order": m, "d": d,
//! "entries": [{"alpha": [..], "value": x}]}`, again with `num`/`den` accepted.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polyalg::multi_index::MultiIndex;
use crate::polyalg::polynomial::Polynomial;
use crate::polyalg::scalar::Scalar;
use crate::polyalg::tensor::SymTensor;

/// Largest dimension accepted from input.
pub const MAX_DIM: usize = 16;
/// Largest total degree accepted from input.
pub const MAX_ORDER: u32 = 256;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum IntLike {
    Int(i64),
    Str(String),
}

impl IntLike {
    fn parse(&self) -> Option<BigInt> {
        match self {
            IntLike::Int(v) => Some(BigInt::from(*v)),
            IntLike::Str(s) => s.trim().parse().ok(),
        }
    }

    fn of(v: &BigInt) -> IntLike {
        match v.to_i64() {
            Some(x) => IntLike::Int(x),
            None => IntLike::Str(v.to_string()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermDoc {
    alpha: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num: Option<IntLike>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    den: Option<IntLike>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolyDoc {
    d: usize,
    terms: Vec<TermDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorDoc {
    order: u32,
    d: usize,
    entries: Vec<TermDoc>,
}

fn bad(label: &str, msg: impl Into<String>) -> Error {
    Error::Format {
        file: label.to_string(),
        msg: msg.into(),
    }
}

impl TermDoc {
    fn alpha(&self, d: usize, label: &str) -> Result<MultiIndex> {
        if self.alpha.len() != d {
            return Err(bad(
                label,
                format!(
                    "alpha {:?} has length {} but d = {d}",
                    self.alpha,
                    self.alpha.len()
                ),
            ));
        }
        let order: u64 = self.alpha.iter().map(|&a| a as u64).sum();
        if order > MAX_ORDER as u64 {
            return Err(bad(
                label,
                format!("alpha {:?} exceeds order {MAX_ORDER}", self.alpha),
            ));
        }
        Ok(MultiIndex::new(self.alpha.clone()))
    }

    fn rational(&self, label: &str) -> Result<BigRational> {
        match (&self.num, &self.den, self.value) {
            (Some(n), den, None) => {
                let n = n
                    .parse()
                    .ok_or_else(|| bad(label, "numerator is not an integer"))?;
                let d = match den {
                    Some(d) => d
                        .parse()
                        .ok_or_else(|| bad(label, "denominator is not an integer"))?,
                    None => BigInt::from(1),
                };
                if d.is_zero() {
                    return Err(bad(label, "zero denominator"));
                }
                Ok(BigRational::new(n, d))
            }
            (None, None, Some(v)) => {
                BigRational::from_float(v).ok_or_else(|| bad(label, "non-finite value"))
            }
            _ => Err(bad(label, "each term needs either num[/den] or value")),
        }
    }

    fn real(&self, label: &str) -> Result<f64> {
        let v = match self.value {
            Some(v) if self.num.is_none() && self.den.is_none() => v,
            _ => Scalar::to_f64(&self.rational(label)?),
        };
        if !v.is_finite() {
            return Err(bad(label, "non-finite value"));
        }
        Ok(v)
    }

    fn exact(alpha: &MultiIndex, c: &BigRational) -> TermDoc {
        TermDoc {
            alpha: alpha.entries().to_vec(),
            num: Some(IntLike::of(c.numer())),
            den: Some(IntLike::of(c.denom())),
            value: None,
        }
    }

    fn float(alpha: &MultiIndex, v: f64) -> TermDoc {
        TermDoc {
            alpha: alpha.entries().to_vec(),
            num: None,
            den: None,
            value: Some(v),
        }
    }
}

fn check_dim(d: usize, label: &str) -> Result<()> {
    if d == 0 || d > MAX_DIM {
        return Err(bad(label, format!("dimension {d} outside 1..={MAX_DIM}")));
    }
    Ok(())
}

fn parse_poly_doc(text: &str, label: &str) -> Result<PolyDoc> {
    let doc: PolyDoc = serde_json::from_str(text).map_err(|e| bad(label, e.to_string()))?;
    check_dim(doc.d, label)?;
    Ok(doc)
}

pub fn parse_polynomial_rational(text: &str, label: &str) -> Result<Polynomial<BigRational>> {
    let doc = parse_poly_doc(text, label)?;
    let mut p = Polynomial::zero(doc.d);
    for t in &doc.terms {
        p.add_term(t.alpha(doc.d, label)?, t.rational(label)?);
    }
    Ok(p)
}

pub fn parse_polynomial_real(text: &str, label: &str) -> Result<Polynomial<f64>> {
    let doc = parse_poly_doc(text, label)?;
    let mut p = Polynomial::zero(doc.d);
    for t in &doc.terms {
        p.add_term(t.alpha(doc.d, label)?, t.real(label)?);
    }
    Ok(p)
}

pub fn polynomial_rational_to_json(p: &Polynomial<BigRational>) -> String {
    let doc = PolyDoc {
        d: p.dim(),
        terms: p.terms().map(|(a, c)| TermDoc::exact(a, c)).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("serializable")
}

pub fn polynomial_real_to_json<T: Scalar>(p: &Polynomial<T>) -> String {
    let doc = PolyDoc {
        d: p.dim(),
        terms: p
            .terms()
            .map(|(a, c)| TermDoc::float(a, c.to_f64()))
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("serializable")
}

fn parse_tensor_doc(text: &str, label: &str) -> Result<TensorDoc> {
    let doc: TensorDoc = serde_json::from_str(text).map_err(|e| bad(label, e.to_string()))?;
    check_dim(doc.d, label)?;
    if doc.order > MAX_ORDER {
        return Err(bad(
            label,
            format!("order {} exceeds {MAX_ORDER}", doc.order),
        ));
    }
    Ok(doc)
}

fn check_entry_order(a: &MultiIndex, order: u32, label: &str) -> Result<()> {
    if a.order() != order {
        return Err(bad(
            label,
            format!("entry {a:?} does not have order {order}"),
        ));
    }
    Ok(())
}

pub fn parse_tensor_real(text: &str, label: &str) -> Result<SymTensor<f64>> {
    tensor_real_from_value(
        &serde_json::from_str(text).map_err(|e| bad(label, e.to_string()))?,
        label,
    )
}

pub fn parse_tensor_rational(text: &str, label: &str) -> Result<SymTensor<BigRational>> {
    let doc = parse_tensor_doc(text, label)?;
    let mut t = SymTensor::zeros(doc.d, doc.order);
    for e in &doc.entries {
        let a = e.alpha(doc.d, label)?;
        check_entry_order(&a, doc.order, label)?;
        t.set(a, e.rational(label)?)?;
    }
    Ok(t)
}

/// Reads a real tensor from an already-parsed JSON value (used for inline manifest entries).
pub fn tensor_real_from_value(v: &serde_json::Value, label: &str) -> Result<SymTensor<f64>> {
    let doc = parse_tensor_doc(&v.to_string(), label)?;
    let mut t = SymTensor::zeros(doc.d, doc.order);
    for e in &doc.entries {
        let a = e.alpha(doc.d, label)?;
        check_entry_order(&a, doc.order, label)?;
        t.set(a, e.real(label)?)?;
    }
    Ok(t)
}

pub fn tensor_real_to_value<T: Scalar>(t: &SymTensor<T>) -> serde_json::Value {
    let doc = TensorDoc {
        order: t.order(),
        d: t.dim(),
        entries: t
            .iter()
            .map(|(a, v)| TermDoc::float(a, v.to_f64()))
            .collect(),
    };
    serde_json::to_value(doc).expect("serializable")
}

pub fn tensor_rational_to_json(t: &SymTensor<BigRational>) -> String {
    let doc = TensorDoc {
        order: t.order(),
        d: t.dim(),
        entries: t.iter().map(|(a, v)| TermDoc::exact(a, v)).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("serializable")
}

pub fn tensor_real_to_json<T: Scalar>(t: &SymTensor<T>) -> String {
    serde_json::to_string_pretty(&tensor_real_to_value(t)).expect("serializable")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_polynomial_roundtrip() {
        let text = r#"{"d": 2, "terms": [{"alpha": [2, 0], "num": 1, "den": 2},
            {"alpha": [0, 2], "num": "-123456789012345678901234567890", "den": "7"}]}"#;
        let p = parse_polynomial_rational(text, "t").unwrap();
        assert_eq!(p.num_terms(), 2);
        let back = parse_polynomial_rational(&polynomial_rational_to_json(&p), "t").unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn real_polynomial_roundtrip() {
        let text = r#"{"d": 3, "terms": [{"alpha": [1, 0, 1], "value": 0.1}]}"#;
        let p = parse_polynomial_real(text, "t").unwrap();
        let back = parse_polynomial_real(&polynomial_real_to_json(&p), "t").unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn rejects_malformed_polynomials() {
        for text in [
            r#"{"d": 2, "terms": [{"alpha": [1], "num": 1}]}"#,
            r#"{"d": 0, "terms": []}"#,
            r#"{"d": 2, "terms": [{"alpha": [1, 0], "num": 1, "den": 0}]}"#,
            r#"{"d": 2, "terms": [{"alpha": [1, 0]}]}"#,
            r#"{"d": 2, "terms": [{"alpha": [1, 0], "num": 1, "value": 1.0}]}"#,
            r#"{"d": 2, "terms": [], "extra": 1}"#,
            r#"{"d": 2, "terms": [{"alpha": [4000000000, 4000000000], "num": 1}]}"#,
        ] {
            assert!(parse_polynomial_rational(text, "t").is_err(), "{text}");
        }
    }

    #[test]
    fn tensor_roundtrip_and_order_check() {
        let text = r#"{"order": 2, "d": 2, "entries": [{"alpha": [1, 1], "value": 0.25}]}"#;
        let t = parse_tensor_real(text, "t").unwrap();
        let back = parse_tensor_real(&tensor_real_to_json(&t), "t").unwrap();
        assert_eq!(t, back);
        let bad = r#"{"order": 2, "d": 2, "entries": [{"alpha": [1, 2], "value": 0.25}]}"#;
        assert!(parse_tensor_real(bad, "t").is_err());
        let r = parse_tensor_rational(
            r#"{"order": 4, "d": 2, "entries": [{"alpha": [4, 0], "num": 1, "den": 20}]}"#,
            "t",
        )
        .unwrap();
        assert_eq!(
            parse_tensor_rational(&tensor_rational_to_json(&r), "t").unwrap(),
            r
        );
    }
}
