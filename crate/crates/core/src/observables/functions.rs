//! Bounded functions of the replica overlap array.
//!
//! A [`ReplicaFn`] is `clip(P) * R_{l1,s1} * ... * R_{lk,sk}` where `P` is a
//! polynomial in the overlaps and the clip is optional. Without a clip the
//! whole function expands into a polynomial, whose Gibbs expectation the exact
//! engine evaluates from correlation functions instead of replica enumeration.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplicaFnError {
    #[error("unknown overlap function '{0}' (known: one, r12, r13, r23, r12sq, r12r13, r12r23, clip2r12)")]
    UnknownName(String),
    #[error("replica indices are 1-based (got {0})")]
    ZeroReplica(usize),
}

/// Product of overlaps `coeff * prod R_{l,s}`, replica indices 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub pairs: Vec<(usize, usize)>,
}

impl Monomial {
    pub fn constant(coeff: f64) -> Self {
        Self {
            coeff,
            pairs: Vec::new(),
        }
    }

    /// Pairs with `l == s` dropped (the self-overlap is 1 by convention).
    pub fn reduced_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied().filter(|(l, s)| l != s)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OverlapPoly {
    pub terms: Vec<Monomial>,
}

impl OverlapPoly {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: vec![Monomial::constant(c)],
        }
    }

    pub fn overlap(l: usize, s: usize) -> Self {
        Self {
            terms: vec![Monomial {
                coeff: 1.0,
                pairs: vec![(l, s)],
            }],
        }
    }

    pub fn times_overlap(&self, l: usize, s: usize) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| {
                    let mut pairs = t.pairs.clone();
                    pairs.push((l, s));
                    Monomial { coeff: t.coeff, pairs }
                })
                .collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| Monomial {
                    coeff: c * t.coeff,
                    pairs: t.pairs.clone(),
                })
                .collect(),
        }
    }

    pub fn max_replica(&self) -> usize {
        self.terms
            .iter()
            .flat_map(|t| t.pairs.iter().flat_map(|&(l, s)| [l, s]))
            .max()
            .unwrap_or(0)
    }

    pub fn max_degree(&self) -> usize {
        self.terms.iter().map(|t| t.reduced_pairs().count()).max().unwrap_or(0)
    }

    pub fn eval(&self, overlaps: &OverlapArray) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff * t.pairs.iter().map(|&(l, s)| overlaps.get(l, s)).product::<f64>())
            .sum()
    }
}

/// `clip(poly) * prod extra`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaFn {
    pub poly: OverlapPoly,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl ReplicaFn {
    pub fn one() -> Self {
        Self::from_poly(OverlapPoly::constant(1.0)).named("one")
    }

    pub fn overlap(l: usize, s: usize) -> Self {
        Self::from_poly(OverlapPoly::overlap(l, s)).named(&format!("r{l}{s}"))
    }

    pub fn from_poly(poly: OverlapPoly) -> Self {
        Self {
            poly,
            clip: None,
            extra: Vec::new(),
            name: None,
        }
    }

    pub fn clipped(poly: OverlapPoly, lo: f64, hi: f64) -> Self {
        Self {
            poly,
            clip: Some((lo, hi)),
            extra: Vec::new(),
            name: None,
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    /// Catalog lookup by name.
    pub fn by_name(name: &str) -> Result<Self, ReplicaFnError> {
        let f = match name {
            "one" | "1" => Self::one(),
            "r12" => Self::overlap(1, 2),
            "r13" => Self::overlap(1, 3),
            "r23" => Self::overlap(2, 3),
            "r12sq" => Self::from_poly(OverlapPoly::overlap(1, 2).times_overlap(1, 2)),
            "r12r13" => Self::from_poly(OverlapPoly::overlap(1, 2).times_overlap(1, 3)),
            "r12r23" => Self::from_poly(OverlapPoly::overlap(1, 2).times_overlap(2, 3)),
            "clip2r12" => Self::clipped(OverlapPoly::overlap(1, 2).scaled(2.0), -1.0, 1.0),
            other => return Err(ReplicaFnError::UnknownName(other.to_string())),
        };
        Ok(f.named(name))
    }

    pub fn times_overlap(&self, l: usize, s: usize) -> Self {
        let mut out = self.clone();
        match out.clip {
            None => out.poly = out.poly.times_overlap(l, s),
            Some(_) => out.extra.push((l, s)),
        }
        out.name = None;
        out
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        match out.clip {
            None => out.poly = out.poly.scaled(c),
            Some((lo, hi)) => {
                // c * clip(P, lo, hi) == clip(c * P, c * lo, c * hi), window flipped for c < 0
                out.poly = out.poly.scaled(c);
                out.clip = if c >= 0.0 {
                    Some((c * lo, c * hi))
                } else {
                    Some((c * hi, c * lo))
                };
            }
        }
        out.name = None;
        out
    }

    /// Polynomial form when no clip is involved.
    pub fn as_poly(&self) -> Option<&OverlapPoly> {
        match self.clip {
            None if self.extra.is_empty() => Some(&self.poly),
            _ => None,
        }
    }

    pub fn max_replica(&self) -> usize {
        self.extra
            .iter()
            .flat_map(|&(l, s)| [l, s])
            .chain(std::iter::once(self.poly.max_replica()))
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, overlaps: &OverlapArray) -> f64 {
        let mut v = self.poly.eval(overlaps);
        if let Some((lo, hi)) = self.clip {
            v = v.clamp(lo, hi);
        }
        v * self.extra.iter().map(|&(l, s)| overlaps.get(l, s)).product::<f64>()
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| "custom".to_string())
    }
}

impl fmt::Display for ReplicaFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Overlaps `R_{l,s}` between `m` replicas (1-based, diagonal fixed at 1).
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapArray {
    m: usize,
    values: Vec<f64>,
}

impl OverlapArray {
    pub fn from_configs(configs: &[&[i8]], weights: &[f64]) -> Self {
        let m = configs.len();
        let n = weights.len() as f64;
        let mut values = vec![1.0; m * m];
        for l in 0..m {
            for s in (l + 1)..m {
                let r = configs[l]
                    .iter()
                    .zip(configs[s])
                    .zip(weights)
                    .map(|((&a, &b), &w)| w * (a * b) as f64)
                    .sum::<f64>()
                    / n;
                values[l * m + s] = r;
                values[s * m + l] = r;
            }
        }
        Self { m, values }
    }

    pub fn replicas(&self) -> usize {
        self.m
    }

    /// `R_{l,s}` with 1-based indices.
    pub fn get(&self, l: usize, s: usize) -> f64 {
        self.values[(l - 1) * self.m + (s - 1)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_names_resolve() {
        for name in ["one", "r12", "r13", "r23", "r12sq", "r12r13", "r12r23", "clip2r12"] {
            let f = ReplicaFn::by_name(name).unwrap();
            assert_eq!(f.label(), name);
        }
        assert!(ReplicaFn::by_name("r99").is_err());
    }

    #[test]
    fn overlap_array_and_eval() {
        let a: [i8; 2] = [1, 1];
        let b: [i8; 2] = [1, -1];
        let c: [i8; 2] = [-1, -1];
        let w = [1.0, 0.25];
        let arr = OverlapArray::from_configs(&[&a, &b, &c], &w);
        assert_eq!(arr.get(1, 1), 1.0);
        assert!((arr.get(1, 2) - 0.375).abs() < 1e-15);
        assert!((arr.get(1, 3) + 0.625).abs() < 1e-15);
        let f = ReplicaFn::by_name("r12r13").unwrap();
        assert!((f.eval(&arr) - 0.375 * -0.625).abs() < 1e-15);
        let clipped = ReplicaFn::by_name("clip2r12").unwrap();
        assert_eq!(clipped.eval(&arr), 0.75);
        let times = clipped.times_overlap(1, 3);
        assert!((times.eval(&arr) - 0.75 * -0.625).abs() < 1e-15);
        assert!(times.as_poly().is_none());
        assert_eq!(ReplicaFn::by_name("r23").unwrap().times_overlap(1, 4).max_replica(), 4);
    }
}
