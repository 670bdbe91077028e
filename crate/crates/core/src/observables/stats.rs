//! Quenched statistics: per-seed records and the summaries derived from them.
//!
//! Records are kept sorted by seed and every summary is recomputed from the
//! sorted records, so merging is associative, commutative and bit-exact.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatsError {
    #[error("cannot merge statistics of '{left}' with '{right}'")]
    NameMismatch { left: String, right: String },
    #[error("seed {0} appears in both operands of a merge")]
    DuplicateSeed(u64),
}

/// One disorder realization's contribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    /// The seed-level value, typically a Gibbs expectation `<O>`.
    pub value: f64,
    /// Within-seed (thermal) variance `<O^2> - <O>^2`, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchedStats {
    pub observable: String,
    records: Vec<SeedRecord>,
}

impl QuenchedStats {
    pub fn new(observable: &str) -> Self {
        Self {
            observable: observable.to_string(),
            records: Vec::new(),
        }
    }

    pub fn from_records(observable: &str, mut records: Vec<SeedRecord>) -> Result<Self, StatsError> {
        records.sort_by_key(|r| r.seed);
        if let Some(w) = records.windows(2).find(|w| w[0].seed == w[1].seed) {
            return Err(StatsError::DuplicateSeed(w[0].seed));
        }
        Ok(Self {
            observable: observable.to_string(),
            records,
        })
    }

    /// Adds a record, keeping seed order. A repeated seed replaces the old value.
    pub fn push(&mut self, seed: u64, value: f64) {
        self.insert(SeedRecord {
            seed,
            value,
            thermal: None,
        });
    }

    pub fn push_with_thermal(&mut self, seed: u64, value: f64, thermal: f64) {
        self.insert(SeedRecord {
            seed,
            value,
            thermal: Some(thermal),
        });
    }

    fn insert(&mut self, record: SeedRecord) {
        match self.records.binary_search_by_key(&record.seed, |r| r.seed) {
            Ok(i) => self.records[i] = record,
            Err(i) => self.records.insert(i, record),
        }
    }

    pub fn records(&self) -> &[SeedRecord] {
        &self.records
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.value)
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        self.records.iter().map(|r| r.seed)
    }

    pub fn count(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.records.is_empty() {
            return f64::NAN;
        }
        self.values().sum::<f64>() / self.count() as f64
    }

    /// Unbiased between-seed variance (0 for a single record).
    pub fn variance(&self) -> f64 {
        let n = self.count();
        if n < 2 {
            return if n == 1 { 0.0 } else { f64::NAN };
        }
        self.shifted_sum_sq() / (n - 1) as f64
    }

    /// Sum of squared deviations, shifted by the first value so that
    /// identical records give exactly zero.
    fn shifted_sum_sq(&self) -> f64 {
        let shift = self.records[0].value;
        let (s, s2) = self.values().fold((0.0, 0.0), |(s, s2), v| {
            (s + (v - shift), s2 + (v - shift) * (v - shift))
        });
        (s2 - s * s / self.count() as f64).max(0.0)
    }

    /// Population (biased) between-seed variance, the disorder part of a
    /// variance decomposition.
    pub fn disorder_variance(&self) -> f64 {
        if self.records.is_empty() {
            return f64::NAN;
        }
        self.shifted_sum_sq() / self.count() as f64
    }

    /// Mean within-seed variance, if every record carries one.
    pub fn thermal_mean(&self) -> Option<f64> {
        if self.records.is_empty() {
            return None;
        }
        let mut acc = 0.0;
        for r in &self.records {
            acc += r.thermal?;
        }
        Some(acc / self.count() as f64)
    }

    pub fn standard_error(&self) -> f64 {
        (self.variance() / self.count() as f64).sqrt()
    }

    /// Union of two disjoint seed sets.
    pub fn merge(&self, other: &Self) -> Result<Self, StatsError> {
        if self.observable != other.observable {
            return Err(StatsError::NameMismatch {
                left: self.observable.clone(),
                right: other.observable.clone(),
            });
        }
        let mut records = self.records.clone();
        records.extend_from_slice(&other.records);
        Self::from_records(&self.observable, records)
    }

    /// Records paired by seed with another statistic over the same seeds.
    pub fn paired<'a>(&'a self, other: &'a Self) -> impl Iterator<Item = (f64, f64)> + 'a {
        self.records.iter().filter_map(move |r| {
            other
                .records
                .binary_search_by_key(&r.seed, |o| o.seed)
                .ok()
                .map(|i| (r.value, other.records[i].value))
        })
    }
}

/// Sample covariance of paired values.
pub(crate) fn covariance(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len();
    if n < 2 {
        return 0.0;
    }
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
    pairs.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (n - 1) as f64
}

/// One output row of the CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub observable: String,
    pub n: usize,
    pub d: usize,
    pub beta: f64,
    pub h: f64,
    pub profile: String,
    pub dist: String,
    pub mean: f64,
    pub variance: f64,
    #[serde(rename = "SE")]
    pub se: f64,
    pub seeds: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_observable() {
        let mut s = QuenchedStats::new("c");
        for seed in 0..10 {
            s.push(seed, 2.5);
        }
        assert_eq!(s.mean(), 2.5);
        assert_eq!(s.variance(), 0.0);
        assert_eq!(s.standard_error(), 0.0);
    }

    #[test]
    fn empty_and_single() {
        let mut s = QuenchedStats::new("x");
        assert!(s.mean().is_nan());
        s.push(3, 1.0);
        assert_eq!(s.variance(), 0.0);
    }

    #[test]
    fn merge_rejects_overlap_and_names() {
        let mut a = QuenchedStats::new("x");
        a.push(1, 1.0);
        let mut b = QuenchedStats::new("x");
        b.push(1, 2.0);
        assert_eq!(a.merge(&b), Err(StatsError::DuplicateSeed(1)));
        assert!(a.merge(&QuenchedStats::new("y")).is_err());
    }

    #[test]
    fn thermal_decomposition() {
        let mut s = QuenchedStats::new("r");
        s.push_with_thermal(0, 0.2, 0.1);
        s.push_with_thermal(1, 0.4, 0.3);
        assert!((s.thermal_mean().unwrap() - 0.2).abs() < 1e-15);
        assert!((s.disorder_variance() - 0.01).abs() < 1e-15);
        s.push(2, 0.0);
        assert_eq!(s.thermal_mean(), None);
    }

    proptest! {
        #[test]
        fn merge_matches_union(values in proptest::collection::vec(-10.0f64..10.0, 2..60), split in 0usize..60) {
            let split = split % values.len();
            let mut all = QuenchedStats::new("v");
            let mut left = QuenchedStats::new("v");
            let mut right = QuenchedStats::new("v");
            for (i, &v) in values.iter().enumerate() {
                // interleave seeds so neither half is a contiguous range
                let seed = (i as u64 * 7919) % 1_000_003;
                all.push(seed, v);
                if i % 3 == split % 3 { left.push(seed, v) } else { right.push(seed, v) }
            }
            let ab = left.merge(&right).unwrap();
            let ba = right.merge(&left).unwrap();
            prop_assert_eq!(ab.mean().to_bits(), all.mean().to_bits());
            prop_assert_eq!(ab.variance().to_bits(), all.variance().to_bits());
            prop_assert_eq!(&ab, &ba);
            prop_assert!(all.variance() >= 0.0);
        }
    }
}
