//! Replica overlaps, `Delta_n`, magnetization and quenched statistics.

mod ensemble;
mod functions;
mod stats;

pub use ensemble::{
    delta_self_averaging, fkg_scan, free_energy_stats, gg_residual, nu_stats, overlap_variance, q_consistency,
    replica_moments, Backend, DeltaSelfAveraging, EngineChoice, Ensemble, EnsembleError, Estimate, FkgScan, GgResidual,
    Instance, OverlapVariance, QConsistency, H_STEP,
};

pub use functions::{Monomial, OverlapArray, OverlapPoly, ReplicaFn, ReplicaFnError};
pub use stats::{CsvRow, QuenchedStats, SeedRecord, StatsError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ObservableError {
    #[error("size mismatch: {what} has {got} entries, expected {expected}")]
    SizeMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("empty configuration")]
    Empty,
}

/// One value of `R_{l,s}` together with the weights it was computed with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapSample {
    pub value: f64,
    pub pair: (usize, usize),
    pub weights: Vec<f64>,
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), ObservableError> {
    if got != expected {
        return Err(ObservableError::SizeMismatch { what, got, expected });
    }
    Ok(())
}

/// `(1/|V|) sum_x w_x a_x b_x` with `w_x = h_x^2`.
pub fn overlap_value(a: &[i8], b: &[i8], weights: &[f64]) -> Result<f64, ObservableError> {
    if a.is_empty() {
        return Err(ObservableError::Empty);
    }
    check_len("second configuration", b.len(), a.len())?;
    check_len("weights", weights.len(), a.len())?;
    let sum: f64 = a
        .iter()
        .zip(b)
        .zip(weights)
        .map(|((&x, &y), &w)| w * f64::from(x * y))
        .sum();
    Ok(sum / a.len() as f64)
}

/// `R_{l,s}` between replicas `l` and `s`; the self-overlap is 1 by convention.
pub fn overlap(
    sigma_l: &[i8],
    sigma_s: &[i8],
    weights: &[f64],
    pair: (usize, usize),
) -> Result<OverlapSample, ObservableError> {
    let value = if pair.0 == pair.1 {
        check_len("second configuration", sigma_s.len(), sigma_l.len())?;
        check_len("weights", weights.len(), sigma_l.len())?;
        1.0
    } else {
        overlap_value(sigma_l, sigma_s, weights)?
    };
    Ok(OverlapSample {
        value,
        pair,
        weights: weights.to_vec(),
    })
}

/// `Delta_n = (1/|V|) sum_x g_x sigma_x`.
pub fn delta_n(sigma: &[i8], fields: &[f64]) -> Result<f64, ObservableError> {
    if sigma.is_empty() {
        return Err(ObservableError::Empty);
    }
    check_len("fields", fields.len(), sigma.len())?;
    Ok(sigma.iter().zip(fields).map(|(&s, &g)| g * f64::from(s)).sum::<f64>() / sigma.len() as f64)
}

/// Mean spin.
pub fn magnetization(sigma: &[i8]) -> Result<f64, ObservableError> {
    if sigma.is_empty() {
        return Err(ObservableError::Empty);
    }
    Ok(sigma.iter().map(|&s| f64::from(s)).sum::<f64>() / sigma.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn overlap_examples() {
        let w = [1.0, 1.0];
        assert_eq!(overlap(&[1, -1], &[1, -1], &w, (1, 2)).unwrap().value, 1.0);
        assert_eq!(overlap(&[1, -1], &[-1, 1], &w, (1, 2)).unwrap().value, -1.0);
        let r = overlap(&[1, 1], &[1, -1], &[1.0, 0.25], (1, 2)).unwrap();
        assert!((r.value - 0.375).abs() < 1e-15);
        assert_eq!(overlap(&[1, 1], &[-1, -1], &w, (2, 2)).unwrap().value, 1.0);
        assert!(overlap(&[1], &[1, 1], &w, (1, 2)).is_err());
    }

    #[test]
    fn delta_and_magnetization_examples() {
        assert!((delta_n(&[1, 1], &[1.0, -0.5]).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(delta_n(&[1, -1, 1], &[0.0; 3]).unwrap(), 0.0);
        let g = [0.3, -1.2, 2.0];
        let aligned: Vec<i8> = g.iter().map(|&x: &f64| if x >= 0.0 { 1 } else { -1 }).collect();
        let max = g.iter().map(|x: &f64| x.abs()).sum::<f64>() / 3.0;
        assert!((delta_n(&aligned, &g).unwrap() - max).abs() < 1e-15);
        assert_eq!(magnetization(&[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(magnetization(&[-1, -1]).unwrap(), -1.0);
        assert_eq!(magnetization(&[1, 1, -1, 1]).unwrap(), 0.5);
        assert!(magnetization(&[]).is_err());
    }

    proptest! {
        #[test]
        fn overlap_bounded(spins in proptest::collection::vec((any::<bool>(), any::<bool>(), 0.0f64..=1.0), 1..40)) {
            let a: Vec<i8> = spins.iter().map(|s| if s.0 { 1 } else { -1 }).collect();
            let b: Vec<i8> = spins.iter().map(|s| if s.1 { 1 } else { -1 }).collect();
            let w: Vec<f64> = spins.iter().map(|s| s.2 * s.2).collect();
            let r = overlap_value(&a, &b, &w).unwrap();
            prop_assert!(r.abs() <= 1.0 + 1e-15);
            prop_assert!((r - overlap_value(&b, &a, &w).unwrap()).abs() == 0.0);
        }
    }
}
