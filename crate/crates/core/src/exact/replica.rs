//! Multi-replica Gibbs expectations on the exact engine.

use super::{decode_mask, CompensatedSum, EngineError, ExactGibbs};
use crate::observables::{OverlapArray, OverlapPoly, ReplicaFn};

const MAX_MONOMIAL_DEGREE: usize = 4;

impl ExactGibbs {
    /// `<f>` under the `m`-fold product measure, by enumeration of all
    /// `m`-tuples of configurations. Needs `m * |V_n|` within the spin budget.
    pub fn replica_expectation<F>(&self, m: usize, f: F) -> Result<f64, EngineError>
    where
        F: Fn(&[&[i8]]) -> f64,
    {
        if m == 0 {
            return Err(EngineError::TooFewReplicas { needed: 1, got: 0 });
        }
        let volume = self.volume();
        if m * volume > self.config.max_spins {
            return Err(EngineError::ReplicaBudget {
                replicas: m,
                volume,
                budget: self.config.max_spins,
            });
        }
        let states = 1usize << volume;
        let configs: Vec<Vec<i8>> = (0..states as u32).map(|k| decode_mask(k, volume)).collect();
        let probs: Vec<f64> = (0..states as u32).map(|k| self.probability(k)).collect();

        let mut index = vec![0usize; m];
        let mut acc = CompensatedSum::default();
        loop {
            let weight: f64 = index.iter().map(|&k| probs[k]).product();
            if weight != 0.0 {
                let tuple: Vec<&[i8]> = index.iter().map(|&k| configs[k].as_slice()).collect();
                acc.add(weight * f(&tuple));
            }
            // odometer over replica tuples
            let mut r = 0;
            loop {
                if r == m {
                    return Ok(acc.value());
                }
                index[r] += 1;
                if index[r] < states {
                    break;
                }
                index[r] = 0;
                r += 1;
            }
        }
    }

    /// `<P>` for an overlap polynomial with weights `w_x` (normally `h_x^2`),
    /// expanded into single-replica correlation functions:
    ///
    /// `<prod_k R_{l_k s_k}> = |V|^{-K} sum_{x_1..x_K} prod_k w_{x_k} prod_r <prod_{k ~ r} sigma_{x_k}>`
    ///
    /// where `k ~ r` runs over the factors that involve replica `r`.
    pub fn expect_poly(&self, poly: &OverlapPoly, weights: &[f64]) -> Result<f64, EngineError> {
        let tables = self.tables()?;
        let volume = self.volume();
        assert_eq!(weights.len(), volume, "overlap weights must have one entry per site");
        let mut total = 0.0;
        for term in &poly.terms {
            let pairs: Vec<(usize, usize)> = term.reduced_pairs().collect();
            if pairs.len() > MAX_MONOMIAL_DEGREE {
                return Err(EngineError::DegreeTooHigh(pairs.len()));
            }
            if pairs.is_empty() {
                total += term.coeff;
                continue;
            }
            let replicas = pairs.iter().flat_map(|&(l, s)| [l, s]).max().unwrap_or(0);
            let mut masks = vec![0u32; replicas + 1];
            let sum = monomial_sum(&pairs, 0, &mut masks, weights, &tables.correlations);
            total += term.coeff * sum / (volume as f64).powi(pairs.len() as i32);
        }
        Ok(total)
    }

    /// `<f>` for a catalog replica function; clipped functions fall back to
    /// replica enumeration.
    pub fn expect_replica_fn(&self, f: &ReplicaFn, weights: &[f64]) -> Result<f64, EngineError> {
        match f.as_poly() {
            Some(poly) => self.expect_poly(poly, weights),
            None => {
                let m = f.max_replica().max(1);
                self.replica_expectation(m, |configs| f.eval(&OverlapArray::from_configs(configs, weights)))
            }
        }
    }
}

fn monomial_sum(
    pairs: &[(usize, usize)],
    depth: usize,
    masks: &mut [u32],
    weights: &[f64],
    correlations: &[f64],
) -> f64 {
    if depth == pairs.len() {
        return masks[1..].iter().map(|&m| correlations[m as usize]).product();
    }
    let (l, s) = pairs[depth];
    let mut acc = 0.0;
    for (x, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let bit = 1u32 << x;
        masks[l] ^= bit;
        masks[s] ^= bit;
        acc += w * monomial_sum(pairs, depth + 1, masks, weights, correlations);
        masks[l] ^= bit;
        masks[s] ^= bit;
    }
    acc
}
