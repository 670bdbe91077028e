//! Exact finite-volume Gibbs computations.
//!
//! Configurations are encoded as bit masks: bit `i` set means `sigma_i = -1`.
//! The log-weight of a mask is evaluated without iterating over sites: the
//! coupling term counts disagreeing edges with one popcount per lattice
//! direction, the field term is a sum of two half-lattice lookup tables.
//!
//! Up to [`EnumerationConfig::table_spins`] spins the full probability vector
//! and its Walsh-Hadamard transform are stored, which gives every correlation
//! `<prod_{x in S} sigma_x>` as a table lookup. Larger lattices (up to
//! [`EnumerationConfig::max_spins`]) are handled by streaming passes.

mod derivatives;
mod replica;
mod transfer;

pub use derivatives::{
    derivative_stack, fd_derivative, replica_derivative_check, ReplicaDerivativeCheck, FD_STEP_FIRST, FD_STEP_MIXED,
};
pub use transfer::{transfer_matrix_log_z, transfer_matrix_site_means};

use thiserror::Error;

use crate::lattice::{LatticeError, LatticeSpec};
use crate::model::ModelParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("enumeration of {volume} spins exceeds the cap of {cap}")]
    VolumeCap { volume: usize, cap: usize },
    #[error("{replicas} replicas of {volume} spins exceed the enumeration budget of {budget} spins")]
    ReplicaBudget {
        replicas: usize,
        volume: usize,
        budget: usize,
    },
    #[error("operation needs stored probability tables (at most {table_spins} spins, lattice has {volume})")]
    NoTables { volume: usize, table_spins: usize },
    #[error("overlap monomial of degree {0} is above the supported degree 4")]
    DegreeTooHigh(usize),
    #[error("transfer matrices need a d = 1 chain (got d = {0})")]
    NotChain(usize),
    #[error("derivative order must be in {allowed} (got {order})")]
    InvalidOrder { order: u8, allowed: &'static str },
    #[error("finite-difference step must be positive (got {0})")]
    NonPositiveStep(f64),
    #[error("field array has {fields} entries, lattice has {volume} sites")]
    FieldLength { fields: usize, volume: usize },
    #[error("need at least {needed} replicas (got {got})")]
    TooFewReplicas { needed: usize, got: usize },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Enumeration limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationConfig {
    /// Largest number of spins (or replicas times spins) enumerated.
    pub max_spins: usize,
    /// Largest lattice for which probability and correlation tables are kept.
    pub table_spins: usize,
}

impl Default for EnumerationConfig {
    fn default() -> Self {
        Self {
            max_spins: 24,
            table_spins: 20,
        }
    }
}

/// Log-weight evaluator for bit-mask configurations.
#[derive(Debug, Clone)]
struct EnergyKernel {
    volume: usize,
    beta: f64,
    h: f64,
    edge_count: usize,
    /// `(offset, valid)`: edges `(i, i + offset)` for every bit `i` of `valid`.
    edge_groups: Vec<(u32, u32)>,
    low_bits: usize,
    field_low: Vec<f64>,
    field_high: Vec<f64>,
}

impl EnergyKernel {
    fn new(spec: &LatticeSpec, params: ModelParams, fields: &[f64]) -> Self {
        let volume = spec.volume();
        let mut groups: Vec<(u32, u32)> = Vec::new();
        for &(i, j) in spec.edges() {
            let offset = (j - i) as u32;
            match groups.iter_mut().find(|(o, _)| *o == offset) {
                Some(g) => g.1 |= 1 << i,
                None => groups.push((offset, 1 << i)),
            }
        }
        let low_bits = volume / 2;
        Self {
            volume,
            beta: params.beta,
            h: params.h,
            edge_count: spec.edges().len(),
            edge_groups: groups,
            low_bits,
            field_low: field_table(&fields[..low_bits]),
            field_high: field_table(&fields[low_bits..]),
        }
    }

    #[inline]
    fn disagreements(&self, mask: u32) -> u32 {
        self.edge_groups
            .iter()
            .map(|&(offset, valid)| ((mask ^ (mask >> offset)) & valid).count_ones())
            .sum()
    }

    /// `sum_x g_x sigma_x`.
    #[inline]
    fn field_sum(&self, mask: u32) -> f64 {
        let low = (mask & ((1u32 << self.low_bits) - 1)) as usize;
        let high = (mask >> self.low_bits) as usize;
        self.field_low[low] + self.field_high[high]
    }

    /// `sum_<xy> sigma_x sigma_y`.
    #[inline]
    fn bond_sum(&self, mask: u32) -> f64 {
        self.edge_count as f64 - 2.0 * self.disagreements(mask) as f64
    }

    #[inline]
    fn log_weight(&self, mask: u32) -> f64 {
        let bonds = if self.beta == 0.0 {
            0.0
        } else {
            self.beta * self.bond_sum(mask)
        };
        bonds + self.h * self.field_sum(mask)
    }

    fn configs(&self) -> u32 {
        debug_assert!(self.volume < 32);
        1u32 << self.volume
    }
}

/// `table[m] = sum_i g_i sigma_i(m)` over the given sites.
fn field_table(fields: &[f64]) -> Vec<f64> {
    let mut table = vec![0.0; 1 << fields.len()];
    table[0] = fields.iter().sum();
    for (i, &g) in fields.iter().enumerate() {
        let bit = 1usize << i;
        for m in 0..bit {
            table[m | bit] = table[m] - 2.0 * g;
        }
    }
    table
}

/// Neumaier-compensated sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    err: f64,
}

impl CompensatedSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.err += (self.sum - t) + x;
        } else {
            self.err += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.err
    }
}

#[derive(Debug, Clone)]
struct Tables {
    probs: Vec<f64>,
    /// `correlations[S] = < prod_{i in S} sigma_i >`.
    correlations: Vec<f64>,
}

/// A fully evaluated finite-volume Gibbs state.
#[derive(Debug, Clone)]
pub struct ExactGibbs {
    spec: LatticeSpec,
    params: ModelParams,
    fields: Vec<f64>,
    config: EnumerationConfig,
    kernel: EnergyKernel,
    log_z: f64,
    site_means: Vec<f64>,
    tables: Option<Tables>,
}

impl ExactGibbs {
    pub fn new(spec: &LatticeSpec, params: ModelParams, fields: &[f64]) -> Result<Self, EngineError> {
        Self::with_config(spec, params, fields, EnumerationConfig::default())
    }

    pub fn with_config(
        spec: &LatticeSpec,
        params: ModelParams,
        fields: &[f64],
        config: EnumerationConfig,
    ) -> Result<Self, EngineError> {
        let volume = spec.volume();
        if volume > config.max_spins || volume > 30 {
            return Err(EngineError::VolumeCap {
                volume,
                cap: config.max_spins.min(30),
            });
        }
        if fields.len() != volume {
            return Err(EngineError::FieldLength {
                fields: fields.len(),
                volume,
            });
        }
        let kernel = EnergyKernel::new(spec, params, fields);
        let mut state = Self {
            spec: spec.clone(),
            params,
            fields: fields.to_vec(),
            config,
            kernel,
            log_z: 0.0,
            site_means: Vec::new(),
            tables: None,
        };
        if volume <= config.table_spins {
            state.fill_tables();
        } else {
            state.stream_marginals();
        }
        Ok(state)
    }

    fn fill_tables(&mut self) {
        let kernel = &self.kernel;
        let mut logw: Vec<f64> = (0..kernel.configs()).map(|m| kernel.log_weight(m)).collect();
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = CompensatedSum::default();
        for w in logw.iter_mut() {
            *w = (*w - max).exp();
            total.add(*w);
        }
        let total = total.value();
        self.log_z = max + total.ln();
        let mut probs = logw;
        for p in probs.iter_mut() {
            *p /= total;
        }
        let mut correlations = probs.clone();
        walsh_hadamard(&mut correlations);
        self.site_means = (0..self.kernel.volume).map(|i| correlations[1 << i]).collect();
        self.tables = Some(Tables { probs, correlations });
    }

    fn stream_marginals(&mut self) {
        let kernel = &self.kernel;
        let n = kernel.volume;
        let max = (0..kernel.configs())
            .map(|m| kernel.log_weight(m))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = CompensatedSum::default();
        let mut down = vec![0.0; n];
        for m in 0..kernel.configs() {
            let w = (kernel.log_weight(m) - max).exp();
            total.add(w);
            let mut bits = m;
            while bits != 0 {
                down[bits.trailing_zeros() as usize] += w;
                bits &= bits - 1;
            }
        }
        let total = total.value();
        self.log_z = max + total.ln();
        self.site_means = down.iter().map(|d| 1.0 - 2.0 * d / total).collect();
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn params(&self) -> ModelParams {
        self.params
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn config(&self) -> EnumerationConfig {
        self.config
    }

    pub fn volume(&self) -> usize {
        self.kernel.volume
    }

    /// `F_n = log Z_n`.
    pub fn log_partition(&self) -> f64 {
        self.log_z
    }

    pub fn site_means(&self) -> &[f64] {
        &self.site_means
    }

    pub fn site_mean(&self, x: usize) -> Result<f64, EngineError> {
        self.spec.check_site(x)?;
        Ok(self.site_means[x])
    }

    pub fn has_tables(&self) -> bool {
        self.tables.is_some()
    }

    fn tables(&self) -> Result<&Tables, EngineError> {
        self.tables.as_ref().ok_or(EngineError::NoTables {
            volume: self.volume(),
            table_spins: self.config.table_spins,
        })
    }

    /// Probability of a configuration mask (bit `i` set means `sigma_i = -1`).
    pub fn probability(&self, mask: u32) -> f64 {
        match &self.tables {
            Some(t) => t.probs[mask as usize],
            None => (self.kernel.log_weight(mask) - self.log_z).exp(),
        }
    }

    /// `< prod_{i in S} sigma_i >` for the site set encoded by `set`.
    pub fn correlation(&self, set: u32) -> f64 {
        match &self.tables {
            Some(t) => t.correlations[set as usize],
            None => self.expect_by_mask(|m| if (m & set).count_ones() % 2 == 0 { 1.0 } else { -1.0 }),
        }
    }

    /// `<sigma_x sigma_y>` (1 when `x == y`).
    pub fn pair_mean(&self, x: usize, y: usize) -> Result<f64, EngineError> {
        self.spec.check_site(x)?;
        self.spec.check_site(y)?;
        if x == y {
            return Ok(1.0);
        }
        Ok(self.correlation((1 << x) | (1 << y)))
    }

    /// `<sigma_x sigma_y> - <sigma_x><sigma_y>`; `1 - <sigma_x>^2` on the diagonal.
    pub fn truncated_correlation(&self, x: usize, y: usize) -> Result<f64, EngineError> {
        let pair = self.pair_mean(x, y)?;
        Ok(pair - self.site_means[x] * self.site_means[y])
    }

    /// Gibbs expectation of an arbitrary function of the configuration mask.
    pub fn expect_by_mask(&self, f: impl Fn(u32) -> f64) -> f64 {
        let mut acc = CompensatedSum::default();
        match &self.tables {
            Some(t) => {
                for (m, &p) in t.probs.iter().enumerate() {
                    acc.add(p * f(m as u32));
                }
            }
            None => {
                for m in 0..self.kernel.configs() {
                    acc.add((self.kernel.log_weight(m) - self.log_z).exp() * f(m));
                }
            }
        }
        acc.value()
    }

    /// `sum_x g_x sigma_x` for a configuration mask.
    pub fn field_sum(&self, mask: u32) -> f64 {
        self.kernel.field_sum(mask)
    }

    /// `sum_<xy> sigma_x sigma_y` for a configuration mask.
    pub fn bond_sum(&self, mask: u32) -> f64 {
        self.kernel.bond_sum(mask)
    }

    /// `<Delta_n> = (1/|V_n|) sum_x g_x <sigma_x>`.
    pub fn mean_delta(&self) -> f64 {
        self.fields
            .iter()
            .zip(&self.site_means)
            .map(|(g, s)| g * s)
            .sum::<f64>()
            / self.volume() as f64
    }

    /// `<|Delta_n - center|>`.
    pub fn delta_abs_deviation(&self, center: f64) -> f64 {
        let n = self.volume() as f64;
        self.expect_by_mask(|m| (self.kernel.field_sum(m) / n - center).abs())
    }

    /// Decodes a mask into a `+1/-1` configuration.
    pub fn decode(&self, mask: u32) -> Vec<i8> {
        decode_mask(mask, self.volume())
    }
}

pub(crate) fn decode_mask(mask: u32, volume: usize) -> Vec<i8> {
    (0..volume).map(|i| if mask & (1 << i) != 0 { -1 } else { 1 }).collect()
}

/// In-place unnormalized Walsh-Hadamard transform.
fn walsh_hadamard(values: &mut [f64]) {
    let n = values.len();
    let mut len = 1;
    while len < n {
        for block in values.chunks_exact_mut(2 * len) {
            let (a, b) = block.split_at_mut(len);
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                let (u, v) = (*x, *y);
                *x = u + v;
                *y = u - v;
            }
        }
        len *= 2;
    }
}

/// `F_n = log Z_n` by full enumeration.
pub fn log_partition(spec: &LatticeSpec, params: ModelParams, fields: &[f64]) -> Result<f64, EngineError> {
    log_partition_with(spec, params, fields, EnumerationConfig::default())
}

/// Enumeration without any tables: only `log Z` is computed.
pub fn log_partition_with(
    spec: &LatticeSpec,
    params: ModelParams,
    fields: &[f64],
    config: EnumerationConfig,
) -> Result<f64, EngineError> {
    let volume = spec.volume();
    if volume > config.max_spins || volume > 30 {
        return Err(EngineError::VolumeCap {
            volume,
            cap: config.max_spins.min(30),
        });
    }
    if fields.len() != volume {
        return Err(EngineError::FieldLength {
            fields: fields.len(),
            volume,
        });
    }
    let kernel = EnergyKernel::new(spec, params, fields);
    let max = (0..kernel.configs())
        .map(|m| kernel.log_weight(m))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = CompensatedSum::default();
    for m in 0..kernel.configs() {
        total.add((kernel.log_weight(m) - max).exp());
    }
    Ok(max + total.value().ln())
}
