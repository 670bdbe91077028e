//! Quenched (disorder-averaged) functionals over an ensemble of seeds.
//!
//! Every functional is a fold over per-seed results computed in parallel and
//! collected in seed order, so results do not depend on the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::functions::{OverlapArray, ReplicaFn};
use super::stats::{covariance, QuenchedStats};
use crate::disorder::{DisorderError, DisorderRealization, FieldProfile, ZetaDistribution};
use crate::exact::{
    log_partition, transfer_matrix_log_z, transfer_matrix_site_means, EngineError, EnumerationConfig, ExactGibbs,
};
use crate::lattice::LatticeSpec;
use crate::mcmc::{McmcError, ReplicaSampler, SamplerConfig};
use crate::model::ModelParams;

/// Central-difference step in `h` for `d psi_n / d h`.
pub const H_STEP: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("ensemble has no seeds")]
    Empty,
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Mcmc(#[from] McmcError),
    #[error(transparent)]
    Disorder(#[from] DisorderError),
}

/// Requested engine; `auto` enumerates when probability tables fit and
/// samples otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineChoice {
    Exact,
    TransferMatrix,
    Mcmc,
    #[default]
    Auto,
}

/// Engine actually used for a computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Exact,
    TransferMatrix,
    Mcmc,
}

/// A value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, se: 0.0 }
    }
}

/// One cell of a quenched experiment: a lattice, model parameters, a
/// disorder law and the seeds to average over.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub spec: LatticeSpec,
    pub params: ModelParams,
    pub profile: FieldProfile,
    pub dist: ZetaDistribution,
    pub seeds: Vec<u64>,
    pub engine: EngineChoice,
    pub sampler: SamplerConfig,
}

/// Per-seed inputs handed to evaluators.
pub struct Instance<'a> {
    pub seed: u64,
    pub ensemble: &'a Ensemble,
    pub disorder: DisorderRealization,
}

impl Instance<'_> {
    pub fn fields(&self) -> &[f64] {
        self.disorder.fields()
    }

    pub fn exact(&self) -> Result<ExactGibbs, EngineError> {
        ExactGibbs::new(&self.ensemble.spec, self.ensemble.params, self.fields())
    }

    /// Chain seed for this disorder seed.
    pub fn sampler_config(&self) -> SamplerConfig {
        let base = &self.ensemble.sampler;
        base.with_seed(base.seed.wrapping_add(self.seed))
    }

    pub fn replica_sampler(&self, m: usize) -> Result<ReplicaSampler<'_>, McmcError> {
        ReplicaSampler::new(
            &self.ensemble.spec,
            self.ensemble.params,
            self.fields(),
            m,
            &self.sampler_config(),
        )
    }
}

impl Ensemble {
    pub fn new(
        spec: LatticeSpec,
        params: ModelParams,
        profile: FieldProfile,
        dist: ZetaDistribution,
        seeds: Vec<u64>,
    ) -> Self {
        Self {
            spec,
            params,
            profile,
            dist,
            seeds,
            engine: EngineChoice::Auto,
            sampler: SamplerConfig::default(),
        }
    }

    pub fn with_engine(mut self, engine: EngineChoice) -> Self {
        self.engine = engine;
        self
    }

    pub fn with_sampler(mut self, sampler: SamplerConfig) -> Self {
        self.sampler = sampler;
        self
    }

    pub fn with_params(&self, params: ModelParams) -> Self {
        Self { params, ..self.clone() }
    }

    /// Engine used for Gibbs expectations of replica functions.
    pub fn backend(&self) -> Backend {
        match self.engine {
            EngineChoice::Exact => Backend::Exact,
            EngineChoice::TransferMatrix => Backend::TransferMatrix,
            EngineChoice::Mcmc => Backend::Mcmc,
            EngineChoice::Auto => {
                if self.spec.volume() <= EnumerationConfig::default().table_spins {
                    Backend::Exact
                } else {
                    Backend::Mcmc
                }
            }
        }
    }

    /// Engine used for `F_n` and single-site means: chains prefer transfer
    /// matrices under `auto`.
    pub fn free_energy_backend(&self) -> Backend {
        match self.engine {
            EngineChoice::Auto if self.spec.dim() == 1 => Backend::TransferMatrix,
            EngineChoice::Auto => {
                if self.spec.volume() <= EnumerationConfig::default().max_spins {
                    Backend::Exact
                } else {
                    Backend::Mcmc
                }
            }
            _ => self.backend(),
        }
    }

    pub fn realize(&self, seed: u64) -> Result<DisorderRealization, DisorderError> {
        DisorderRealization::realize(&self.spec, &self.profile, self.dist, seed)
    }

    /// `(1/|V|) sum_x h_x^2`, the self-overlap of the weighted overlap.
    pub fn self_overlap(&self) -> Result<f64, DisorderError> {
        let h = self.profile.values(&self.spec)?;
        Ok(h.iter().map(|v| v * v).sum::<f64>() / h.len() as f64)
    }

    /// Runs `f` for every seed in parallel; results come back in seed-list order.
    pub fn map_seeds<T, F>(&self, f: F) -> Result<Vec<T>, EnsembleError>
    where
        T: Send,
        F: Fn(&Instance<'_>) -> Result<T, EnsembleError> + Sync,
    {
        if self.seeds.is_empty() {
            return Err(EnsembleError::Empty);
        }
        self.seeds
            .par_iter()
            .map(|&seed| {
                let instance = Instance {
                    seed,
                    ensemble: self,
                    disorder: self.realize(seed)?,
                };
                f(&instance)
            })
            .collect()
    }
}

/// Quenched statistics of a per-seed evaluator returning `(<O>, thermal variance)`.
pub fn nu_stats<F>(ensemble: &Ensemble, name: &str, evaluator: F) -> Result<QuenchedStats, EnsembleError>
where
    F: Fn(&Instance<'_>) -> Result<(f64, Option<f64>), EnsembleError> + Sync,
{
    let values = ensemble.map_seeds(|inst| evaluator(inst).map(|v| (inst.seed, v)))?;
    let mut stats = QuenchedStats::new(name);
    for (seed, (value, thermal)) in values {
        match thermal {
            Some(t) => stats.push_with_thermal(seed, value, t),
            None => stats.push(seed, value),
        }
    }
    Ok(stats)
}

/// Gibbs expectations `<f_i>` of replica functions at one disorder seed,
/// exactly or from an `m`-replica chain.
pub fn replica_moments(instance: &Instance<'_>, fns: &[ReplicaFn]) -> Result<Vec<f64>, EnsembleError> {
    let weights = instance.disorder.overlap_weights();
    match instance.ensemble.backend() {
        Backend::Exact => {
            let state = instance.exact()?;
            fns.iter()
                .map(|f| state.expect_replica_fn(f, &weights).map_err(Into::into))
                .collect()
        }
        Backend::Mcmc => {
            let m = fns.iter().map(ReplicaFn::max_replica).max().unwrap_or(1).max(1);
            let mut sampler = instance.replica_sampler(m)?;
            let mut sums = vec![0.0; fns.len()];
            let mut count = 0usize;
            while let Some(tuple) = sampler.next_tuple() {
                let overlaps = OverlapArray::from_configs(&tuple, &weights);
                for (s, f) in sums.iter_mut().zip(fns) {
                    *s += f.eval(&overlaps);
                }
                count += 1;
            }
            Ok(sums.into_iter().map(|s| s / count as f64).collect())
        }
        Backend::TransferMatrix => Err(EnsembleError::Unsupported(
            "replica expectations need the exact or mcmc engine".into(),
        )),
    }
}

/// Standard error of `g(mean of rows)` by the delta method.
fn delta_method_se(rows: &[Vec<f64>], grad: &[f64]) -> f64 {
    let n = rows.len();
    if n < 2 {
        return 0.0;
    }
    let k = grad.len();
    let mut var = 0.0;
    for i in 0..k {
        for j in 0..k {
            if grad[i] == 0.0 || grad[j] == 0.0 {
                continue;
            }
            let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r[i], r[j])).collect();
            var += grad[i] * grad[j] * covariance(&pairs);
        }
    }
    (var.max(0.0) / n as f64).sqrt()
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let k = rows.first().map_or(0, Vec::len);
    (0..k)
        .map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GgResidual {
    pub m: usize,
    pub f: String,
    pub residual: Estimate,
    /// `nu(f R_{1,m+1})`, `nu(f)`, `nu(R_{1,2})`, `sum_{s=2}^m nu(f R_{1,s})`.
    pub terms: [f64; 4],
    pub seeds: usize,
    pub backend: Backend,
}

/// `nu(f R_{1,m+1}) - (1/m) nu(f) nu(R_{1,2}) - (1/m) sum_{s=2}^m nu(f R_{1,s})`.
pub fn gg_residual(ensemble: &Ensemble, m: usize, f: &ReplicaFn) -> Result<GgResidual, EnsembleError> {
    if m < 2 {
        return Err(EnsembleError::Unsupported(format!(
            "gg residual needs m >= 2 (got {m})"
        )));
    }
    if f.max_replica() > m {
        return Err(EnsembleError::Unsupported(format!(
            "{} involves replica {} but m = {m}",
            f.label(),
            f.max_replica()
        )));
    }
    let mut fns = vec![f.times_overlap(1, m + 1), f.clone(), ReplicaFn::overlap(1, 2)];
    fns.extend((2..=m).map(|s| f.times_overlap(1, s)));
    let rows = ensemble.map_seeds(|inst| {
        let v = replica_moments(inst, &fns)?;
        Ok(vec![v[0], v[1], v[2], v[3..].iter().sum()])
    })?;
    let means = column_means(&rows);
    let mf = m as f64;
    let residual = means[0] - means[1] * means[2] / mf - means[3] / mf;
    let grad = [1.0, -means[2] / mf, -means[1] / mf, -1.0 / mf];
    Ok(GgResidual {
        m,
        f: f.label(),
        residual: Estimate {
            value: residual,
            se: delta_method_se(&rows, &grad),
        },
        terms: [means[0], means[1], means[2], means[3]],
        seeds: rows.len(),
        backend: ensemble.backend(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapVariance {
    /// `nu((R_{1,2} - nu(R_{1,2}))^2) = nu(R^2) - nu(R)^2`.
    pub nu_variance: Estimate,
    /// `E(<R^2> - <R>^2)`.
    pub thermal: Estimate,
    /// Population variance over seeds of `<R_{1,2}>`.
    pub disorder: f64,
    pub nu_r12: Estimate,
    pub stats: QuenchedStats,
    pub backend: Backend,
}

pub fn overlap_variance(ensemble: &Ensemble) -> Result<OverlapVariance, EnsembleError> {
    let fns = [
        ReplicaFn::overlap(1, 2),
        ReplicaFn::by_name("r12sq").expect("catalog name"),
    ];
    let rows = ensemble.map_seeds(|inst| replica_moments(inst, &fns))?;
    let means = column_means(&rows);
    let nu_variance = means[1] - means[0] * means[0];
    let mut stats = QuenchedStats::new("r12");
    for (seed, r) in ensemble.seeds.iter().zip(&rows) {
        stats.push_with_thermal(*seed, r[0], r[1] - r[0] * r[0]);
    }
    let mut thermal = QuenchedStats::new("thermal");
    for (seed, r) in ensemble.seeds.iter().zip(&rows) {
        thermal.push(*seed, r[1] - r[0] * r[0]);
    }
    Ok(OverlapVariance {
        nu_variance: Estimate {
            value: nu_variance,
            se: delta_method_se(&rows, &[-2.0 * means[0], 1.0]),
        },
        thermal: Estimate {
            value: thermal.mean(),
            se: thermal.standard_error(),
        },
        disorder: stats.disorder_variance(),
        nu_r12: Estimate {
            value: stats.mean(),
            se: stats.standard_error(),
        },
        stats,
        backend: ensemble.backend(),
    })
}

/// `psi_n = F_n / |V_n|` at one seed, on the free-energy backend.
fn free_energy(inst: &Instance<'_>, params: ModelParams) -> Result<f64, EnsembleError> {
    let e = inst.ensemble;
    match e.free_energy_backend() {
        Backend::TransferMatrix => Ok(transfer_matrix_log_z(&e.spec, params, inst.fields())?),
        Backend::Exact => Ok(log_partition(&e.spec, params, inst.fields())?),
        Backend::Mcmc => Err(EnsembleError::Unsupported(format!(
            "F_n needs enumeration or a chain (volume {}, d = {})",
            e.spec.volume(),
            e.spec.dim()
        ))),
    }
}

/// `d psi_n / d h` by central differences on the same disorder.
fn dpsi_dh(inst: &Instance<'_>) -> Result<f64, EnsembleError> {
    let p = inst.ensemble.params;
    let up = free_energy(inst, p.with_h(p.h + H_STEP))?;
    let down = free_energy(inst, p.with_h(p.h - H_STEP))?;
    Ok((up - down) / (2.0 * H_STEP * inst.ensemble.spec.volume() as f64))
}

/// Per-seed `F_n`.
pub fn free_energy_stats(ensemble: &Ensemble) -> Result<QuenchedStats, EnsembleError> {
    nu_stats(ensemble, "F_n", |inst| Ok((free_energy(inst, ensemble.params)?, None)))
}

/// Single-site means `<sigma_x>` on the free-energy backend (chain estimate
/// under mcmc).
fn site_means(inst: &Instance<'_>) -> Result<Vec<f64>, EnsembleError> {
    let e = inst.ensemble;
    match e.free_energy_backend() {
        Backend::TransferMatrix => Ok(transfer_matrix_site_means(&e.spec, e.params, inst.fields())?),
        Backend::Exact => Ok(inst.exact()?.site_means().to_vec()),
        Backend::Mcmc => {
            let mut sampler = inst.replica_sampler(1)?;
            let mut sums = vec![0.0; e.spec.volume()];
            let mut count = 0usize;
            while let Some(t) = sampler.next_tuple() {
                for (s, &v) in sums.iter_mut().zip(t[0]) {
                    *s += f64::from(v);
                }
                count += 1;
            }
            Ok(sums.into_iter().map(|s| s / count as f64).collect())
        }
    }
}

fn mean_delta(fields: &[f64], means: &[f64]) -> f64 {
    fields.iter().zip(means).map(|(g, m)| g * m).sum::<f64>() / fields.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSelfAveraging {
    /// `nu(|Delta_n - nu(Delta_n)|)`.
    pub value: Estimate,
    pub nu_delta: Estimate,
    /// Largest `|<Delta_n> - d psi_n / d h|` over seeds, when `F_n` is available.
    pub max_fd_error: Option<f64>,
    pub backend: Backend,
}

pub fn delta_self_averaging(ensemble: &Ensemble) -> Result<DeltaSelfAveraging, EnsembleError> {
    let backend = ensemble.backend();
    if backend == Backend::TransferMatrix {
        return Err(EnsembleError::Unsupported(
            "the law of Delta_n needs the exact or mcmc engine".into(),
        ));
    }
    let with_fd = ensemble.free_energy_backend() != Backend::Mcmc;
    let first = ensemble.map_seeds(|inst| {
        let mean = match backend {
            Backend::Exact => inst.exact()?.mean_delta(),
            _ => {
                let mut sampler = inst.replica_sampler(1)?;
                let (mut sum, mut count) = (0.0, 0usize);
                while let Some(t) = sampler.next_tuple() {
                    sum += mean_delta(inst.fields(), &t[0].iter().map(|&s| f64::from(s)).collect::<Vec<_>>());
                    count += 1;
                }
                sum / count as f64
            }
        };
        let fd = if with_fd && backend == Backend::Exact {
            Some((mean - dpsi_dh(inst)?).abs())
        } else {
            None
        };
        Ok((mean, fd))
    })?;
    let mut nu = QuenchedStats::new("delta");
    for (seed, (m, _)) in ensemble.seeds.iter().zip(&first) {
        nu.push(*seed, *m);
    }
    let center = nu.mean();
    let spread = nu_stats(ensemble, "abs-delta-deviation", |inst| {
        let v = match backend {
            Backend::Exact => inst.exact()?.delta_abs_deviation(center),
            _ => {
                let mut sampler = inst.replica_sampler(1)?;
                let n = inst.fields().len() as f64;
                let (mut sum, mut count) = (0.0, 0usize);
                while let Some(t) = sampler.next_tuple() {
                    let d: f64 = t[0]
                        .iter()
                        .zip(inst.fields())
                        .map(|(&s, g)| g * f64::from(s))
                        .sum::<f64>()
                        / n;
                    sum += (d - center).abs();
                    count += 1;
                }
                sum / count as f64
            }
        };
        Ok((v, None))
    })?;
    let max_fd_error = first
        .iter()
        .map(|(_, e)| *e)
        .collect::<Option<Vec<f64>>>()
        .map(|v| v.into_iter().fold(0.0, f64::max));
    Ok(DeltaSelfAveraging {
        value: Estimate {
            value: spread.mean(),
            se: spread.standard_error(),
        },
        nu_delta: Estimate {
            value: center,
            se: nu.standard_error(),
        },
        max_fd_error,
        backend,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QConsistency {
    pub nu_r12: Estimate,
    /// `nu(d psi_n / d h)`, which equals `nu(Delta_n)`.
    pub nu_delta: Estimate,
    /// `(1/|V|) sum_x h_x^2`.
    pub self_overlap: f64,
    /// `Q - (1/h) d p_n / d h`.
    pub q_hat: Estimate,
    /// `|nu(Delta_n) - h (Q - nu(R_{1,2}))|` with common seeds.
    pub gap: Estimate,
    /// `|nu(Delta_n) - h (1 - nu(R_{1,2}))|`, the same relation with the
    /// self-overlap set to 1.
    pub unit_gap: Estimate,
    pub backend: Backend,
}

/// Both sides of `nu(Delta_n) = h (Q - nu(R_{1,2}))` plus the remainder.
/// `d p_n / d h` is a central difference in `h` with the same seeds on both
/// sides; under mcmc `<Delta_n>` is sampled directly.
pub fn q_consistency(ensemble: &Ensemble) -> Result<QConsistency, EnsembleError> {
    let h = ensemble.params.h;
    let q = ensemble.self_overlap()?;
    let backend = ensemble.free_energy_backend();
    let rows = ensemble.map_seeds(|inst| {
        let means = site_means(inst)?;
        let w = inst.disorder.overlap_weights();
        let r12 = w.iter().zip(&means).map(|(w, m)| w * m * m).sum::<f64>() / w.len() as f64;
        let delta = match backend {
            Backend::Mcmc => mean_delta(inst.fields(), &means),
            _ => dpsi_dh(inst)?,
        };
        Ok((r12, delta))
    })?;
    let stats = |name: &str, f: &dyn Fn(f64, f64) -> f64| {
        let mut s = QuenchedStats::new(name);
        for (seed, &(r, d)) in ensemble.seeds.iter().zip(&rows) {
            s.push(*seed, f(r, d));
        }
        Estimate {
            value: s.mean(),
            se: s.standard_error(),
        }
    };
    let nu_r12 = stats("r12", &|r, _| r);
    let nu_delta = stats("delta", &|_, d| d);
    let q_hat = stats("q-hat", &|_, d| q - d / h);
    let signed = stats("gap", &|r, d| d - h * (q - r));
    let unit = stats("unit-gap", &|r, d| d - h * (1.0 - r));
    Ok(QConsistency {
        nu_r12,
        nu_delta,
        self_overlap: q,
        q_hat,
        gap: Estimate {
            value: signed.value.abs(),
            se: signed.se,
        },
        unit_gap: Estimate {
            value: unit.value.abs(),
            se: unit.se,
        },
        backend,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkgScan {
    /// Smallest `<sigma_x sigma_y> - <sigma_x><sigma_y>` over all pairs and seeds.
    pub min_truncated: f64,
    /// Smallest `E<sigma_x; sigma_y> / SE` over pairs (most negative z-score).
    pub min_z: f64,
    pub pairs: usize,
    pub realizations: usize,
}

pub fn fkg_scan(ensemble: &Ensemble) -> Result<FkgScan, EnsembleError> {
    let n = ensemble.spec.volume();
    let rows = ensemble.map_seeds(|inst| {
        let state = inst.exact()?;
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for x in 0..n {
            for y in (x + 1)..n {
                out.push(state.truncated_correlation(x, y)?);
            }
        }
        Ok(out)
    })?;
    let min_truncated = rows.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let pairs = n * (n - 1) / 2;
    let mut min_z = f64::INFINITY;
    for k in 0..pairs {
        let mut s = QuenchedStats::new("pair");
        for (seed, r) in ensemble.seeds.iter().zip(&rows) {
            s.push(*seed, r[k]);
        }
        let se = s.standard_error();
        let z = if se > 0.0 { s.mean() / se } else { f64::INFINITY };
        min_z = min_z.min(z);
    }
    Ok(FkgScan {
        min_truncated,
        min_z,
        pairs,
        realizations: rows.len(),
    })
}
