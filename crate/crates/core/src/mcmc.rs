//! Single-spin-flip Markov chains for the Gibbs measure, with independent
//! replica chains on a shared disorder realization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{self, Read, Write};
use thiserror::Error;

use crate::lattice::LatticeSpec;
use crate::model::ModelParams;

/// Streams at or above this index are reserved for chains, below it for the
/// per-site disorder streams of the same seed.
const CHAIN_STREAM_BASE: u64 = 1 << 63;

#[derive(Debug, Error)]
pub enum McmcError {
    #[error("sampler config: {0}")]
    Config(String),
    #[error("field array has {fields} entries, lattice has {volume} sites")]
    FieldLength { fields: usize, volume: usize },
    #[error("trajectory: {0}")]
    Trajectory(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dynamics {
    /// Heat bath: `P(sigma_x = +1) = (1 + tanh L_x) / 2`.
    #[default]
    Glauber,
    /// Flip proposal accepted with `min(1, exp(-2 sigma_x L_x))`.
    Metropolis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    #[default]
    AllUp,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Total sweeps per chain, burn-in included.
    pub sweeps: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub dynamics: Dynamics,
    pub seed: u64,
    pub init: InitialState,
    /// Test mode: every replica uses the same random stream.
    pub shared_seed: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            sweeps: 11_000,
            burn_in: 1_000,
            thinning: 10,
            dynamics: Dynamics::Glauber,
            seed: 0,
            init: InitialState::AllUp,
            shared_seed: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), McmcError> {
        if self.sweeps == 0 {
            return Err(McmcError::Config("sweeps must be positive".into()));
        }
        if self.thinning == 0 {
            return Err(McmcError::Config("thinning must be at least 1".into()));
        }
        if self.burn_in >= self.sweeps {
            return Err(McmcError::Config(format!(
                "burn_in ({}) must be below the sweep budget ({})",
                self.burn_in, self.sweeps
            )));
        }
        Ok(())
    }

    /// Number of recorded samples per chain.
    pub fn samples(&self) -> usize {
        (self.sweeps - self.burn_in) / self.thinning
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Immutable data shared by all chains on one disorder realization.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    spec: &'a LatticeSpec,
    params: ModelParams,
    fields: &'a [f64],
    dynamics: Dynamics,
}

impl<'a> Sampler<'a> {
    pub fn new(
        spec: &'a LatticeSpec,
        params: ModelParams,
        fields: &'a [f64],
        dynamics: Dynamics,
    ) -> Result<Self, McmcError> {
        if fields.len() != spec.volume() {
            return Err(McmcError::FieldLength {
                fields: fields.len(),
                volume: spec.volume(),
            });
        }
        Ok(Self {
            spec,
            params,
            fields,
            dynamics,
        })
    }

    fn local_field(&self, spins: &[i8], x: usize) -> f64 {
        let nb: i32 = self.spec.neighbors(x).iter().map(|&y| i32::from(spins[y])).sum();
        self.params.beta * f64::from(nb) + self.params.h * self.fields[x]
    }

    pub fn state(&self, spins: Vec<i8>) -> ChainState {
        let local = (0..spins.len()).map(|x| self.local_field(&spins, x)).collect();
        ChainState {
            spins,
            local,
            sweeps: 0,
        }
    }

    pub fn initial_state<R: Rng + ?Sized>(&self, init: InitialState, rng: &mut R) -> ChainState {
        let n = self.spec.volume();
        let spins = match init {
            InitialState::AllUp => vec![1; n],
            InitialState::Random => (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect(),
        };
        self.state(spins)
    }

    /// One lexicographic pass over all sites.
    pub fn sweep<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) {
        let two_beta = 2.0 * self.params.beta;
        for x in 0..state.spins.len() {
            let l = state.local[x];
            let old = state.spins[x];
            let u: f64 = rng.random();
            let new = match self.dynamics {
                Dynamics::Glauber => {
                    if u < 1.0 / (1.0 + (-2.0 * l).exp()) {
                        1
                    } else {
                        -1
                    }
                }
                Dynamics::Metropolis => {
                    if u < (-2.0 * f64::from(old) * l).exp() {
                        -old
                    } else {
                        old
                    }
                }
            };
            if new != old {
                state.spins[x] = new;
                let delta = two_beta * f64::from(new);
                for &y in self.spec.neighbors(x) {
                    state.local[y] += delta;
                }
            }
        }
        state.sweeps += 1;
        if cfg!(debug_assertions) && state.sweeps % 64 == 0 {
            debug_assert!(self.cache_error(state) < 1e-10, "local field cache drifted");
        }
    }

    /// Largest deviation of the cached local fields from a recomputation.
    pub fn cache_error(&self, state: &ChainState) -> f64 {
        (0..state.spins.len())
            .map(|x| (state.local[x] - self.local_field(&state.spins, x)).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    spins: Vec<i8>,
    local: Vec<f64>,
    sweeps: u64,
}

impl ChainState {
    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    /// Cached `beta * sum_{y ~ x} sigma_y + h g_x`.
    pub fn local_fields(&self) -> &[f64] {
        &self.local
    }

    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }
}

/// Random stream of replica `index` for a chain seed.
pub fn chain_rng(seed: u64, index: usize, shared: bool) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(CHAIN_STREAM_BASE | if shared { 0 } else { index as u64 });
    rng
}

/// `m` replica chains advanced in lock step; yields the thinned post-burn-in
/// `m`-tuples of configurations.
pub struct ReplicaSampler<'a> {
    sampler: Sampler<'a>,
    config: SamplerConfig,
    chains: Vec<(ChainState, ChaCha8Rng)>,
    emitted: usize,
}

impl<'a> ReplicaSampler<'a> {
    pub fn new(
        spec: &'a LatticeSpec,
        params: ModelParams,
        fields: &'a [f64],
        m: usize,
        config: &SamplerConfig,
    ) -> Result<Self, McmcError> {
        config.validate()?;
        if m == 0 {
            return Err(McmcError::Config("need at least one replica".into()));
        }
        let sampler = Sampler::new(spec, params, fields, config.dynamics)?;
        let mut chains: Vec<_> = (0..m)
            .map(|r| {
                let mut rng = chain_rng(config.seed, r, config.shared_seed);
                let state = sampler.initial_state(config.init, &mut rng);
                (state, rng)
            })
            .collect();
        for (state, rng) in chains.iter_mut() {
            for _ in 0..config.burn_in {
                sampler.sweep(state, rng);
            }
        }
        Ok(Self {
            sampler,
            config: config.clone(),
            chains,
            emitted: 0,
        })
    }

    pub fn replicas(&self) -> usize {
        self.chains.len()
    }

    /// Advances all chains by one thinning interval and returns views of the
    /// current configurations, or `None` once the sweep budget is spent.
    pub fn next_tuple(&mut self) -> Option<Vec<&[i8]>> {
        if self.emitted >= self.config.samples() {
            return None;
        }
        for (state, rng) in self.chains.iter_mut() {
            for _ in 0..self.config.thinning {
                self.sampler.sweep(state, rng);
            }
        }
        self.emitted += 1;
        Some(self.chains.iter().map(|(s, _)| s.spins()).collect())
    }
}

impl Iterator for ReplicaSampler<'_> {
    type Item = Vec<Vec<i8>>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_tuple().map(|t| t.into_iter().map(<[i8]>::to_vec).collect())
    }
}

pub fn sample_replicas<'a>(
    spec: &'a LatticeSpec,
    params: ModelParams,
    fields: &'a [f64],
    m: usize,
    config: &SamplerConfig,
) -> Result<ReplicaSampler<'a>, McmcError> {
    ReplicaSampler::new(spec, params, fields, m, config)
}

/// Mean and batch-means standard error of a correlated series.
pub fn batch_means(values: &[f64], batches: usize) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let batches = batches.clamp(2, n.max(2));
    let size = n / batches;
    if size == 0 {
        return (mean, f64::NAN);
    }
    let means: Vec<f64> = values
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let bm = means.iter().sum::<f64>() / means.len() as f64;
    let var = means.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
    (mean, (var / means.len() as f64).sqrt())
}

/// Binary trajectory dumps: a 4-byte header (`RFT` plus a version byte), the
/// volume and replica count as little-endian `u32`, then for every recorded
/// sweep and replica the spins bit-packed in site order (bit set = `+1`,
/// least significant bit first).
pub const TRAJECTORY_MAGIC: [u8; 3] = *b"RFT";
pub const TRAJECTORY_VERSION: u8 = 1;

pub struct TrajectoryWriter<W: Write> {
    out: W,
    volume: usize,
    replicas: usize,
    buf: Vec<u8>,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(mut out: W, volume: usize, replicas: usize) -> Result<Self, McmcError> {
        let v = u32::try_from(volume).map_err(|_| McmcError::Trajectory("volume exceeds u32".into()))?;
        let r = u32::try_from(replicas).map_err(|_| McmcError::Trajectory("replicas exceed u32".into()))?;
        out.write_all(&TRAJECTORY_MAGIC)?;
        out.write_all(&[TRAJECTORY_VERSION])?;
        out.write_all(&v.to_le_bytes())?;
        out.write_all(&r.to_le_bytes())?;
        Ok(Self {
            out,
            volume,
            replicas,
            buf: vec![0; volume.div_ceil(8)],
        })
    }

    pub fn write_tuple(&mut self, tuple: &[&[i8]]) -> Result<(), McmcError> {
        if tuple.len() != self.replicas {
            return Err(McmcError::Trajectory(format!(
                "expected {} replicas, got {}",
                self.replicas,
                tuple.len()
            )));
        }
        for spins in tuple {
            if spins.len() != self.volume {
                return Err(McmcError::Trajectory("configuration length mismatch".into()));
            }
            self.buf.fill(0);
            for (i, &s) in spins.iter().enumerate() {
                if s > 0 {
                    self.buf[i / 8] |= 1 << (i % 8);
                }
            }
            self.out.write_all(&self.buf)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, McmcError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Decoded dump: `frames[k][r]` is replica `r` at recorded sweep `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub version: u8,
    pub volume: usize,
    pub replicas: usize,
    pub frames: Vec<Vec<Vec<i8>>>,
}

pub fn read_trajectory<R: Read>(mut input: R) -> Result<Trajectory, McmcError> {
    let mut header = [0u8; 12];
    input.read_exact(&mut header)?;
    if header[..3] != TRAJECTORY_MAGIC {
        return Err(McmcError::Trajectory("bad magic".into()));
    }
    let version = header[3];
    if version != TRAJECTORY_VERSION {
        return Err(McmcError::Trajectory(format!("unsupported version {version}")));
    }
    let volume = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes")) as usize;
    let replicas = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes")) as usize;
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    let record = volume.div_ceil(8);
    let frame = record * replicas;
    if frame == 0 || body.len() % frame != 0 {
        return Err(McmcError::Trajectory("truncated body".into()));
    }
    let frames = body
        .chunks_exact(frame)
        .map(|f| {
            f.chunks_exact(record)
                .map(|bytes| {
                    (0..volume)
                        .map(|i| if bytes[i / 8] >> (i % 8) & 1 == 1 { 1 } else { -1 })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(Trajectory {
        version,
        volume,
        replicas,
        frames,
    })
}
