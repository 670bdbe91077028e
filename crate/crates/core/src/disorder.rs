//! Quenched random fields `g_x = h_x * zeta_x`.
//!
//! `zeta_x` are i.i.d. standardized draws (mean 0, variance 1, finite fifth
//! absolute moment) from a small catalog of laws; `h_x` is a deterministic
//! field profile bounded by 1 in absolute value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

use crate::lattice::{site_norm, LatticeError, LatticeShape, LatticeSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DisorderError {
    #[error("finite fifth moment requires ν > 5 (got ν = {0})")]
    StudentTDegrees(f64),
    #[error("constant field profile needs |c| <= 1 (got {0})")]
    ConstantOutOfRange(f64),
    #[error("power-law profile needs h_star in (0, 1] (got {0})")]
    PowerLawAmplitude(f64),
    #[error("power-law profile needs alpha > 0 (got {0})")]
    PowerLawExponent(f64),
    #[error("profile origin: {0}")]
    Origin(#[from] LatticeError),
    #[error("field arrays have lengths {h} and {zeta}, lattice has {volume} sites")]
    LengthMismatch { h: usize, zeta: usize, volume: usize },
    #[error("|h_x| = {value} exceeds 1 at site {site}")]
    ProfileBound { site: usize, value: f64 },
}

/// Standardized law of the `zeta_x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ZetaDistribution {
    Gaussian,
    Rademacher,
    /// Uniform on `[-sqrt 3, sqrt 3]`.
    Uniform,
    /// `E - 1` with `E` a unit exponential.
    CenteredExponential,
    /// Student-t with `nu` degrees of freedom rescaled by `sqrt((nu - 2) / nu)`.
    StudentT {
        nu: f64,
    },
}

/// How expectations against a law can be evaluated exactly.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    /// Finitely many atoms `(value, probability)`.
    Discrete(Vec<(f64, f64)>),
    /// Absolutely continuous on the interval `(lo, hi)` (bounds may be infinite).
    Continuous { lo: f64, hi: f64 },
}

impl ZetaDistribution {
    pub fn student_t(nu: f64) -> Result<Self, DisorderError> {
        let dist = Self::StudentT { nu };
        dist.validate()?;
        Ok(dist)
    }

    pub fn validate(&self) -> Result<(), DisorderError> {
        match *self {
            Self::StudentT { nu } if !(nu > 5.0) => Err(DisorderError::StudentTDegrees(nu)),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Gaussian => "gaussian".into(),
            Self::Rademacher => "rademacher".into(),
            Self::Uniform => "uniform".into(),
            Self::CenteredExponential => "centered-exponential".into(),
            Self::StudentT { nu } => format!("student-t({nu})"),
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, Self::Gaussian)
    }

    /// One standardized draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Gaussian => StandardNormal.sample(rng),
            Self::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::Uniform => (2.0 * rng.random::<f64>() - 1.0) * 3f64.sqrt(),
            Self::CenteredExponential => {
                let e: f64 = Exp1.sample(rng);
                e - 1.0
            }
            Self::StudentT { nu } => {
                // validated at construction; nu > 5 keeps the law well defined
                let t: f64 = StudentT::new(nu)
                    .expect("student-t degrees of freedom validated")
                    .sample(rng);
                t * ((nu - 2.0) / nu).sqrt()
            }
        }
    }

    pub fn support(&self) -> Support {
        match *self {
            Self::Rademacher => Support::Discrete(vec![(-1.0, 0.5), (1.0, 0.5)]),
            Self::Uniform => Support::Continuous {
                lo: -(3f64.sqrt()),
                hi: 3f64.sqrt(),
            },
            Self::CenteredExponential => Support::Continuous {
                lo: -1.0,
                hi: f64::INFINITY,
            },
            Self::Gaussian | Self::StudentT { .. } => Support::Continuous {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            },
        }
    }

    /// Lebesgue density; `None` for the discrete law.
    pub fn density(&self, x: f64) -> Option<f64> {
        match *self {
            Self::Gaussian => Some((-0.5 * x * x).exp() / (2.0 * PI).sqrt()),
            Self::Rademacher => None,
            Self::Uniform => {
                let a = 3f64.sqrt();
                Some(if x.abs() <= a { 0.5 / a } else { 0.0 })
            }
            Self::CenteredExponential => Some(if x >= -1.0 { (-(x + 1.0)).exp() } else { 0.0 }),
            Self::StudentT { nu } => {
                let s = ((nu - 2.0) / nu).sqrt();
                let t = x / s;
                let log_norm = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * PI).ln();
                Some((log_norm - (nu + 1.0) / 2.0 * (1.0 + t * t / nu).ln()).exp() / s)
            }
        }
    }

    /// Closed-form `E|zeta|^k`.
    pub fn abs_moment(&self, k: u32) -> f64 {
        let kf = k as f64;
        match *self {
            Self::Gaussian => (kf / 2.0 * 2f64.ln() + ln_gamma((kf + 1.0) / 2.0)).exp() / PI.sqrt(),
            Self::Rademacher => 1.0,
            Self::Uniform => 3f64.sqrt().powi(k as i32) / (kf + 1.0),
            Self::CenteredExponential => {
                // E|E-1|^k = e^{-1} (I_k + k!), I_k = int_0^1 t^k e^t dt = e - k I_{k-1}
                let e = std::f64::consts::E;
                let mut inner = e - 1.0;
                let mut factorial = 1.0;
                for j in 1..=k {
                    inner = e - j as f64 * inner;
                    factorial *= j as f64;
                }
                (inner + factorial) / e
            }
            Self::StudentT { nu } => {
                if kf >= nu {
                    return f64::INFINITY;
                }
                let scale = ((nu - 2.0) / nu).sqrt();
                let log_raw = kf / 2.0 * nu.ln() + ln_gamma((kf + 1.0) / 2.0) + ln_gamma((nu - kf) / 2.0)
                    - 0.5 * PI.ln()
                    - ln_gamma(nu / 2.0);
                scale.powi(k as i32) * log_raw.exp()
            }
        }
    }

    /// Closed-form raw third moment `E zeta^3`.
    pub fn third_moment(&self) -> f64 {
        match self {
            Self::CenteredExponential => 2.0,
            _ => 0.0,
        }
    }
}

impl fmt::Display for ZetaDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Deterministic field amplitudes `h_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldProfile {
    Constant {
        c: f64,
    },
    /// `h_x = h_star * max(|x - origin|_1, 1)^(-alpha)`, with `h_origin = h_star`.
    PowerLaw {
        h_star: f64,
        alpha: f64,
        /// Defaults to the lexicographically first site `(1, ..., 1)`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        origin: Option<Vec<u32>>,
    },
}

impl FieldProfile {
    pub fn constant(c: f64) -> Result<Self, DisorderError> {
        let p = Self::Constant { c };
        p.validate()?;
        Ok(p)
    }

    pub fn power_law(h_star: f64, alpha: f64) -> Result<Self, DisorderError> {
        let p = Self::PowerLaw {
            h_star,
            alpha,
            origin: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DisorderError> {
        match *self {
            Self::Constant { c } if !(c.abs() <= 1.0) => Err(DisorderError::ConstantOutOfRange(c)),
            Self::PowerLaw { h_star, .. } if !(h_star > 0.0 && h_star <= 1.0) => {
                Err(DisorderError::PowerLawAmplitude(h_star))
            }
            Self::PowerLaw { alpha, .. } if !(alpha > 0.0) => Err(DisorderError::PowerLawExponent(alpha)),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Constant { c } => format!("constant(c={c})"),
            Self::PowerLaw { h_star, alpha, origin } => match origin {
                None => format!("power-law(h*={h_star};alpha={alpha})"),
                Some(o) => format!(
                    "power-law(h*={h_star};alpha={alpha};origin={})",
                    o.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("-")
                ),
            },
        }
    }

    /// `h_x` for every site of `spec`, in site order.
    pub fn values(&self, spec: &LatticeSpec) -> Result<Vec<f64>, DisorderError> {
        self.validate()?;
        match self {
            Self::Constant { c } => Ok(vec![*c; spec.volume()]),
            Self::PowerLaw { h_star, alpha, origin } => {
                let origin = origin.clone().unwrap_or_else(|| spec.corner());
                // the origin need not be a lattice site, but it must have the right dimension
                if origin.len() != spec.dim() {
                    return Err(LatticeError::DimensionMismatch {
                        site: spec.dim(),
                        origin: origin.len(),
                    }
                    .into());
                }
                spec.sites()
                    .map(|site| {
                        let r = site_norm(site, &origin)?;
                        Ok(if r == 0.0 {
                            *h_star
                        } else {
                            h_star * r.max(1.0).powf(-alpha)
                        })
                    })
                    .collect()
            }
        }
    }
}

impl fmt::Display for FieldProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// `(sum_x |h_x|) / |V_n|`, the finite-volume proxy for `sum |h_x| = o(|V_n|)`.
pub fn smallness_ratio(profile: &FieldProfile, spec: &LatticeSpec) -> Result<f64, DisorderError> {
    let h = profile.values(spec)?;
    Ok(h.iter().map(|v| v.abs()).sum::<f64>() / spec.volume() as f64)
}

/// Random stream for site `site` under master seed `seed`.
///
/// Each site owns an independent ChaCha stream, so a site's draw does not
/// depend on how many other sites are generated or in what order.
pub fn site_stream(seed: u64, site: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(site as u64);
    rng
}

/// One frozen disorder sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderRealization {
    shape: LatticeShape,
    seed: u64,
    profile: Option<FieldProfile>,
    dist: Option<ZetaDistribution>,
    h: Vec<f64>,
    zeta: Vec<f64>,
    g: Vec<f64>,
}

impl DisorderRealization {
    pub fn realize(
        spec: &LatticeSpec,
        profile: &FieldProfile,
        dist: ZetaDistribution,
        seed: u64,
    ) -> Result<Self, DisorderError> {
        dist.validate()?;
        let h = profile.values(spec)?;
        let zeta: Vec<f64> = (0..spec.volume())
            .map(|i| dist.sample(&mut site_stream(seed, i)))
            .collect();
        let mut out = Self::from_parts(spec, h, zeta)?;
        out.seed = seed;
        out.profile = Some(profile.clone());
        out.dist = Some(dist);
        Ok(out)
    }

    /// Realization with explicit `h` and `zeta` arrays (seed 0, no generating law).
    pub fn from_parts(spec: &LatticeSpec, h: Vec<f64>, zeta: Vec<f64>) -> Result<Self, DisorderError> {
        if h.len() != spec.volume() || zeta.len() != spec.volume() {
            return Err(DisorderError::LengthMismatch {
                h: h.len(),
                zeta: zeta.len(),
                volume: spec.volume(),
            });
        }
        if let Some((site, &value)) = h.iter().enumerate().find(|(_, v)| !(v.abs() <= 1.0)) {
            return Err(DisorderError::ProfileBound { site, value });
        }
        let g = h.iter().zip(&zeta).map(|(a, b)| a * b).collect();
        Ok(Self {
            shape: spec.shape(),
            seed: 0,
            profile: None,
            dist: None,
            h,
            zeta,
            g,
        })
    }

    /// Unit profile with the given field values (`h_x = 1`, `zeta_x = g_x`).
    pub fn from_fields(spec: &LatticeSpec, g: Vec<f64>) -> Result<Self, DisorderError> {
        Self::from_parts(spec, vec![1.0; spec.volume()], g)
    }

    /// All fields zero, unit profile.
    pub fn zero(spec: &LatticeSpec) -> Self {
        Self::from_fields(spec, vec![0.0; spec.volume()]).expect("lengths match")
    }

    pub fn shape(&self) -> LatticeShape {
        self.shape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn profile(&self) -> Option<&FieldProfile> {
        self.profile.as_ref()
    }

    pub fn dist(&self) -> Option<ZetaDistribution> {
        self.dist
    }

    pub fn fields(&self) -> &[f64] {
        &self.g
    }

    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    pub fn profile_values(&self) -> &[f64] {
        &self.h
    }

    /// Overlap weights `E g_x^2 = h_x^2`.
    pub fn overlap_weights(&self) -> Vec<f64> {
        self.h.iter().map(|v| v * v).collect()
    }

    pub fn to_record(&self) -> DisorderRecord {
        DisorderRecord {
            seed: self.seed,
            d: self.shape.d,
            n: self.shape.n,
            profile: self.profile.clone(),
            dist: self.dist,
            g: self.g.clone(),
        }
    }
}

/// JSON audit record of a realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRecord {
    pub seed: u64,
    pub d: usize,
    pub n: usize,
    pub profile: Option<FieldProfile>,
    pub dist: Option<ZetaDistribution>,
    pub g: Vec<f64>,
}

impl DisorderRecord {
    /// Regenerates the realization from `(seed, d, n, profile, dist)` and checks
    /// it reproduces the recorded fields bit for bit.
    pub fn replay(&self) -> Result<Option<DisorderRealization>, DisorderError> {
        let (Some(profile), Some(dist)) = (&self.profile, self.dist) else {
            return Ok(None);
        };
        let spec = LatticeSpec::build(self.d, self.n)?;
        let real = DisorderRealization::realize(&spec, profile, dist, self.seed)?;
        let same = real
            .fields()
            .iter()
            .zip(&self.g)
            .all(|(a, b)| a.to_bits() == b.to_bits())
            && real.fields().len() == self.g.len();
        Ok(same.then_some(real))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CATALOG: [ZetaDistribution; 5] = [
        ZetaDistribution::Gaussian,
        ZetaDistribution::Rademacher,
        ZetaDistribution::Uniform,
        ZetaDistribution::CenteredExponential,
        ZetaDistribution::StudentT { nu: 12.0 },
    ];

    /// Sample mean and standard error of `f(zeta)` over `n` draws.
    fn mc_mean(dist: ZetaDistribution, n: usize, seed: u64, f: impl Fn(f64) -> f64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let v = f(dist.sample(&mut rng));
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let var = (s2 / n as f64 - mean * mean).max(0.0);
        (mean, (var / n as f64).sqrt())
    }

    #[test]
    fn moments_match_closed_forms() {
        let n = 1_000_000;
        for (k, dist) in CATALOG.iter().enumerate() {
            let seed = 100 + k as u64;
            let (m1, se1) = mc_mean(*dist, n, seed, |z| z);
            assert!(m1.abs() <= 4.0 * se1, "{dist}: mean {m1} se {se1}");
            let (m2, se2) = mc_mean(*dist, n, seed, |z| z * z);
            assert!((m2 - 1.0).abs() <= 4.0 * se2.max(1e-300), "{dist}: var {m2} se {se2}");
            let (m3, se3) = mc_mean(*dist, n, seed, |z| z.abs().powi(3));
            assert!(
                (m3 - dist.abs_moment(3)).abs() <= 4.0 * se3.max(1e-300),
                "{dist}: E|z|^3 {m3} vs {}",
                dist.abs_moment(3)
            );
            let (m5, se5) = mc_mean(*dist, n, seed, |z| z.abs().powi(5));
            assert!(
                (m5 - dist.abs_moment(5)).abs() <= 4.0 * se5.max(1e-300),
                "{dist}: E|z|^5 {m5} vs {}",
                dist.abs_moment(5)
            );
            let (r3, ser3) = mc_mean(*dist, n, seed, |z| z.powi(3));
            assert!((r3 - dist.third_moment()).abs() <= 4.0 * ser3.max(1e-300));
        }
    }

    #[test]
    fn second_abs_moment_is_one() {
        for dist in CATALOG {
            assert!((dist.abs_moment(2) - 1.0).abs() < 1e-12, "{dist}");
        }
    }

    #[test]
    fn rademacher_and_uniform_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = 3f64.sqrt();
        for _ in 0..10_000 {
            let r = ZetaDistribution::Rademacher.sample(&mut rng);
            assert!(r == 1.0 || r == -1.0);
            let u = ZetaDistribution::Uniform.sample(&mut rng);
            assert!(u.abs() <= a);
        }
    }

    #[test]
    fn centered_exponential_third_moment() {
        let (m3, se) = mc_mean(ZetaDistribution::CenteredExponential, 10_000_000, 11, |z| z.powi(3));
        assert!((m3 - 2.0).abs() <= 4.0 * se, "{m3} {se}");
    }

    #[test]
    fn student_t_needs_five_degrees() {
        assert_eq!(
            ZetaDistribution::student_t(4.0),
            Err(DisorderError::StudentTDegrees(4.0))
        );
        assert!(ZetaDistribution::student_t(5.0).is_err());
        assert!(ZetaDistribution::student_t(5.5).is_ok());
        let msg = DisorderError::StudentTDegrees(4.0).to_string();
        assert!(msg.contains("finite fifth moment requires ν > 5"));
    }

    #[test]
    fn constant_profile_rademacher_is_pm_one() {
        let spec = LatticeSpec::build(2, 3).unwrap();
        let profile = FieldProfile::constant(1.0).unwrap();
        let real = DisorderRealization::realize(&spec, &profile, ZetaDistribution::Rademacher, 9).unwrap();
        assert!(real.fields().iter().all(|g| g.abs() == 1.0));
    }

    #[test]
    fn power_law_values() {
        let spec = LatticeSpec::build(1, 3).unwrap();
        let profile = FieldProfile::power_law(0.5, 1.0).unwrap();
        assert_eq!(profile.values(&spec).unwrap(), vec![0.5, 0.5, 0.25]);
    }

    #[test]
    fn realization_is_deterministic_and_exact_product() {
        let spec = LatticeSpec::build(2, 4).unwrap();
        let profile = FieldProfile::power_law(0.7, 0.5).unwrap();
        let dist = ZetaDistribution::StudentT { nu: 7.0 };
        let a = DisorderRealization::realize(&spec, &profile, dist, 42).unwrap();
        let b = DisorderRealization::realize(&spec, &profile, dist, 42).unwrap();
        assert_eq!(a, b);
        for i in 0..spec.volume() {
            assert_eq!(a.fields()[i], a.profile_values()[i] * a.zeta()[i]);
            assert!(a.profile_values()[i].abs() <= 1.0);
        }
        let c = DisorderRealization::realize(&spec, &profile, dist, 43).unwrap();
        assert_ne!(a.fields(), c.fields());
    }

    #[test]
    fn site_draws_do_not_depend_on_lattice_size() {
        let small = LatticeSpec::build(1, 4).unwrap();
        let large = LatticeSpec::build(1, 9).unwrap();
        let profile = FieldProfile::constant(1.0).unwrap();
        let a = DisorderRealization::realize(&small, &profile, ZetaDistribution::Gaussian, 5).unwrap();
        let b = DisorderRealization::realize(&large, &profile, ZetaDistribution::Gaussian, 5).unwrap();
        assert_eq!(a.zeta(), &b.zeta()[..4]);
    }

    #[test]
    fn smallness_ratios() {
        let profile = FieldProfile::constant(1.0).unwrap();
        for n in [2, 8, 32] {
            let spec = LatticeSpec::build(1, n).unwrap();
            assert_eq!(smallness_ratio(&profile, &spec).unwrap(), 1.0);
        }
        let spec = LatticeSpec::build(1, 4).unwrap();
        let pl = FieldProfile::power_law(1.0, 1.0).unwrap();
        let expected = (1.0 + 1.0 + 0.5 + 1.0 / 3.0) / 4.0;
        assert!((smallness_ratio(&pl, &spec).unwrap() - expected).abs() < 1e-15);

        let pl2 = FieldProfile::power_law(1.0, 2.0).unwrap();
        let r8 = smallness_ratio(&pl2, &LatticeSpec::build(1, 8).unwrap()).unwrap();
        let r64 = smallness_ratio(&pl2, &LatticeSpec::build(1, 64).unwrap()).unwrap();
        assert!(r64 < r8);
    }

    #[test]
    fn smallness_ratio_non_increasing_for_power_law() {
        for (d, alpha) in [(1, 0.5), (1, 1.0), (2, 1.0), (2, 3.0)] {
            let profile = FieldProfile::power_law(0.8, alpha).unwrap();
            let mut prev = f64::INFINITY;
            for n in 1..12 {
                let r = smallness_ratio(&profile, &LatticeSpec::build(d, n).unwrap()).unwrap();
                assert!(r <= prev + 1e-15, "d={d} alpha={alpha} n={n}");
                prev = r;
            }
        }
    }

    #[test]
    fn record_round_trip_replays() {
        let spec = LatticeSpec::build(2, 3).unwrap();
        let profile = FieldProfile::power_law(0.5, 1.0).unwrap();
        let real = DisorderRealization::realize(&spec, &profile, ZetaDistribution::Uniform, 77).unwrap();
        let json = serde_json::to_string(&real.to_record()).unwrap();
        let record: DisorderRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(record.replay().unwrap(), Some(real));
    }

    #[test]
    fn rejects_invalid_profiles() {
        assert!(FieldProfile::constant(1.5).is_err());
        assert!(FieldProfile::power_law(0.0, 1.0).is_err());
        assert!(FieldProfile::power_law(1.2, 1.0).is_err());
        assert!(FieldProfile::power_law(0.5, 0.0).is_err());
    }

    #[test]
    fn densities_integrate_to_one() {
        for dist in [
            ZetaDistribution::Gaussian,
            ZetaDistribution::Uniform,
            ZetaDistribution::CenteredExponential,
            ZetaDistribution::StudentT { nu: 6.0 },
        ] {
            // crude midpoint rule is enough to catch a wrong normalization
            let (lo, hi, n) = (-60.0, 60.0, 1_200_000);
            let dx = (hi - lo) / n as f64;
            let total: f64 = (0..n)
                .map(|i| dist.density(lo + (i as f64 + 0.5) * dx).unwrap() * dx)
                .sum();
            assert!((total - 1.0).abs() < 1e-3, "{dist}: {total}");
        }
    }
}
