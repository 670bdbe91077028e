//! Generalized Gaussian integration by parts with explicit remainders.
//!
//! Univariate: `E[Y f(Y)] = sigma^2 E f'(Y) + gamma^2_Y(f)` with
//! `gamma^2_Y(f) = E(Y int_0^Y (Y-u) f''(u) du) - sigma^2 E(int_0^Y (Y-u) f'''(u) du)`.
//!
//! Bivariate, `X` and `Y` independent:
//! `E[X Y f(X,Y)] = sigma_X^2 sigma_Y^2 E d11 f(X,Y) + gamma^2_{X,Y}(f)` where
//! `gamma^2_{X,Y}(f) = A - B - C + D` with
//!
//! * `A = E(X Y int_0^X int_0^Y (X-u) d21 f(u,v) du dv)`
//! * `B = sigma_X^2 sigma_Y^2 E(int_0^X int_0^Y (X-u) d32 f(u,v) du dv)`
//! * `C = sigma_X^2 sigma_Y^2 E(int_0^X (X-u) d31 f(u,0) du + int_0^Y (Y-v) d13 f(0,v) dv)`
//! * `D = sigma_X^2 E(Y int_0^Y (Y-v) d12 f(0,v) dv)`
//!
//! The three-piece form `A - B - C` alone leaves a residual equal to `D`,
//! which is why reports carry both (`printed_gamma` is `A - B - C`).

mod functions;
pub mod quadrature;

pub use functions::{bivariate_catalog, check_registration, lookup, univariate_catalog, TestFunction, Univariate};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

use crate::disorder::{Support, ZetaDistribution};
use quadrature::{envelope, integrate, integrate_vec_unbounded, normal_rule, ABS_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IbpError {
    #[error("{function}: derivative of order {order} at {at} is registered as {analytic}, finite differences give {finite_difference}")]
    DerivativeGate {
        function: String,
        order: u8,
        at: f64,
        analytic: f64,
        finite_difference: f64,
    },
    #[error("{function}: registered sup norm of derivative {order} is below its value at {at}")]
    SupNorm { function: String, order: u8, at: f64 },
    #[error("quadrature did not reach tolerance {tolerance:e} within {subdivisions} subdivisions (error {error:e})")]
    QuadratureBudget {
        error: f64,
        tolerance: f64,
        subdivisions: usize,
    },
    #[error("Gauss-Hermite sums did not settle (last change {0:e})")]
    HermiteNotConverged(f64),
    #[error("method {method} cannot evaluate expectations under {dist}")]
    MethodMismatch { method: String, dist: String },
    #[error("{function} has arity {arity}, expected {expected}")]
    Arity { function: String, arity: u8, expected: u8 },
    #[error("monte-carlo needs at least 2 samples")]
    TooFewSamples,
}

/// How expectations over the disorder law are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    /// Finite sums over the atoms of a discrete law.
    ExactDiscrete,
    /// Atoms, Gauss-Hermite nodes, or adaptive quadrature against the density.
    Quadrature,
    MonteCarlo {
        samples: usize,
        seed: u64,
    },
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Self::ExactDiscrete => "exact-discrete".into(),
            Self::Quadrature => "quadrature".into(),
            Self::MonteCarlo { samples, .. } => format!("monte-carlo({samples})"),
        }
    }
}

/// Standard errors of a Monte Carlo report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportErrors {
    pub lhs: f64,
    pub main_term: f64,
    pub gamma: f64,
    pub residual: f64,
    pub printed_residual: Option<f64>,
}

/// One remainder integral against its envelope over all evaluation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundVerdict {
    pub name: String,
    pub points: usize,
    pub max_value: f64,
    /// Largest `value / envelope` over points with a positive envelope.
    pub max_ratio: f64,
    pub violations: usize,
    pub holds: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct BoundSamples {
    /// `(x, y, values)`; univariate reports use `x = 0`.
    points: Vec<(f64, f64, [f64; 4])>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderReport {
    pub function: String,
    /// Law of `Y`, or of `X` then `Y`.
    pub dists: Vec<String>,
    pub method: String,
    pub lhs: f64,
    pub main_term: f64,
    pub gamma: f64,
    /// `lhs - main_term - gamma`.
    pub residual: f64,
    pub pieces: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub printed_gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub printed_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standard_errors: Option<ReportErrors>,
    pub bounds: Vec<BoundVerdict>,
    #[serde(skip)]
    samples: BoundSamples,
}

impl RemainderReport {
    /// `|residual|` within the method's tolerance: `tol` for deterministic
    /// methods, `k` standard errors for Monte Carlo (plus `tol`, since some
    /// integrands make every per-sample residual vanish up to rounding).
    pub fn residual_ok(&self, tol: f64, k: f64) -> bool {
        match &self.standard_errors {
            Some(se) => self.residual.abs() <= k * se.residual + tol,
            None => self.residual.abs() < tol,
        }
    }

    pub fn bounds_hold(&self) -> bool {
        self.bounds.iter().all(|b| b.holds)
    }
}

enum Rule {
    Atoms(Vec<(f64, f64)>),
    Normal,
    Density(ZetaDistribution),
}

const HERMITE_START: usize = 64;
const HERMITE_MAX: usize = 512;
const HERMITE_SETTLE: f64 = 1e-12;

fn rule_for(dist: ZetaDistribution, method: Method) -> Result<Rule, IbpError> {
    match (dist.support(), method) {
        (Support::Discrete(atoms), Method::ExactDiscrete | Method::Quadrature) => Ok(Rule::Atoms(atoms)),
        (Support::Continuous { .. }, Method::Quadrature) if dist.is_gaussian() => Ok(Rule::Normal),
        (Support::Continuous { .. }, Method::Quadrature) => Ok(Rule::Density(dist)),
        _ => Err(IbpError::MethodMismatch {
            method: method.name(),
            dist: dist.name(),
        }),
    }
}

type VecFn<'a> = dyn Fn(f64) -> Result<Vec<f64>, IbpError> + 'a;

/// `E g(Z)` for a vector-valued `g` under a rule.
fn expect_vec(rule: &Rule, dim: usize, g: &VecFn<'_>) -> Result<Vec<f64>, IbpError> {
    match rule {
        Rule::Atoms(atoms) => {
            let mut acc = vec![0.0; dim];
            for &(z, p) in atoms {
                let v = g(z)?;
                for d in 0..dim {
                    acc[d] += p * v[d];
                }
            }
            Ok(acc)
        }
        Rule::Normal => {
            let sum = |n: usize| -> Result<Vec<f64>, IbpError> {
                let mut acc = vec![0.0; dim];
                for &(z, w) in normal_rule(n).iter() {
                    let v = g(z)?;
                    for d in 0..dim {
                        acc[d] += w * v[d];
                    }
                }
                Ok(acc)
            };
            let mut n = HERMITE_START;
            let mut prev = sum(n)?;
            loop {
                n *= 2;
                let next = sum(n)?;
                let change = prev.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                if change <= HERMITE_SETTLE {
                    return Ok(next);
                }
                if n >= HERMITE_MAX {
                    return Err(IbpError::HermiteNotConverged(change));
                }
                prev = next;
            }
        }
        Rule::Density(dist) => {
            let Support::Continuous { lo, hi } = dist.support() else {
                unreachable!("density rules are built for continuous laws only")
            };
            // errors inside the integrand are surfaced after integration
            let failure: RefCell<Option<IbpError>> = RefCell::new(None);
            let q = integrate_vec_unbounded(
                |z| {
                    let p = dist.density(z).unwrap_or(0.0);
                    if p == 0.0 {
                        return vec![0.0; dim];
                    }
                    match g(z) {
                        Ok(v) => v.into_iter().map(|x| x * p).collect(),
                        Err(e) => {
                            failure.borrow_mut().get_or_insert(e);
                            vec![0.0; dim]
                        }
                    }
                },
                lo,
                hi,
                dim,
                ABS_TOL,
            )?;
            match failure.into_inner() {
                Some(e) => Err(e),
                None => Ok(q.value),
            }
        }
    }
}

/// `int_0^y (y - u) k(u) du`.
fn taylor_integral(k: impl Fn(f64) -> f64, y: f64) -> Result<f64, IbpError> {
    integrate(|u| (y - u) * k(u), 0.0, y, ABS_TOL)
}

/// Past this `|t|` the Taylor integrals are taken in closed form
/// (`I2 = c(t) - c(0) - t c'(0)`, `I3 = c'(t) - c'(0) - t c''(0)`); only
/// far tails of heavy-tailed laws reach it, where adaptive rules would need
/// thousands of panels per point for oscillating `c`.
const TAYLOR_CAP: f64 = 1e3;

/// `(I2(t), I3(t))` with `Ik(t) = int_0^t (t-s) c^(k)(s) ds`.
fn taylor_pair(c: &Univariate, t: f64) -> Result<(f64, f64), IbpError> {
    if t.abs() > TAYLOR_CAP {
        let d = |k, x| c.derivative(k, x);
        return Ok((d(0, t) - d(0, 0.0) - t * d(1, 0.0), d(1, t) - d(1, 0.0) - t * d(2, 0.0)));
    }
    Ok((
        taylor_integral(|s| c.derivative(2, s), t)?,
        taylor_integral(|s| c.derivative(3, s), t)?,
    ))
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Pointwise quantities of the univariate identity at `y`:
/// `[y f(y), f'(y), y I2(y), I3(y)]` with `Ik(y) = int_0^y (y-u) f^(k)(u) du`.
fn univariate_point(f: &Univariate, y: f64) -> Result<[f64; 4], IbpError> {
    let (i2, i3) = taylor_pair(f, y)?;
    Ok([y * f.derivative(0, y), f.derivative(1, y), y * i2, i3])
}

/// Both sides of the univariate identity and its remainder under `dist`.
pub fn gamma_1d(dist: ZetaDistribution, f: &TestFunction, method: Method) -> Result<RemainderReport, IbpError> {
    let uni = f.as_univariate().ok_or(IbpError::Arity {
        function: f.name().to_string(),
        arity: f.arity(),
        expected: 1,
    })?;
    // catalog laws are standardized
    let sigma2 = 1.0;
    let samples = RefCell::new(BoundSamples::default());
    let record = |y: f64, p: &[f64; 4]| samples.borrow_mut().points.push((0.0, y, [p[2].abs(), 0.0, 0.0, 0.0]));

    let (means, errors) = match method {
        Method::MonteCarlo { samples: n, seed } => {
            if n < 2 {
                return Err(IbpError::TooFewSamples);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cols: [Vec<f64>; 5] = Default::default();
            for _ in 0..n {
                let y = dist.sample(&mut rng);
                let p = univariate_point(uni, y)?;
                record(y, &p);
                let residual = p[0] - sigma2 * p[1] - (p[2] - sigma2 * p[3]);
                for (c, v) in cols.iter_mut().zip([p[0], p[1], p[2], p[3], residual]) {
                    c.push(v);
                }
            }
            let stats: Vec<(f64, f64)> = cols.iter().map(|c| mean_and_se(c)).collect();
            let gamma_col: Vec<f64> = cols[2].iter().zip(&cols[3]).map(|(a, b)| a - sigma2 * b).collect();
            let errors = ReportErrors {
                lhs: stats[0].1,
                main_term: sigma2 * stats[1].1,
                gamma: mean_and_se(&gamma_col).1,
                residual: stats[4].1,
                printed_residual: None,
            };
            (stats.iter().map(|s| s.0).collect::<Vec<_>>(), Some(errors))
        }
        _ => {
            let rule = rule_for(dist, method)?;
            let v = expect_vec(&rule, 4, &|y| {
                let p = univariate_point(uni, y)?;
                record(y, &p);
                Ok(p.to_vec())
            })?;
            (v, None)
        }
    };
    let lhs = means[0];
    let main_term = sigma2 * means[1];
    let quadratic = means[2];
    let cubic = sigma2 * means[3];
    let gamma = quadratic - cubic;
    let residual = match &errors {
        Some(_) => means[4],
        None => lhs - main_term - gamma,
    };
    let mut report = RemainderReport {
        function: f.name().to_string(),
        dists: vec![dist.name()],
        method: method.name(),
        lhs,
        main_term,
        gamma,
        residual,
        pieces: BTreeMap::from([
            ("second-order".to_string(), quadratic),
            ("third-order".to_string(), cubic),
        ]),
        printed_gamma: None,
        printed_residual: None,
        standard_errors: errors,
        bounds: Vec::new(),
        samples: samples.into_inner(),
    };
    report.bounds = remainder_bounds_check(&report, f);
    Ok(report)
}

/// One-variable pieces of a product `a(x) b(y)`: the function and its first
/// derivative at the point, and `Ik(t) = int_0^t (t-s) c^(k)(s) ds` for
/// `k = 2, 3`.
#[derive(Debug, Clone, Copy)]
struct FactorPart {
    t: f64,
    value: f64,
    d1: f64,
    i2: f64,
    i3: f64,
}

fn factor_part(c: &Univariate, t: f64) -> Result<FactorPart, IbpError> {
    let (i2, i3) = taylor_pair(c, t)?;
    Ok(FactorPart {
        t,
        value: c.derivative(0, t),
        d1: c.derivative(1, t),
        i2,
        i3,
    })
}

/// Pointwise quantities of the bivariate identity at `(x, y)`:
/// `[x y f, d11 f, x y A(x,y), B(x,y), Cx(x) + Cy(y), y D(y)]` with
/// the integrals of the module documentation before expectation, plus the
/// raw `[|x y A|, |Cx|, |Cy|, |D|]` for the envelope checks.
///
/// For `f = a(x) b(y)` the inner `v` integrals are exact:
/// `int_0^y d21 f(u,v) dv = a''(u) (b(y) - b(0))` and likewise for `d32`.
fn bivariate_point(a0: &FactorPart, b0: &FactorPart, px: &FactorPart, py: &FactorPart) -> ([f64; 6], [f64; 4]) {
    let (x, y) = (px.t, py.t);
    let a = px.i2 * (py.value - b0.value);
    let b = px.i3 * (py.d1 - b0.d1);
    let cx = px.i3 * b0.d1;
    let cy = a0.d1 * py.i3;
    let d = a0.d1 * py.i2;
    let xya = x * y * a;
    (
        [x * y * px.value * py.value, px.d1 * py.d1, xya, b, cx + cy, y * d],
        [xya.abs(), cx.abs(), cy.abs(), d.abs()],
    )
}

/// Both sides of the bivariate identity and the remainder pieces.
pub fn gamma_2d(
    dist_x: ZetaDistribution,
    dist_y: ZetaDistribution,
    f: &TestFunction,
    method: Method,
) -> Result<RemainderReport, IbpError> {
    let (fa, fb) = f.as_product().ok_or(IbpError::Arity {
        function: f.name().to_string(),
        arity: f.arity(),
        expected: 2,
    })?;
    let (sx2, sy2) = (1.0, 1.0);
    let (a0, b0) = (factor_part(fa, 0.0)?, factor_part(fb, 0.0)?);
    let samples = RefCell::new(BoundSamples::default());
    // quadrature rules revisit the same y nodes for every x
    let y_parts: RefCell<HashMap<u64, FactorPart>> = RefCell::new(HashMap::new());
    let y_part = |y: f64| -> Result<FactorPart, IbpError> {
        if let Some(p) = y_parts.borrow().get(&y.to_bits()) {
            return Ok(*p);
        }
        let p = factor_part(fb, y)?;
        y_parts.borrow_mut().insert(y.to_bits(), p);
        Ok(p)
    };
    let point = |px: &FactorPart, y: f64| -> Result<[f64; 6], IbpError> {
        let (p, raw) = bivariate_point(&a0, &b0, px, &y_part(y)?);
        samples.borrow_mut().points.push((px.t, y, raw));
        Ok(p)
    };
    let combine = |p: &[f64]| {
        let printed = p[2] - sx2 * sy2 * p[3] - sx2 * sy2 * p[4];
        let full = printed + sx2 * p[5];
        let base = p[0] - sx2 * sy2 * p[1];
        (base - full, base - printed)
    };

    let (means, errors) = match method {
        Method::MonteCarlo { samples: n, seed } => {
            if n < 2 {
                return Err(IbpError::TooFewSamples);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); 9];
            for _ in 0..n {
                let x = dist_x.sample(&mut rng);
                let y = dist_y.sample(&mut rng);
                let p = point(&factor_part(fa, x)?, y)?;
                let (res, printed_res) = combine(&p);
                let gamma = p[2] - sx2 * sy2 * (p[3] + p[4]) + sx2 * p[5];
                for (c, v) in cols.iter_mut().zip(p.iter().copied().chain([res, printed_res, gamma])) {
                    c.push(v);
                }
            }
            let stats: Vec<(f64, f64)> = cols.iter().map(|c| mean_and_se(c)).collect();
            let errors = ReportErrors {
                lhs: stats[0].1,
                main_term: sx2 * sy2 * stats[1].1,
                gamma: stats[8].1,
                residual: stats[6].1,
                printed_residual: Some(stats[7].1),
            };
            (stats.iter().map(|s| s.0).collect::<Vec<_>>(), Some(errors))
        }
        _ => {
            let rx = rule_for(dist_x, method)?;
            let ry = rule_for(dist_y, method)?;
            let v = expect_vec(&rx, 6, &|x| {
                let px = factor_part(fa, x)?;
                expect_vec(&ry, 6, &|y| point(&px, y).map(|p| p.to_vec()))
            })?;
            (v, None)
        }
    };
    let lhs = means[0];
    let main_term = sx2 * sy2 * means[1];
    let a = means[2];
    let b = sx2 * sy2 * means[3];
    let c = sx2 * sy2 * means[4];
    let d = sx2 * means[5];
    let printed_gamma = a - b - c;
    let gamma = printed_gamma + d;
    let (residual, printed_residual) = match &errors {
        Some(_) => (means[6], means[7]),
        None => (lhs - main_term - gamma, lhs - main_term - printed_gamma),
    };
    let mut report = RemainderReport {
        function: f.name().to_string(),
        dists: vec![dist_x.name(), dist_y.name()],
        method: method.name(),
        lhs,
        main_term,
        gamma,
        residual,
        pieces: BTreeMap::from([
            ("double-second-order".to_string(), a),
            ("double-third-order".to_string(), b),
            ("boundary".to_string(), c),
            ("boundary-mixed".to_string(), d),
        ]),
        printed_gamma: Some(printed_gamma),
        printed_residual: Some(printed_residual),
        standard_errors: errors,
        bounds: Vec::new(),
        samples: samples.into_inner(),
    };
    report.bounds = remainder_bounds_check(&report, f);
    Ok(report)
}

/// Relative slack for quadrature noise in the remainder integrals.
const BOUND_SLACK: f64 = 1e-9;

fn verdict(name: &str, pairs: impl Iterator<Item = (f64, f64)>) -> BoundVerdict {
    let mut v = BoundVerdict {
        name: name.to_string(),
        points: 0,
        max_value: 0.0,
        max_ratio: 0.0,
        violations: 0,
        holds: true,
    };
    for (value, env) in pairs {
        v.points += 1;
        v.max_value = v.max_value.max(value);
        if env > 0.0 {
            v.max_ratio = v.max_ratio.max(value / env);
        }
        if value > env * (1.0 + BOUND_SLACK) + 1e-12 {
            v.violations += 1;
        }
    }
    v.holds = v.violations == 0;
    v
}

/// Checks every recorded remainder integral against its envelope
/// `int_0^a min{2 ||g'||, ||g''|| u} du`, with sup norms taken over the box
/// spanned by the evaluation point.
pub fn remainder_bounds_check(report: &RemainderReport, f: &TestFunction) -> Vec<BoundVerdict> {
    let pts = &report.samples.points;
    match f {
        TestFunction::Univariate { f: g, .. } => vec![verdict(
            "second-order",
            pts.iter().map(|&(_, y, v)| {
                let r = y.abs();
                (v[0], r * envelope(r, 2.0 * g.local_sup(1, r), g.local_sup(2, r)))
            }),
        )],
        TestFunction::Product { .. } => {
            let sup = |i, j, x: f64, y: f64| f.local_sup(i, j, x.abs(), y.abs());
            vec![
                verdict(
                    "double-second-order",
                    pts.iter().map(|&(x, y, v)| {
                        let env = x.abs() * y.abs() * y.abs() * envelope(x, 2.0 * sup(1, 1, x, y), sup(2, 1, x, y));
                        (v[0], env)
                    }),
                ),
                verdict(
                    "boundary-x",
                    pts.iter()
                        .map(|&(x, y, v)| (v[1], envelope(x, 2.0 * sup(2, 1, x, y), sup(3, 1, x, y)))),
                ),
                verdict(
                    "boundary-y",
                    pts.iter()
                        .map(|&(x, y, v)| (v[2], envelope(y, 2.0 * sup(1, 2, x, y), sup(1, 3, x, y)))),
                ),
                verdict(
                    "boundary-mixed",
                    pts.iter()
                        .map(|&(x, y, v)| (v[3], envelope(y, 2.0 * sup(1, 1, x, y), sup(1, 2, x, y)))),
                ),
            ]
        }
    }
}

/// Which evaluations the suite runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub mc_samples_1d: usize,
    pub mc_samples_2d: usize,
    pub seed: u64,
    /// Run bivariate quadrature for pairs of continuous non-Gaussian laws
    /// (nested adaptive integrals, slow).
    pub full_bivariate_quadrature: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            mc_samples_1d: 100_000,
            mc_samples_2d: 10_000,
            seed: 2024,
            full_bivariate_quadrature: false,
        }
    }
}

/// The catalog of laws used by the suite.
pub fn distribution_catalog() -> Vec<ZetaDistribution> {
    vec![
        ZetaDistribution::Gaussian,
        ZetaDistribution::Rademacher,
        ZetaDistribution::Uniform,
        ZetaDistribution::CenteredExponential,
        ZetaDistribution::StudentT { nu: 7.0 },
    ]
}

enum Job {
    One(ZetaDistribution, TestFunction, Method),
    Two(ZetaDistribution, ZetaDistribution, TestFunction, Method),
}

/// Reports for every registered `(law, function, method)` combination.
/// Failed evaluations are returned as errors in place.
pub fn ibp_suite(config: &SuiteConfig) -> Vec<(String, Result<RemainderReport, IbpError>)> {
    let dists = distribution_catalog();
    let mut jobs = Vec::new();
    for (k, f) in univariate_catalog().into_iter().enumerate() {
        for (i, &d) in dists.iter().enumerate() {
            let mut methods = vec![Method::Quadrature];
            if matches!(d.support(), Support::Discrete(_)) {
                methods.insert(0, Method::ExactDiscrete);
            }
            methods.push(Method::MonteCarlo {
                samples: config.mc_samples_1d,
                seed: config.seed ^ ((k as u64) << 8 | i as u64),
            });
            for m in methods {
                jobs.push(Job::One(d, f.clone(), m));
            }
        }
    }
    let cheap = |d: &ZetaDistribution| d.is_gaussian() || matches!(d.support(), Support::Discrete(_));
    for (k, f) in bivariate_catalog().into_iter().enumerate() {
        for (i, &dx) in dists.iter().enumerate() {
            for (j, &dy) in dists.iter().enumerate() {
                let discrete = |d: &ZetaDistribution| matches!(d.support(), Support::Discrete(_));
                let mut methods = Vec::new();
                if discrete(&dx) && discrete(&dy) {
                    methods.push(Method::ExactDiscrete);
                } else if config.full_bivariate_quadrature || (cheap(&dx) && cheap(&dy)) {
                    methods.push(Method::Quadrature);
                }
                methods.push(Method::MonteCarlo {
                    samples: config.mc_samples_2d,
                    seed: config.seed ^ (1 << 20 | (k as u64) << 16 | (i as u64) << 8 | j as u64),
                });
                for m in methods {
                    jobs.push(Job::Two(dx, dy, f.clone(), m));
                }
            }
        }
    }
    jobs.into_par_iter()
        .map(|job| match job {
            Job::One(d, f, m) => (
                format!("{} | {} | {}", f.name(), d.name(), m.name()),
                gamma_1d(d, &f, m),
            ),
            Job::Two(dx, dy, f, m) => (
                format!("{} | {} x {} | {}", f.name(), dx.name(), dy.name(), m.name()),
                gamma_2d(dx, dy, &f, m),
            ),
        })
        .collect()
}

/// Differences between fresh reports and a stored baseline, matched on
/// `(function, dists, method)`; deterministic methods only.
pub fn compare_to_baseline(reports: &[RemainderReport], baseline: &[RemainderReport], tol: f64) -> Vec<String> {
    let mut out = Vec::new();
    for b in baseline {
        let Some(r) = reports
            .iter()
            .find(|r| r.function == b.function && r.dists == b.dists && r.method == b.method)
        else {
            out.push(format!("{} {:?} {}: missing", b.function, b.dists, b.method));
            continue;
        };
        for (name, x, y) in [
            ("lhs", r.lhs, b.lhs),
            ("main_term", r.main_term, b.main_term),
            ("gamma", r.gamma, b.gamma),
        ] {
            if (x - y).abs() > tol {
                out.push(format!(
                    "{} {:?} {}: {name} {x} vs baseline {y}",
                    b.function, b.dists, b.method
                ));
            }
        }
    }
    out
}
