//! Adaptive Gauss-Kronrod integration and Gauss-Hermite rules.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use super::IbpError;

/// Absolute tolerance of every adaptive integral.
pub const ABS_TOL: f64 = 1e-12;
/// Subdivision budget per integral.
pub const MAX_SUBDIVISIONS: usize = 10_000;
/// Error floor relative to `int |f|` below which subdivision only chases rounding.
const REL_FLOOR: f64 = 1e-14;
/// Panel errors below this multiple of `int |f|` are rounding noise.
const ROUNDING: f64 = 100.0 * f64::EPSILON;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
/// 7-point Gauss weights at `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Kronrod estimate of a vector integrand on `[a, b]` and its error. A panel
/// whose Kronrod-Gauss gap is within rounding of `int |f|` reports zero error,
/// so rounding noise is never chased by further subdivision.
fn gk15<F>(f: &F, a: f64, b: f64, dim: usize) -> (Vec<f64>, f64, f64)
where
    F: Fn(f64) -> Vec<f64>,
{
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    let mut abs = vec![0.0; dim];
    for (i, (&x, &wk)) in XGK.iter().zip(&WGK).enumerate() {
        let points: &[f64] = if x == 0.0 { &[0.0] } else { &[x, -x] };
        for &t in points {
            let v = f(c + hw * t);
            for d in 0..dim {
                kron[d] += wk * v[d];
                abs[d] += wk * v[d].abs();
                if i % 2 == 1 {
                    gauss[d] += WG[i / 2] * v[d];
                }
            }
        }
    }
    let mut err = 0.0f64;
    let mut mass = 0.0f64;
    for d in 0..dim {
        mass = mass.max(abs[d] * hw.abs());
        kron[d] *= hw;
        gauss[d] *= hw;
        let gap = (kron[d] - gauss[d]).abs();
        if gap > ROUNDING * (abs[d] * hw.abs()) {
            err = err.max(gap);
        }
    }
    (kron, err, mass)
}

struct Piece {
    a: f64,
    b: f64,
    value: Vec<f64>,
    err: f64,
    /// Kronrod estimate of `int |f|` (largest component).
    mass: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err) == Ordering::Equal
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Result of an adaptive integral.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub value: Vec<f64>,
    pub error: f64,
    pub subdivisions: usize,
}

/// Globally adaptive Gauss-Kronrod 7/15 integration of a vector-valued
/// integrand over a finite interval; the error is the largest componentwise
/// Kronrod-Gauss difference summed over pieces.
pub fn integrate_vec<F>(f: F, a: f64, b: f64, dim: usize, tol: f64) -> Result<Quadrature, IbpError>
where
    F: Fn(f64) -> Vec<f64>,
{
    if a == b {
        return Ok(Quadrature {
            value: vec![0.0; dim],
            error: 0.0,
            subdivisions: 0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut heap = BinaryHeap::new();
    let (value, err, mass) = gk15(&f, lo, hi, dim);
    let mut total = value.clone();
    let mut total_err = err;
    let mut total_mass = mass;
    heap.push(Piece {
        a: lo,
        b: hi,
        value,
        err,
        mass,
    });
    let mut subdivisions = 0;
    loop {
        if !total_err.is_finite() || total.iter().any(|v| !v.is_finite()) {
            return Err(IbpError::QuadratureBudget {
                error: total_err,
                tolerance: tol,
                subdivisions,
            });
        }
        // cancelling integrands cannot beat rounding relative to int |f|
        let scale = total_mass;
        if total_err <= tol.max(REL_FLOOR * scale) {
            // running sums drift; settle on exact sums over the pieces
            let mut value = vec![0.0; dim];
            let mut error = 0.0;
            for p in heap.iter() {
                error += p.err;
                for d in 0..dim {
                    value[d] += p.value[d];
                }
            }
            if error <= tol.max(REL_FLOOR * scale) {
                return Ok(Quadrature {
                    value: value.into_iter().map(|v| sign * v).collect(),
                    error,
                    subdivisions,
                });
            }
            total = value;
            total_err = error;
            continue;
        }
        let worst = heap.pop().expect("heap never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if subdivisions >= MAX_SUBDIVISIONS || !(mid > worst.a && mid < worst.b) {
            return Err(IbpError::QuadratureBudget {
                error: total_err,
                tolerance: tol,
                subdivisions,
            });
        }
        total_err -= worst.err;
        total_mass -= worst.mass;
        for d in 0..dim {
            total[d] -= worst.value[d];
        }
        for (x0, x1) in [(worst.a, mid), (mid, worst.b)] {
            let (value, err, mass) = gk15(&f, x0, x1, dim);
            total_err += err;
            total_mass += mass;
            for d in 0..dim {
                total[d] += value[d];
            }
            heap.push(Piece {
                a: x0,
                b: x1,
                value,
                err,
                mass,
            });
        }
        subdivisions += 1;
    }
}

/// Scalar adaptive integral.
pub fn integrate<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64, IbpError>
where
    F: Fn(f64) -> f64,
{
    integrate_vec(|x| vec![f(x)], a, b, 1, tol).map(|q| q.value[0])
}

/// Infinite ranges are split here; the finite core is integrated directly
/// and only the tails are mapped.
const TAIL_SPLIT: f64 = 40.0;

/// Adaptive integral over a possibly infinite interval. Tails beyond
/// `TAIL_SPLIT` are mapped onto `[0, 1)` by `x = c + t / (1 - t)`; the
/// tolerance is shared evenly between pieces.
pub fn integrate_vec_unbounded<F>(f: F, a: f64, b: f64, dim: usize, tol: f64) -> Result<Quadrature, IbpError>
where
    F: Fn(f64) -> Vec<f64>,
{
    let tail = |start: f64, dir: f64, tol: f64| {
        integrate_vec(
            |t| {
                let s = 1.0 - t;
                let (x, jac) = (start + dir * t / s, 1.0 / (s * s));
                if !x.is_finite() || !jac.is_finite() {
                    return vec![0.0; dim];
                }
                let mut v = f(x);
                for e in v.iter_mut() {
                    *e *= jac;
                    if !e.is_finite() {
                        *e = 0.0;
                    }
                }
                v
            },
            0.0,
            1.0,
            dim,
            tol,
        )
    };
    let lo = if a.is_finite() { a } else { -TAIL_SPLIT.max(-b) };
    let hi = if b.is_finite() { b } else { TAIL_SPLIT.max(lo) };
    let pieces = 1 + usize::from(!a.is_finite()) + usize::from(!b.is_finite());
    let share = tol / pieces as f64;
    let mut out = integrate_vec(&f, lo, hi, dim, share)?;
    let mut add = |q: Quadrature| {
        for (o, v) in out.value.iter_mut().zip(q.value) {
            *o += v;
        }
        out.error += q.error;
        out.subdivisions += q.subdivisions;
    };
    if !a.is_finite() {
        add(tail(lo, -1.0, share)?);
    }
    if !b.is_finite() {
        add(tail(hi, 1.0, share)?);
    }
    Ok(out)
}

/// Gauss-Hermite nodes and weights for the weight `exp(-x^2)`.
///
/// Nodes are eigenvalues of the Jacobi matrix (zero diagonal, off-diagonal
/// `sqrt(k / 2)`), isolated by Sturm-count bisection down to adjacent floats.
/// Weights are `2 / (2n p_{n-1}(x)^2)` from the orthonormal recurrence,
/// rescaled on the way so large `n` does not overflow.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
    let count_below = |l: f64| -> usize {
        let mut d = -l;
        let mut c = usize::from(d < 0.0);
        for k in 1..n {
            if d == 0.0 {
                d = f64::MIN_POSITIVE;
            }
            d = -l - (k as f64 / 2.0) / d;
            c += usize::from(d < 0.0);
        }
        c
    };
    let radius = (2.0 * n as f64 + 1.0).sqrt() + 1.0;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // the i-th largest node is the (n - i)-th smallest
        let (mut lo, mut hi) = (0.0f64.min(-radius), radius);
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if count_below(mid) >= n - i {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let z = 0.5 * (lo + hi);
        let (mut p1, mut p2, mut log_scale) = (PIM4, 0.0f64, 0.0f64);
        for j in 0..n {
            let p3 = p2;
            p2 = p1;
            let jf = j as f64;
            p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            if p1.abs() > 1e100 {
                p1 *= 1e-100;
                p2 *= 1e-100;
                log_scale += 100.0 * std::f64::consts::LN_10;
            }
        }
        let log_pp = p2.abs().ln() + log_scale + 0.5 * (2.0 * n as f64).ln();
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = (std::f64::consts::LN_2 - 2.0 * log_pp).exp();
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Standard normal expectation rule: nodes `sqrt(2) x_i`, weights `w_i / sqrt(pi)`.
/// Rules are cached per size.
pub fn normal_rule(n: usize) -> Arc<Vec<(f64, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(rule) = cache.lock().expect("rule cache poisoned").get(&n) {
        return Arc::clone(rule);
    }
    let (x, w) = gauss_hermite(n);
    let rule: Arc<Vec<(f64, f64)>> = Arc::new(
        x.into_iter()
            .zip(w)
            .map(|(x, w)| (std::f64::consts::SQRT_2 * x, w / PI.sqrt()))
            .collect(),
    );
    cache
        .lock()
        .expect("rule cache poisoned")
        .entry(n)
        .or_insert(rule)
        .clone()
}

/// `int_0^a min{A, B u} du` for `a >= 0`, `A, B >= 0` (`A` may be infinite).
pub fn envelope(a: f64, cap: f64, slope: f64) -> f64 {
    let a = a.abs();
    if slope == 0.0 || cap == 0.0 {
        return 0.0;
    }
    if slope * a <= cap {
        0.5 * slope * a * a
    } else {
        cap * a - cap * cap / (2.0 * slope)
    }
}
