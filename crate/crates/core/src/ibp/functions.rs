//! Smooth test functions with analytic derivatives and local sup norms.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use super::IbpError;

/// Probe grid of the finite-difference registration gate.
const PROBES: [f64; 9] = [-2.3, -1.4, -0.8, -0.25, 0.0, 0.3, 0.9, 1.6, 2.5];
const GATE_STEP: f64 = 1e-4;
const GATE_TOL: f64 = 1e-5;

/// One-variable building block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Univariate {
    Linear { slope: f64, intercept: f64 },
    Cubic,
    Tanh,
    Sin,
}

impl Univariate {
    pub fn identity() -> Self {
        Self::Linear {
            slope: 1.0,
            intercept: 0.0,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Linear { slope, intercept } if *slope == 1.0 && *intercept == 0.0 => "x".into(),
            Self::Linear { .. } => "linear".into(),
            Self::Cubic => "cubic".into(),
            Self::Tanh => "tanh".into(),
            Self::Sin => "sin".into(),
        }
    }

    /// `k`-th derivative at `x`, `k <= 4`.
    pub fn derivative(&self, k: u8, x: f64) -> f64 {
        match *self {
            Self::Linear { slope, intercept } => match k {
                0 => slope * x + intercept,
                1 => slope,
                _ => 0.0,
            },
            Self::Cubic => match k {
                0 => x * x * x,
                1 => 3.0 * x * x,
                2 => 6.0 * x,
                3 => 6.0,
                _ => 0.0,
            },
            Self::Tanh => {
                let t = x.tanh();
                let s = 1.0 - t * t;
                match k {
                    0 => t,
                    1 => s,
                    2 => -2.0 * t * s,
                    3 => s * (6.0 * t * t - 2.0),
                    _ => s * (16.0 * t - 24.0 * t * t * t),
                }
            }
            Self::Sin => match k % 4 {
                0 => x.sin(),
                1 => x.cos(),
                2 => -x.sin(),
                _ => -x.cos(),
            },
        }
    }

    /// `sup_{|x| <= r} |f^(k)(x)|` for `k <= 3`.
    pub fn local_sup(&self, k: u8, r: f64) -> f64 {
        let r = r.abs();
        match *self {
            Self::Linear { slope, intercept } => match k {
                0 => (slope * r + intercept).abs().max((intercept - slope * r).abs()),
                1 => slope.abs(),
                _ => 0.0,
            },
            Self::Cubic => match k {
                0 => r.powi(3),
                1 => 3.0 * r * r,
                2 => 6.0 * r,
                3 => 6.0,
                _ => 0.0,
            },
            Self::Tanh => match k {
                0 => r.tanh(),
                // sech^2 and the third derivative peak at the origin
                1 => 1.0,
                2 => {
                    // |2 tanh sech^2| peaks where tanh^2 = 1/3
                    let peak = (1.0 / 3f64.sqrt()).atanh();
                    let at = r.min(peak);
                    (2.0 * at.tanh() * (1.0 - at.tanh().powi(2))).abs()
                }
                3 => 2.0,
                _ => f64::INFINITY,
            },
            Self::Sin => match k % 2 {
                0 => r.min(FRAC_PI_2).sin(),
                _ => 1.0,
            },
        }
    }

    fn gate(&self) -> Result<(), IbpError> {
        check_registration(&self.name(), |k, x| self.derivative(k, x), |k, r| self.local_sup(k, r))
    }
}

/// Compares each registered derivative of order `1..=4` with a central
/// difference of the order below, and each local sup norm with the values on
/// the probe grid.
pub fn check_registration(
    name: &str,
    derivative: impl Fn(u8, f64) -> f64,
    local_sup: impl Fn(u8, f64) -> f64,
) -> Result<(), IbpError> {
    for &x in &PROBES {
        for k in 0..4u8 {
            let fd = (derivative(k, x + GATE_STEP) - derivative(k, x - GATE_STEP)) / (2.0 * GATE_STEP);
            let exact = derivative(k + 1, x);
            if (fd - exact).abs() > GATE_TOL {
                return Err(IbpError::DerivativeGate {
                    function: name.to_string(),
                    order: k + 1,
                    at: x,
                    analytic: exact,
                    finite_difference: fd,
                });
            }
            if derivative(k, x).abs() > local_sup(k, x.abs()) * (1.0 + 1e-12) + 1e-15 {
                return Err(IbpError::SupNorm {
                    function: name.to_string(),
                    order: k,
                    at: x,
                });
            }
        }
    }
    Ok(())
}

/// Registered test function: univariate `f(y)` or a product `a(x) b(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arity", rename_all = "kebab-case")]
pub enum TestFunction {
    Univariate { name: String, f: Univariate },
    Product { name: String, a: Univariate, b: Univariate },
}

impl TestFunction {
    /// Registers a function after checking every analytic derivative against
    /// central differences on a probe grid.
    pub fn univariate(f: Univariate) -> Result<Self, IbpError> {
        f.gate()?;
        Ok(Self::Univariate { name: f.name(), f })
    }

    pub fn product(a: Univariate, b: Univariate) -> Result<Self, IbpError> {
        a.gate()?;
        b.gate()?;
        let name = if a == b {
            format!("{0}(x){0}(y)", a.name())
        } else {
            format!("{}(x){}(y)", a.name(), b.name())
        };
        let name = if name == "x(x)x(y)" { "xy".to_string() } else { name };
        Ok(Self::Product { name, a, b })
    }

    pub fn name(&self) -> &str {
        match self {
            Self::Univariate { name, .. } | Self::Product { name, .. } => name,
        }
    }

    pub fn arity(&self) -> u8 {
        match self {
            Self::Univariate { .. } => 1,
            Self::Product { .. } => 2,
        }
    }

    pub(crate) fn as_univariate(&self) -> Option<&Univariate> {
        match self {
            Self::Univariate { f, .. } => Some(f),
            _ => None,
        }
    }

    pub(crate) fn as_product(&self) -> Option<(&Univariate, &Univariate)> {
        match self {
            Self::Product { a, b, .. } => Some((a, b)),
            _ => None,
        }
    }

    /// `d^{i,j} f(x, y)` for products, `f^(i)(y)` for univariate functions.
    pub fn partial(&self, i: u8, j: u8, x: f64, y: f64) -> f64 {
        match self {
            Self::Univariate { f, .. } => f.derivative(i, y),
            Self::Product { a, b, .. } => a.derivative(i, x) * b.derivative(j, y),
        }
    }

    /// Sup norm of `d^{i,j} f` over `[-rx, rx] x [-ry, ry]`.
    pub fn local_sup(&self, i: u8, j: u8, rx: f64, ry: f64) -> f64 {
        match self {
            Self::Univariate { f, .. } => f.local_sup(i, ry),
            Self::Product { a, b, .. } => {
                let (sa, sb) = (a.local_sup(i, rx), b.local_sup(j, ry));
                if sa == 0.0 || sb == 0.0 {
                    0.0
                } else {
                    sa * sb
                }
            }
        }
    }
}

/// Univariate catalog: linear, cubic, tanh, sin.
pub fn univariate_catalog() -> Vec<TestFunction> {
    [
        Univariate::Linear {
            slope: 2.0,
            intercept: 0.5,
        },
        Univariate::Cubic,
        Univariate::Tanh,
        Univariate::Sin,
    ]
    .into_iter()
    .map(|f| TestFunction::univariate(f).expect("catalog functions pass the derivative gate"))
    .collect()
}

/// Bivariate catalog: `x y`, `tanh(x) tanh(y)`, `tanh(x) sin(y)`.
pub fn bivariate_catalog() -> Vec<TestFunction> {
    [
        (Univariate::identity(), Univariate::identity()),
        (Univariate::Tanh, Univariate::Tanh),
        (Univariate::Tanh, Univariate::Sin),
    ]
    .into_iter()
    .map(|(a, b)| TestFunction::product(a, b).expect("catalog functions pass the derivative gate"))
    .collect()
}

pub fn lookup(name: &str) -> Option<TestFunction> {
    univariate_catalog()
        .into_iter()
        .chain(bivariate_catalog())
        .find(|f| f.name() == name)
}
