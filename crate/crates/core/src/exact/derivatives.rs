//! Derivatives of `F_n` with respect to single fields `g_x`: closed forms in
//! terms of `<sigma_x>` and central finite differences of the enumerated
//! partition function.

use serde::{Deserialize, Serialize};

use super::{log_partition_with, EngineError, ExactGibbs};
use crate::lattice::LatticeSpec;
use crate::model::ModelParams;

/// Default central-difference step for first derivatives.
pub const FD_STEP_FIRST: f64 = 1e-4;
/// Default step for nested (mixed) second differences.
pub const FD_STEP_MIXED: f64 = 1e-3;

/// `d^k F_n / d g_x^k` for `k = 1..4` from `<sigma_x>` (using `sigma_x^2 = 1`):
///
/// * 1: `h m`
/// * 2: `h^2 (1 - m^2)`
/// * 3: `-2 h^3 m (1 - m^2)`
/// * 4: `4 h^4 (m^2 - 1/2)(1 - m^2)`
pub fn derivative_stack(state: &ExactGibbs, x: usize, order: u8) -> Result<f64, EngineError> {
    let m = state.site_mean(x)?;
    let h = state.params().h;
    let susceptibility = 1.0 - m * m;
    match order {
        1 => Ok(h * m),
        2 => Ok(h * h * susceptibility),
        3 => Ok(-2.0 * h.powi(3) * m * susceptibility),
        4 => Ok(4.0 * h.powi(4) * (m * m - 0.5) * susceptibility),
        _ => Err(EngineError::InvalidOrder {
            order,
            allowed: "1..=4",
        }),
    }
}

/// Central finite difference of `F_n` in `g_x` (order 1), or the nested mixed
/// second difference in `g_x, g_y` (order 2, `y` defaults to `x`).
pub fn fd_derivative(
    spec: &LatticeSpec,
    params: ModelParams,
    fields: &[f64],
    x: usize,
    step: f64,
    order: u8,
    y: Option<usize>,
) -> Result<f64, EngineError> {
    if !(step > 0.0) {
        return Err(EngineError::NonPositiveStep(step));
    }
    spec.check_site(x)?;
    let config = Default::default();
    let eval = |shifts: &[(usize, f64)]| {
        let mut g = fields.to_vec();
        for &(site, delta) in shifts {
            g[site] += delta;
        }
        log_partition_with(spec, params, &g, config)
    };
    match order {
        1 => Ok((eval(&[(x, step)])? - eval(&[(x, -step)])?) / (2.0 * step)),
        2 => {
            let y = y.unwrap_or(x);
            spec.check_site(y)?;
            let pp = eval(&[(x, step), (y, step)])?;
            let pm = eval(&[(x, step), (y, -step)])?;
            let mp = eval(&[(x, -step), (y, step)])?;
            let mm = eval(&[(x, -step), (y, -step)])?;
            Ok((pp - pm - mp + mm) / (4.0 * step * step))
        }
        _ => Err(EngineError::InvalidOrder {
            order,
            allowed: "1 or 2",
        }),
    }
}

/// Both sides of the derivative formula for `F_x(u) = <sigma^1_x f>_{g_x = u}`
/// with `f` a function of `m` replicas:
///
/// `d^j F_x / du^j = h^j < sigma^1_x (sum_{s<=m} sigma^s_x - m sigma^{m+1}_x)^j f >`.
///
/// The formula is exact for `j = 1`. For `j = 2` it misses the derivative of
/// the normalization of the extra replica; `analytic_exact` carries the full
/// second derivative
/// `h^2 [<G S^2> - 2m <G S><s> + m^2 <G><s>^2 - m <G>(1 - <s>^2)]`
/// with `G = sigma^1_x f`, `S = sum_{s<=m} sigma^s_x`, `<s> = <sigma_x>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaDerivativeCheck {
    pub order: u8,
    /// The replica formula above, evaluated with `m + 1` replicas.
    pub analytic: f64,
    /// The exact derivative from replica expectations (equal to `analytic` for `j = 1`).
    pub analytic_exact: f64,
    pub finite_difference: f64,
}

pub fn replica_derivative_check<F>(
    state: &ExactGibbs,
    m: usize,
    f: F,
    x: usize,
    order: u8,
) -> Result<ReplicaDerivativeCheck, EngineError>
where
    F: Fn(&[&[i8]]) -> f64,
{
    if m == 0 {
        return Err(EngineError::TooFewReplicas { needed: 1, got: 0 });
    }
    if !(order == 1 || order == 2) {
        return Err(EngineError::InvalidOrder {
            order,
            allowed: "1 or 2",
        });
    }
    state.spec().check_site(x)?;
    let h = state.params().h;
    let mf = m as f64;

    let analytic = h.powi(order as i32)
        * state.replica_expectation(m + 1, |c| {
            let s: f64 = c[..m].iter().map(|r| r[x] as f64).sum();
            let bracket = s - mf * c[m][x] as f64;
            c[0][x] as f64 * bracket.powi(order as i32) * f(&c[..m])
        })?;

    let analytic_exact = if order == 1 {
        analytic
    } else {
        let mean = state.site_mean(x)?;
        let g = state.replica_expectation(m, |c| c[0][x] as f64 * f(c))?;
        let gs = state.replica_expectation(m, |c| {
            let s: f64 = c.iter().map(|r| r[x] as f64).sum();
            c[0][x] as f64 * s * f(c)
        })?;
        let gs2 = state.replica_expectation(m, |c| {
            let s: f64 = c.iter().map(|r| r[x] as f64).sum();
            c[0][x] as f64 * s * s * f(c)
        })?;
        h * h * (gs2 - 2.0 * mf * gs * mean + mf * mf * g * mean * mean - mf * g * (1.0 - mean * mean))
    };

    let at = |delta: f64| -> Result<f64, EngineError> {
        let mut fields = state.fields().to_vec();
        fields[x] += delta;
        let shifted = ExactGibbs::with_config(state.spec(), state.params(), &fields, state.config())?;
        shifted.replica_expectation(m, |c| c[0][x] as f64 * f(c))
    };
    let finite_difference = match order {
        1 => (at(FD_STEP_FIRST)? - at(-FD_STEP_FIRST)?) / (2.0 * FD_STEP_FIRST),
        _ => (at(FD_STEP_MIXED)? - 2.0 * at(0.0)? + at(-FD_STEP_MIXED)?) / (FD_STEP_MIXED * FD_STEP_MIXED),
    };

    Ok(ReplicaDerivativeCheck {
        order,
        analytic,
        analytic_exact,
        finite_difference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::{DisorderRealization, FieldProfile, ZetaDistribution};
    use crate::observables::OverlapArray;

    #[test]
    fn single_site_first_derivative() {
        let spec = LatticeSpec::build(1, 1).unwrap();
        let p = ModelParams::new(1.0, 0.5).unwrap();
        let st = ExactGibbs::new(&spec, p, &[1.0]).unwrap();
        let a = derivative_stack(&st, 0, 1).unwrap();
        assert!((a - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
        assert!((a - 0.231_059).abs() < 1e-6);
        let fd = fd_derivative(&spec, p, &[1.0], 0, FD_STEP_FIRST, 1, None).unwrap();
        assert!((fd - a).abs() < 1e-6);
    }

    #[test]
    fn symmetric_state_odd_orders_vanish() {
        let spec = LatticeSpec::build(2, 2).unwrap();
        let st = ExactGibbs::new(&spec, ModelParams::new(0.7, 1.0).unwrap(), &[0.0; 4]).unwrap();
        for x in 0..4 {
            assert!(derivative_stack(&st, x, 1).unwrap().abs() < 1e-15);
            assert!(derivative_stack(&st, x, 3).unwrap().abs() < 1e-15);
        }
        assert!(derivative_stack(&st, 0, 5).is_err());
        assert!(derivative_stack(&st, 0, 0).is_err());
    }

    #[test]
    fn fd_rejects_bad_inputs() {
        let spec = LatticeSpec::build(1, 2).unwrap();
        let p = ModelParams::new(1.0, 1.0).unwrap();
        assert!(matches!(
            fd_derivative(&spec, p, &[0.0, 0.0], 0, 0.0, 1, None),
            Err(EngineError::NonPositiveStep(_))
        ));
        assert!(fd_derivative(&spec, p, &[0.0, 0.0], 0, 1e-4, 3, None).is_err());
        assert!(fd_derivative(&spec, p, &[0.0, 0.0], 5, 1e-4, 1, None).is_err());
    }

    fn random_state(seed: u64) -> ExactGibbs {
        let spec = LatticeSpec::build(2, 2).unwrap();
        let real = DisorderRealization::realize(
            &spec,
            &FieldProfile::power_law(0.9, 1.0).unwrap(),
            ZetaDistribution::Uniform,
            seed,
        )
        .unwrap();
        ExactGibbs::new(&spec, ModelParams::new(0.7, 1.2).unwrap(), real.fields()).unwrap()
    }

    #[test]
    fn mixed_second_derivative_is_truncated_correlation() {
        let st = random_state(4);
        let h = st.params().h;
        for x in 0..4 {
            for y in 0..4 {
                let fd = fd_derivative(st.spec(), st.params(), st.fields(), x, FD_STEP_MIXED, 2, Some(y)).unwrap();
                let exact = h * h * st.truncated_correlation(x, y).unwrap();
                assert!((fd - exact).abs() < 1e-5, "{x},{y}: {fd} vs {exact}");
            }
            let diag = derivative_stack(&st, x, 2).unwrap();
            let fd = fd_derivative(st.spec(), st.params(), st.fields(), x, FD_STEP_MIXED, 2, None).unwrap();
            assert!((fd - diag).abs() < 1e-5);
        }
    }

    #[test]
    fn replica_formula_first_order() {
        let st = random_state(6);
        let h = st.params().h;
        for x in 0..4 {
            let check = replica_derivative_check(&st, 1, |_| 1.0, x, 1).unwrap();
            let m = st.site_means()[x];
            assert!((check.analytic - h * (1.0 - m * m)).abs() < 1e-13);
            assert!((check.analytic - check.finite_difference).abs() < 1e-5);
        }
    }

    #[test]
    fn replica_formula_zero_field() {
        let spec = LatticeSpec::build(1, 2).unwrap();
        let st = ExactGibbs::new(&spec, ModelParams::new(1.0, 0.8).unwrap(), &[0.0, 0.0]).unwrap();
        let check = replica_derivative_check(&st, 1, |_| 1.0, 0, 1).unwrap();
        assert!((check.analytic - 0.8).abs() < 1e-14);
    }

    #[test]
    fn replica_formula_with_overlap_two_replicas() {
        let spec = LatticeSpec::build(1, 2).unwrap();
        let real = DisorderRealization::realize(
            &spec,
            &FieldProfile::constant(1.0).unwrap(),
            ZetaDistribution::Gaussian,
            12,
        )
        .unwrap();
        let st = ExactGibbs::new(&spec, ModelParams::new(1.0, 0.9).unwrap(), real.fields()).unwrap();
        let w = real.overlap_weights();
        let r12 = |c: &[&[i8]]| OverlapArray::from_configs(c, &w).get(1, 2);
        for x in 0..2 {
            let check = replica_derivative_check(&st, 2, r12, x, 1).unwrap();
            assert!((check.analytic - check.finite_difference).abs() < 1e-5);
        }
    }

    #[test]
    fn second_order_needs_the_normalization_term() {
        let st = random_state(8);
        for x in 0..4 {
            let check = replica_derivative_check(&st, 1, |_| 1.0, x, 2).unwrap();
            assert!((check.analytic_exact - check.finite_difference).abs() < 1e-5);
            // for f = 1, m = 1 the replica formula gives h^2 <s(s - s')^2> = 0
            assert!(check.analytic.abs() < 1e-13);
            let third = derivative_stack(&st, x, 3).unwrap() / st.params().h;
            assert!((check.analytic_exact - third).abs() < 1e-12);
        }
    }
}
