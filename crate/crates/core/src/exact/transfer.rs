//! Transfer matrices for `d = 1` chains with free ends.

use super::EngineError;
use crate::lattice::LatticeSpec;
use crate::model::ModelParams;

fn check_chain(spec: &LatticeSpec, fields: &[f64]) -> Result<(), EngineError> {
    if spec.dim() != 1 {
        return Err(EngineError::NotChain(spec.dim()));
    }
    if fields.len() != spec.volume() {
        return Err(EngineError::FieldLength {
            fields: fields.len(),
            volume: spec.volume(),
        });
    }
    Ok(())
}

/// Site factor `exp(h g sigma)` for `sigma = +1, -1`, scaled by `exp(-h|g|)`.
#[inline]
fn site_factor(h: f64, g: f64) -> ([f64; 2], f64) {
    let a = h * g;
    let shift = a.abs();
    ([(a - shift).exp(), (-a - shift).exp()], shift)
}

/// Forward messages; entry `k` holds the normalized partial sums over the
/// first `k + 1` spins as a function of `sigma_k`, together with the log of
/// the normalization accumulated so far.
fn forward(params: ModelParams, fields: &[f64]) -> (Vec<[f64; 2]>, f64) {
    // exp(beta sigma sigma') scaled by exp(-beta): 1 when aligned, exp(-2 beta) otherwise
    let anti = (-2.0 * params.beta).exp();
    let mut out = Vec::with_capacity(fields.len());
    let mut log_scale = 0.0;
    let mut prev: Option<[f64; 2]> = None;
    for &g in fields {
        let (site, shift) = site_factor(params.h, g);
        log_scale += shift;
        let mut v = match prev {
            None => site,
            Some(p) => {
                log_scale += params.beta;
                [(p[0] + anti * p[1]) * site[0], (anti * p[0] + p[1]) * site[1]]
            }
        };
        let norm = v[0] + v[1];
        v[0] /= norm;
        v[1] /= norm;
        log_scale += norm.ln();
        out.push(v);
        prev = Some(v);
    }
    (out, log_scale)
}

/// `F_n` of a chain as an ordered product of 2x2 transfer matrices, with
/// renormalization at every step.
pub fn transfer_matrix_log_z(spec: &LatticeSpec, params: ModelParams, fields: &[f64]) -> Result<f64, EngineError> {
    check_chain(spec, fields)?;
    Ok(forward(params, fields).1)
}

/// Exact `<sigma_x>` on a chain by forward-backward message passing.
pub fn transfer_matrix_site_means(
    spec: &LatticeSpec,
    params: ModelParams,
    fields: &[f64],
) -> Result<Vec<f64>, EngineError> {
    check_chain(spec, fields)?;
    let n = fields.len();
    let anti = (-2.0 * params.beta).exp();
    let (fwd, _) = forward(params, fields);
    // backward[k]: sum over spins k+1.. given sigma_k, normalized
    let mut backward = vec![[1.0, 1.0]; n];
    for k in (0..n.saturating_sub(1)).rev() {
        let (site, _) = site_factor(params.h, fields[k + 1]);
        let next = backward[k + 1];
        let up = site[0] * next[0];
        let down = site[1] * next[1];
        let mut v = [up + anti * down, anti * up + down];
        let norm = v[0] + v[1];
        v[0] /= norm;
        v[1] /= norm;
        backward[k] = v;
    }
    Ok(fwd
        .iter()
        .zip(&backward)
        .map(|(f, b)| {
            let up = f[0] * b[0];
            let down = f[1] * b[1];
            (up - down) / (up + down)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{log_partition, ExactGibbs};

    #[test]
    fn single_site() {
        let spec = LatticeSpec::build(1, 1).unwrap();
        let p = ModelParams::new(1.0, 0.5).unwrap();
        let z = transfer_matrix_log_z(&spec, p, &[1.0]).unwrap();
        assert!((z - (2.0 * 0.5f64.cosh()).ln()).abs() < 1e-15);
    }

    #[test]
    fn matches_enumeration() {
        let spec = LatticeSpec::build(1, 10).unwrap();
        let g = [0.3, -1.2, 2.5, 0.0, -0.7, 1.1, 0.05, -2.2, 0.9, 1.6];
        let p = ModelParams::new(0.9, 0.8).unwrap();
        let tm = transfer_matrix_log_z(&spec, p, &g).unwrap();
        let en = log_partition(&spec, p, &g).unwrap();
        assert!((tm - en).abs() < 1e-12);
        let means = transfer_matrix_site_means(&spec, p, &g).unwrap();
        let st = ExactGibbs::new(&spec, p, &g).unwrap();
        for (a, b) in means.iter().zip(st.site_means()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn long_chain_is_finite_and_fast() {
        let spec = LatticeSpec::build(1, 10_000).unwrap();
        let g: Vec<f64> = (0..10_000).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let start = std::time::Instant::now();
        let z = transfer_matrix_log_z(&spec, ModelParams::new(2.0, 3.0).unwrap(), &g).unwrap();
        assert!(z.is_finite());
        assert!(start.elapsed().as_secs_f64() < 0.1);
    }

    #[test]
    fn rejects_non_chain() {
        let spec = LatticeSpec::build(2, 2).unwrap();
        assert_eq!(
            transfer_matrix_log_z(&spec, ModelParams::new(1.0, 1.0).unwrap(), &[0.0; 4]),
            Err(EngineError::NotChain(2))
        );
    }
}
