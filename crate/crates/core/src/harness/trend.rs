//! Trend verdicts across a ladder of system sizes.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::observables::CsvRow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub n: usize,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "decreasing-outside-2SE")]
    DecreasingOutside2Se,
    #[serde(rename = "flat")]
    Flat,
    #[serde(rename = "increasing")]
    Increasing,
    #[serde(rename = "inconclusive")]
    Inconclusive,
    #[serde(rename = "bounded")]
    Bounded,
    #[serde(rename = "unbounded")]
    Unbounded,
}

/// Least-squares slope of `log |estimate|` on `log n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub exponent: f64,
    /// 95% interval; absent with only two points.
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub observable: String,
    pub d: usize,
    pub beta: f64,
    pub h: f64,
    pub profile: String,
    pub dist: String,
    pub points: Vec<TrendPoint>,
    pub verdict: Verdict,
    pub slope: Option<SlopeFit>,
    /// `max / min` of the ladder for boundedness checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spread: Option<f64>,
}

fn joint_se(a: &TrendPoint, b: &TrendPoint) -> f64 {
    (a.se * a.se + b.se * b.se).sqrt()
}

/// Verdict from `(n, estimate, SE)` triples, sorted by `n`: every step must
/// fall (rise) by more than two joint standard errors for a decreasing
/// (increasing) verdict; `flat` when every step is within two.
pub fn verdict(points: &[TrendPoint]) -> Verdict {
    if points.len() < 2 {
        return Verdict::Inconclusive;
    }
    let steps: Vec<(f64, f64)> = points
        .windows(2)
        .map(|w| (w[1].estimate - w[0].estimate, 2.0 * joint_se(&w[0], &w[1])))
        .collect();
    if steps.iter().all(|&(d, band)| d < -band) {
        Verdict::DecreasingOutside2Se
    } else if steps.iter().all(|&(d, band)| d > band) {
        Verdict::Increasing
    } else if steps.iter().all(|&(d, band)| d.abs() <= band) {
        Verdict::Flat
    } else {
        Verdict::Inconclusive
    }
}

pub fn fit_slope(points: &[TrendPoint]) -> Option<SlopeFit> {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.estimate.abs() > 0.0 && p.n > 0)
        .map(|p| ((p.n as f64).ln(), p.estimate.abs().ln()))
        .collect();
    let k = xy.len();
    if k < 2 {
        return None;
    }
    let kf = k as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / kf;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / kf;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let ci = (k > 2).then(|| {
        let sse: f64 = xy.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
        let se = (sse / (kf - 2.0) / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, kf - 2.0)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.975);
        (slope - t * se, slope + t * se)
    });
    Some(SlopeFit { exponent: slope, ci })
}

/// Groups rows by everything but `n` and reports each ladder, tracking the
/// magnitude `|mean|`.
pub fn trend_reports(rows: &[CsvRow]) -> Vec<TrendReport> {
    let mut groups: Vec<(Vec<&CsvRow>, &CsvRow)> = Vec::new();
    for row in rows {
        let same = |r: &CsvRow| {
            r.observable == row.observable
                && r.d == row.d
                && r.beta == row.beta
                && r.h == row.h
                && r.profile == row.profile
                && r.dist == row.dist
        };
        match groups.iter_mut().find(|(_, key)| same(key)) {
            Some((members, _)) => members.push(row),
            None => groups.push((vec![row], row)),
        }
    }
    groups
        .into_iter()
        .map(|(members, key)| {
            let mut points: Vec<TrendPoint> = members
                .iter()
                .map(|r| TrendPoint {
                    n: r.n,
                    estimate: r.mean.abs(),
                    se: r.se,
                })
                .collect();
            points.sort_by_key(|p| p.n);
            TrendReport {
                observable: key.observable.clone(),
                d: key.d,
                beta: key.beta,
                h: key.h,
                profile: key.profile.clone(),
                dist: key.dist.clone(),
                verdict: verdict(&points),
                slope: fit_slope(&points),
                spread: None,
                points,
            }
        })
        .collect()
}

/// `Var(F_n) / |V_n|` across the ladder of `F_n` rows; bounded iff
/// `max / min < factor` (a zero ladder counts as bounded).
pub fn var_fn_scaling(rows: &[CsvRow], factor: f64) -> Result<TrendReport, String> {
    if rows.len() < 3 {
        return Err(format!(
            "var-fn scaling needs at least 3 ladder points (got {})",
            rows.len()
        ));
    }
    let mut points: Vec<TrendPoint> = rows
        .iter()
        .map(|r| {
            let volume = (r.n as f64).powi(r.d as i32);
            TrendPoint {
                n: r.n,
                estimate: r.variance / volume,
                se: variance_se(r) / volume,
            }
        })
        .collect();
    points.sort_by_key(|p| p.n);
    let max = points.iter().map(|p| p.estimate).fold(f64::NEG_INFINITY, f64::max);
    let min = points.iter().map(|p| p.estimate).fold(f64::INFINITY, f64::min);
    let (spread, bounded) = if max == 0.0 {
        (1.0, true)
    } else if min > 0.0 {
        (max / min, max / min < factor)
    } else {
        (f64::INFINITY, false)
    };
    let key = &rows[0];
    Ok(TrendReport {
        observable: "var-fn-per-volume".into(),
        d: key.d,
        beta: key.beta,
        h: key.h,
        profile: key.profile.clone(),
        dist: key.dist.clone(),
        verdict: if bounded { Verdict::Bounded } else { Verdict::Unbounded },
        slope: fit_slope(&points),
        spread: Some(spread),
        points,
    })
}

/// Normal-theory standard error of a sample variance, `s^2 sqrt(2 / (k - 1))`.
fn variance_se(row: &CsvRow) -> f64 {
    if row.seeds < 2 {
        return 0.0;
    }
    row.variance * (2.0 / (row.seeds as f64 - 1.0)).sqrt()
}
