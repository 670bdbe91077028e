use std::path::PathBuf;

use rfim_core::ibp::{compare_to_baseline, ibp_suite, RemainderReport, SuiteConfig};

/// Exact sums and Monte Carlo on the same finitely supported laws agree
/// (the slack covers summation rounding over many identical samples).
fn check_method_agreement(reports: &[RemainderReport]) {
    for mc in reports.iter().filter(|r| r.standard_errors.is_some()) {
        let Some(ex) = reports
            .iter()
            .find(|r| r.method == "exact-discrete" && r.function == mc.function && r.dists == mc.dists)
        else {
            continue;
        };
        let se = mc.standard_errors.unwrap();
        for (name, a, b, s) in [
            ("lhs", mc.lhs, ex.lhs, se.lhs),
            ("main", mc.main_term, ex.main_term, se.main_term),
            ("gamma", mc.gamma, ex.gamma, se.gamma),
        ] {
            assert!(
                (a - b).abs() <= 4.0 * s + 1e-10,
                "{} {:?} {name}: {a} vs {b} (se {s})",
                mc.function,
                mc.dists
            );
        }
    }
}

fn baseline_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/remainder_baseline.json")
}

#[test]
fn suite_matches_checked_in_baseline() {
    let results = ibp_suite(&SuiteConfig::default());
    let mut deterministic = Vec::new();
    let mut all = Vec::new();
    for (label, r) in results {
        let r = r.unwrap_or_else(|e| panic!("{label}: {e}"));
        assert!(r.bounds_hold(), "{label}: {:?}", r.bounds);
        assert!(r.residual_ok(1e-8, 4.0), "{label}: residual {}", r.residual);
        if r.standard_errors.is_none() {
            deterministic.push(r.clone());
        }
        all.push(r);
    }
    check_method_agreement(&all);
    // regenerate with RFIM_BLESS=1 after an intended change
    if std::env::var_os("RFIM_BLESS").is_some() {
        std::fs::write(baseline_path(), serde_json::to_string_pretty(&deterministic).unwrap()).unwrap();
    }
    let text = std::fs::read_to_string(baseline_path()).expect("baseline file");
    let baseline: Vec<RemainderReport> = serde_json::from_str(&text).unwrap();
    assert_eq!(baseline.len(), deterministic.len());
    let diffs = compare_to_baseline(&deterministic, &baseline, 1e-10);
    assert!(diffs.is_empty(), "{diffs:#?}");
}
