//! Plan execution, report emission and manifest replay.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::plan::{CellSpec, Diagnostic, ExperimentPlan, Format, ObservablePlan};
use super::trend::{trend_reports, var_fn_scaling, TrendReport};
use crate::ibp::{ibp_suite, RemainderReport};
use crate::lattice::LatticeSpec;
use crate::mcmc::TrajectoryWriter;
use crate::model::ModelParams;
use crate::observables::{
    delta_self_averaging, fkg_scan, free_energy_stats, gg_residual, overlap_variance, q_consistency, CsvRow,
    EngineChoice, Ensemble, Estimate, ReplicaFn,
};

pub const SOFTWARE_NAME: &str = env!("CARGO_PKG_NAME");
pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("plan is invalid:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Command-line overrides applied to a plan before it runs; the effective
/// plan is what the manifest records.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
    /// Replaces `disorder.seeds.start`.
    pub seed_base: Option<u64>,
    pub engine: Option<EngineChoice>,
    /// Keep only observables with these file stems.
    pub only: Option<Vec<String>>,
}

impl RunOptions {
    /// The plan after overrides, revalidated.
    pub fn effective_plan(&self, plan: &ExperimentPlan) -> Result<ExperimentPlan, RunError> {
        let mut plan = plan.clone();
        if let Some(base) = self.seed_base {
            plan.disorder.seeds.start = base;
        }
        if let Some(engine) = self.engine {
            plan.engine.kind = engine;
        }
        if let Some(only) = &self.only {
            plan.observables.retain(|o| only.iter().any(|s| s == o.file_stem()));
            if plan.observables.is_empty() {
                return Err(RunError::Invalid(vec![Diagnostic {
                    path: "observables".into(),
                    message: format!("no observable of kind {} in plan", only.join(", ")),
                    line: None,
                    column: None,
                }]));
            }
        }
        if let Some(out) = &self.out {
            plan.output.dir = out.to_string_lossy().into_owned();
        }
        let diagnostics = plan.check();
        if diagnostics.is_empty() {
            Ok(plan)
        } else {
            Err(RunError::Invalid(diagnostics))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Software {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub index: usize,
    pub label: String,
    /// Every disorder seed of the cell, in reduction order.
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    /// Absent for plan-wide observables.
    pub cell: Option<usize>,
    pub observable: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub software: Software,
    pub plan: ExperimentPlan,
    pub cells: Vec<CellRecord>,
    pub failures: Vec<Failure>,
    pub outputs: Vec<OutputFile>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| RunError::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub rows: BTreeMap<String, Vec<CsvRow>>,
    pub trends: Vec<TrendReport>,
    pub ibp: Vec<RemainderReport>,
}

impl RunOutcome {
    pub fn succeeded(&self) -> bool {
        self.manifest.failures.is_empty()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn row(name: &str, cell: &CellSpec, ensemble: &Ensemble, est: Estimate, variance: f64) -> CsvRow {
    CsvRow {
        observable: name.into(),
        n: cell.n,
        d: cell.d,
        beta: cell.beta,
        h: cell.h,
        profile: ensemble.profile.name(),
        dist: cell.dist.name(),
        mean: est.value,
        variance,
        se: est.se,
        seeds: ensemble.seeds.len(),
    }
}

/// Variance implied by a standard error over `k` seeds.
fn implied_variance(est: Estimate, k: usize) -> f64 {
    est.se * est.se * k as f64
}

fn build_ensemble(plan: &ExperimentPlan, cell: &CellSpec) -> Result<Ensemble, String> {
    let spec = LatticeSpec::build(cell.d, cell.n).map_err(|e| e.to_string())?;
    let params = ModelParams::new(cell.beta, cell.h).map_err(|e| e.to_string())?;
    Ok(Ensemble::new(
        spec,
        params,
        plan.disorder.profile.clone(),
        cell.dist,
        plan.seeds_for(cell),
    )
    .with_engine(plan.engine.kind)
    .with_sampler(plan.engine.sampler.clone()))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

/// One observable on one cell: CSV rows plus a JSON detail record.
fn evaluate(obs: &ObservablePlan, cell: &CellSpec, e: &Ensemble) -> Result<(Vec<CsvRow>, Value), String> {
    let k = e.seeds.len();
    let err = |x: crate::observables::EnsembleError| x.to_string();
    match obs {
        ObservablePlan::OverlapVariance => {
            let r = overlap_variance(e).map_err(err)?;
            let rows = vec![row(
                "overlap-variance",
                cell,
                e,
                r.nu_variance,
                implied_variance(r.nu_variance, k),
            )];
            let detail = json!({
                "nu_variance": r.nu_variance,
                "thermal": r.thermal,
                "disorder": r.disorder,
                "nu_r12": r.nu_r12,
                "backend": r.backend,
            });
            Ok((rows, detail))
        }
        ObservablePlan::GgResidual { m, f } => {
            let func = ReplicaFn::by_name(f).map_err(|x| x.to_string())?;
            let r = gg_residual(e, *m, &func).map_err(err)?;
            let name = format!("gg-residual(m={m};f={f})");
            Ok((
                vec![row(&name, cell, e, r.residual, implied_variance(r.residual, k))],
                to_value(&r),
            ))
        }
        ObservablePlan::DeltaSelfAveraging => {
            let r = delta_self_averaging(e).map_err(err)?;
            let rows = vec![row(
                "delta-abs-deviation",
                cell,
                e,
                r.value,
                implied_variance(r.value, k),
            )];
            Ok((rows, to_value(&r)))
        }
        ObservablePlan::QConsistency => {
            let r = q_consistency(e).map_err(err)?;
            let rows = vec![
                row("q-gap", cell, e, r.gap, implied_variance(r.gap, k)),
                row("q-unit-gap", cell, e, r.unit_gap, implied_variance(r.unit_gap, k)),
            ];
            Ok((rows, to_value(&r)))
        }
        ObservablePlan::FkgScan => {
            let r = fkg_scan(e).map_err(err)?;
            let rows = vec![row("fkg-min-truncated", cell, e, Estimate::exact(r.min_truncated), 0.0)];
            Ok((rows, to_value(&r)))
        }
        ObservablePlan::VarFnScaling { .. } => {
            let s = free_energy_stats(e).map_err(err)?;
            let est = Estimate {
                value: s.mean(),
                se: s.standard_error(),
            };
            let detail = json!({ "mean": s.mean(), "variance": s.variance(), "seeds": s.count() });
            Ok((vec![row("F_n", cell, e, est, s.variance())], detail))
        }
        ObservablePlan::IbpSuite(_) => Err("ibp-suite is plan-wide".into()),
    }
}

/// Groups `F_n` rows into ladders over `n`.
fn var_fn_trends(rows: &[CsvRow], factor: f64, failures: &mut Vec<Failure>) -> Vec<TrendReport> {
    let mut ladders: Vec<Vec<CsvRow>> = Vec::new();
    for r in rows {
        match ladders.iter_mut().find(|l| {
            let k = &l[0];
            k.d == r.d && k.beta == r.beta && k.h == r.h && k.profile == r.profile && k.dist == r.dist
        }) {
            Some(l) => l.push(r.clone()),
            None => ladders.push(vec![r.clone()]),
        }
    }
    let mut out = Vec::new();
    for l in ladders {
        match var_fn_scaling(&l, factor) {
            Ok(t) => out.push(t),
            Err(message) => failures.push(Failure {
                cell: None,
                observable: "var-fn-scaling".into(),
                message,
            }),
        }
    }
    out
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], outputs: &mut Vec<OutputFile>) -> Result<(), RunError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(io_err(&path))?;
    outputs.push(OutputFile {
        file: name.into(),
        sha256: sha256_hex(bytes),
    });
    Ok(())
}

fn csv_bytes(rows: &[CsvRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize");
    }
    w.into_inner().expect("in-memory writer")
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("reports serialize");
    s.push(b'\n');
    s
}

/// Runs every cell of `plan` (cells in order, seeds in parallel) and writes
/// CSVs, summaries and a manifest into the output directory. A failing cell
/// is recorded and the run continues.
pub fn run_plan(plan: &ExperimentPlan, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    let plan = opts.effective_plan(plan)?;
    let dir = PathBuf::from(&plan.output.dir);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.unwrap_or(0))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;

    let cells = plan.cells();
    let mut failures = Vec::new();
    let mut rows: BTreeMap<String, Vec<CsvRow>> = BTreeMap::new();
    let mut summary = Vec::new();
    let mut trends = Vec::new();
    let mut ibp = Vec::new();

    pool.install(|| {
        for obs in &plan.observables {
            let stem = obs.file_stem().to_string();
            if let ObservablePlan::IbpSuite(config) = obs {
                for (name, result) in ibp_suite(config) {
                    match result {
                        Ok(r) => ibp.push(r),
                        Err(e) => failures.push(Failure {
                            cell: None,
                            observable: format!("ibp-suite:{name}"),
                            message: e.to_string(),
                        }),
                    }
                }
                continue;
            }
            let mut obs_rows = Vec::new();
            for cell in &cells {
                let result = build_ensemble(&plan, cell).and_then(|e| evaluate(obs, cell, &e));
                match result {
                    Ok((r, detail)) => {
                        obs_rows.extend(r);
                        summary.push(json!({
                            "cell": cell.index,
                            "label": cell.label(),
                            "observable": stem,
                            "result": detail,
                        }));
                    }
                    Err(message) => failures.push(Failure {
                        cell: Some(cell.index),
                        observable: stem.clone(),
                        message: format!("{}: {message}", cell.label()),
                    }),
                }
            }
            match obs {
                ObservablePlan::VarFnScaling { factor } => {
                    trends.extend(var_fn_trends(&obs_rows, *factor, &mut failures));
                }
                ObservablePlan::FkgScan => {}
                _ => trends.extend(trend_reports(&obs_rows)),
            }
            rows.insert(stem, obs_rows);
        }
    });

    let mut outputs = Vec::new();
    if plan.output.formats.contains(&Format::Csv) {
        for (stem, r) in &rows {
            write_file(&dir, &format!("{stem}.csv"), &csv_bytes(r), &mut outputs)?;
        }
    }
    if plan.output.formats.contains(&Format::Json) {
        write_file(&dir, "summary.json", &pretty(&summary), &mut outputs)?;
    }
    if !trends.is_empty() {
        write_file(&dir, "trends.json", &pretty(&trends), &mut outputs)?;
    }
    if !ibp.is_empty() {
        write_file(&dir, "ibp_reports.json", &pretty(&ibp), &mut outputs)?;
    }

    let manifest = Manifest {
        software: Software {
            name: SOFTWARE_NAME.into(),
            version: SOFTWARE_VERSION.into(),
        },
        cells: cells
            .iter()
            .map(|c| CellRecord {
                index: c.index,
                label: c.label(),
                seeds: plan.seeds_for(c),
            })
            .collect(),
        plan,
        failures,
        outputs,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, pretty(&manifest)).map_err(io_err(&path))?;
    Ok(RunOutcome {
        dir,
        manifest,
        rows,
        trends,
        ibp,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileCheck {
    pub file: String,
    pub expected: String,
    pub actual: Option<String>,
}

impl FileCheck {
    pub fn identical(&self) -> bool {
        self.actual.as_deref() == Some(self.expected.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub checks: Vec<FileCheck>,
    pub outcome: RunOutcome,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.checks.iter().all(FileCheck::identical)
    }
}

/// Reruns the plan recorded in a manifest into `out` and compares every
/// recorded output file by content hash.
pub fn replay(manifest_path: &Path, out: &Path, workers: Option<usize>) -> Result<ReplayReport, RunError> {
    let manifest = Manifest::load(manifest_path)?;
    let recorded: Vec<Vec<u64>> = manifest.cells.iter().map(|c| c.seeds.clone()).collect();
    let actual: Vec<Vec<u64>> = manifest
        .plan
        .cells()
        .iter()
        .map(|c| manifest.plan.seeds_for(c))
        .collect();
    if recorded != actual {
        return Err(RunError::Manifest {
            path: manifest_path.to_path_buf(),
            message: "recorded seeds disagree with the recorded plan".into(),
        });
    }
    let opts = RunOptions {
        out: Some(out.to_path_buf()),
        workers,
        ..RunOptions::default()
    };
    let outcome = run_plan(&manifest.plan, &opts)?;
    let produced: BTreeMap<&str, &str> = outcome
        .manifest
        .outputs
        .iter()
        .map(|o| (o.file.as_str(), o.sha256.as_str()))
        .collect();
    let checks = manifest
        .outputs
        .iter()
        .map(|o| FileCheck {
            file: o.file.clone(),
            expected: o.sha256.clone(),
            actual: produced.get(o.file.as_str()).map(|s| s.to_string()),
        })
        .collect();
    Ok(ReplayReport { checks, outcome })
}

/// Writes the post-burn-in trajectory of `replicas` chains for one seed of a
/// cell in the versioned binary format.
pub fn dump_trajectory(
    plan: &ExperimentPlan,
    cell: &CellSpec,
    seed: u64,
    replicas: usize,
    path: &Path,
) -> Result<usize, String> {
    let mut e = build_ensemble(plan, cell)?;
    e.seeds = vec![seed];
    let frames = e
        .map_seeds(|inst| {
            let mut sampler = inst.replica_sampler(replicas)?;
            let file = fs::File::create(path)
                .map_err(|x| crate::observables::EnsembleError::Unsupported(format!("{}: {x}", path.display())))?;
            let mut w = TrajectoryWriter::new(BufWriter::new(file), inst.fields().len(), replicas)?;
            let mut frames = 0;
            while let Some(t) = sampler.next_tuple() {
                w.write_tuple(&t)?;
                frames += 1;
            }
            w.finish()?;
            Ok(frames)
        })
        .map_err(|x| x.to_string())?;
    Ok(frames[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::plan::validate_plan;

    fn tiny(observables: &str) -> ExperimentPlan {
        let text = format!(
            r#"{{
  "name": "tiny",
  "grid": {{ "d": [1], "n": [4, 6], "beta": [0.7], "h": [0.9] }},
  "disorder": {{
    "profile": {{ "kind": "constant", "c": 1.0 }},
    "dists": [{{ "kind": "gaussian" }}],
    "seeds": {{ "count": 12 }}
  }},
  "engine": {{ "kind": "exact" }},
  "observables": {observables},
  "output": {{ "dir": "unused" }}
}}"#
        );
        validate_plan(&text).unwrap_or_else(|d| panic!("{d:?}"))
    }

    fn opts(dir: &Path, workers: usize) -> RunOptions {
        RunOptions {
            out: Some(dir.to_path_buf()),
            workers: Some(workers),
            ..RunOptions::default()
        }
    }

    #[test]
    fn zero_disorder_gives_one_row_with_zero_variance() {
        let mut plan = tiny(r#"[{ "kind": "var-fn-scaling" }]"#);
        plan.grid.n = vec![5];
        plan.disorder.profile = crate::disorder::FieldProfile::Constant { c: 0.0 };
        let dir = tempfile::tempdir().unwrap();
        let out = run_plan(&plan, &opts(dir.path(), 2)).unwrap();
        let rows = &out.rows["var-fn-scaling"];
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].variance, 0.0);
        // a single-point ladder cannot be scaled and is recorded, not fatal
        assert_eq!(out.manifest.failures.len(), 1);
        assert!(dir.path().join("var-fn-scaling.csv").exists());
    }

    #[test]
    fn csv_header_matches_schema() {
        let plan = tiny(r#"[{ "kind": "overlap-variance" }]"#);
        let dir = tempfile::tempdir().unwrap();
        run_plan(&plan, &opts(dir.path(), 1)).unwrap();
        let text = fs::read_to_string(dir.path().join("overlap-variance.csv")).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "observable,n,d,beta,h,profile,dist,mean,variance,SE,seeds"
        );
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn replay_is_byte_identical_across_worker_counts() {
        let plan = tiny(r#"[{ "kind": "gg-residual", "m": 2, "f": "r12" }, { "kind": "q-consistency" }]"#);
        let a = tempfile::tempdir().unwrap();
        let first = run_plan(&plan, &opts(a.path(), 1)).unwrap();
        assert!(first.succeeded());
        let b = tempfile::tempdir().unwrap();
        let report = replay(&a.path().join(MANIFEST_FILE), b.path(), Some(3)).unwrap();
        assert!(report.identical(), "{:?}", report.checks);
        for o in &first.manifest.outputs {
            assert_eq!(
                fs::read(a.path().join(&o.file)).unwrap(),
                fs::read(b.path().join(&o.file)).unwrap()
            );
        }
    }

    #[test]
    fn failing_cell_does_not_abort_siblings() {
        // a two-dimensional profile origin only fits the d = 2 cells
        let mut plan = tiny(r#"[{ "kind": "overlap-variance" }]"#);
        plan.grid.d = vec![1, 2];
        plan.grid.n = vec![2];
        plan.disorder.profile = crate::disorder::FieldProfile::PowerLaw {
            h_star: 0.5,
            alpha: 1.0,
            origin: Some(vec![0, 0]),
        };
        let dir = tempfile::tempdir().unwrap();
        let out = run_plan(&plan, &opts(dir.path(), 2)).unwrap();
        assert_eq!(out.manifest.failures.len(), 1);
        assert_eq!(out.manifest.failures[0].cell, Some(0));
        assert_eq!(out.rows["overlap-variance"].len(), 1);
        assert_eq!(out.rows["overlap-variance"][0].d, 2);
        let mut broken = plan.clone();
        broken.grid.beta = vec![f64::NAN];
        assert!(matches!(
            run_plan(&broken, &opts(dir.path(), 2)),
            Err(RunError::Invalid(_))
        ));
    }

    #[test]
    fn seed_base_and_filter_land_in_the_manifest() {
        let plan = tiny(r#"[{ "kind": "overlap-variance" }, { "kind": "q-consistency" }]"#);
        let dir = tempfile::tempdir().unwrap();
        let o = RunOptions {
            seed_base: Some(500),
            only: Some(vec!["q-consistency".into()]),
            ..opts(dir.path(), 2)
        };
        let out = run_plan(&plan, &o).unwrap();
        assert_eq!(out.manifest.plan.observables, vec![ObservablePlan::QConsistency]);
        assert_eq!(out.manifest.cells[1].seeds[0], 512);
        let missing = RunOptions {
            only: Some(vec!["fkg-scan".into()]),
            ..opts(dir.path(), 1)
        };
        assert!(run_plan(&plan, &missing).is_err());
    }

    #[test]
    fn trajectory_dump_round_trips() {
        let mut plan = tiny(r#"[{ "kind": "overlap-variance" }]"#);
        plan.engine.sampler.sweeps = 60;
        plan.engine.sampler.burn_in = 10;
        plan.engine.sampler.thinning = 5;
        let cell = &plan.cells()[0];
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
        assert_eq!(dump_trajectory(&plan, cell, 7, 2, &p1).unwrap(), 10);
        dump_trajectory(&plan, cell, 7, 2, &p2).unwrap();
        let bytes = fs::read(&p1).unwrap();
        assert_eq!(bytes, fs::read(&p2).unwrap());
        let t = crate::mcmc::read_trajectory(&bytes[..]).unwrap();
        assert_eq!((t.volume, t.replicas, t.frames.len()), (4, 2, 10));
    }
}
