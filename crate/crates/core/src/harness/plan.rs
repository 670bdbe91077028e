//! Experiment plans: JSON documents naming a model grid, a disorder law, an
//! engine and a set of observables.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::disorder::{FieldProfile, ZetaDistribution};
use crate::exact::EnumerationConfig;
use crate::ibp::SuiteConfig;
use crate::lattice::LatticeSpec;
use crate::mcmc::SamplerConfig;
use crate::model::ModelParams;
use crate::observables::{EngineChoice, ReplicaFn};

/// Cartesian model grid; cells run in `d`, `n`, `beta`, `h` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub d: Vec<usize>,
    pub n: Vec<usize>,
    pub beta: Vec<f64>,
    pub h: Vec<f64>,
}

/// Disorder seeds per cell. Cell `i` gets `start + i * count ..` unless
/// `shared`, in which case every cell uses `start .. start + count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRange {
    #[serde(default)]
    pub start: u64,
    pub count: u64,
    #[serde(default)]
    pub shared: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderPlan {
    pub profile: FieldProfile,
    pub dists: Vec<ZetaDistribution>,
    pub seeds: SeedRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnginePlan {
    #[serde(default)]
    pub kind: EngineChoice,
    #[serde(default)]
    pub sampler: SamplerConfig,
}

impl Default for EnginePlan {
    fn default() -> Self {
        Self {
            kind: EngineChoice::Auto,
            sampler: SamplerConfig::default(),
        }
    }
}

fn default_factor() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObservablePlan {
    OverlapVariance,
    GgResidual {
        m: usize,
        f: String,
    },
    DeltaSelfAveraging,
    QConsistency,
    FkgScan,
    IbpSuite(SuiteConfig),
    VarFnScaling {
        #[serde(default = "default_factor")]
        factor: f64,
    },
}

impl ObservablePlan {
    /// Name used for the CSV file and trend reports.
    pub fn file_stem(&self) -> &'static str {
        match self {
            Self::OverlapVariance => "overlap-variance",
            Self::GgResidual { .. } => "gg-residual",
            Self::DeltaSelfAveraging => "delta-self-averaging",
            Self::QConsistency => "q-consistency",
            Self::FkgScan => "fkg-scan",
            Self::IbpSuite(_) => "ibp-suite",
            Self::VarFnScaling { .. } => "var-fn-scaling",
        }
    }

    fn needs_replicas(&self) -> bool {
        matches!(
            self,
            Self::OverlapVariance | Self::GgResidual { .. } | Self::DeltaSelfAveraging
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPlan {
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub name: String,
    pub grid: Grid,
    pub disorder: DisorderPlan,
    #[serde(default)]
    pub engine: EnginePlan,
    pub observables: Vec<ObservablePlan>,
    pub output: OutputPlan,
}

/// One problem with a plan document. `path` names the offending key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

impl Diagnostic {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
            line: None,
            column: None,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "{}:{}: {}: {}", l, c, self.path, self.message),
            _ => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

/// A grid cell with its disorder law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub index: usize,
    pub d: usize,
    pub n: usize,
    pub beta: f64,
    pub h: f64,
    pub dist: ZetaDistribution,
}

impl CellSpec {
    pub fn label(&self) -> String {
        format!(
            "cell {} (d={}, n={}, beta={}, h={}, dist={})",
            self.index, self.d, self.n, self.beta, self.h, self.dist
        )
    }

    /// Number of spins, saturating for absurd sizes.
    pub fn volume(&self) -> u128 {
        (self.n as u128).checked_pow(self.d as u32).unwrap_or(u128::MAX)
    }
}

impl ExperimentPlan {
    /// Cells in execution order: distributions outermost, then the grid.
    pub fn cells(&self) -> Vec<CellSpec> {
        let mut out = Vec::new();
        for &dist in &self.disorder.dists {
            for &d in &self.grid.d {
                for &n in &self.grid.n {
                    for &beta in &self.grid.beta {
                        for &h in &self.grid.h {
                            out.push(CellSpec {
                                index: out.len(),
                                d,
                                n,
                                beta,
                                h,
                                dist,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Seeds of a cell.
    pub fn seeds_for(&self, cell: &CellSpec) -> Vec<u64> {
        let s = self.disorder.seeds;
        let base = if s.shared {
            s.start
        } else {
            s.start + cell.index as u64 * s.count
        };
        (base..base + s.count).collect()
    }

    /// Pretty JSON with every default spelled out.
    pub fn normalized(&self) -> String {
        serde_json::to_string_pretty(self).expect("plans always serialize")
    }

    /// Cross-field checks; an empty list means the plan is runnable.
    pub fn check(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let g = &self.grid;
        for (key, len) in [
            ("grid.d", g.d.len()),
            ("grid.n", g.n.len()),
            ("grid.beta", g.beta.len()),
            ("grid.h", g.h.len()),
        ] {
            if len == 0 {
                diags.push(Diagnostic::at(key, "list must not be empty"));
            }
        }
        for (i, &d) in g.d.iter().enumerate() {
            if !(1..=3).contains(&d) {
                diags.push(Diagnostic::at(
                    format!("grid.d[{i}]"),
                    format!("dimension must be 1, 2 or 3 (got {d})"),
                ));
            }
        }
        for (i, &n) in g.n.iter().enumerate() {
            if n == 0 {
                diags.push(Diagnostic::at(format!("grid.n[{i}]"), "side length must be at least 1"));
            }
        }
        for (i, &b) in g.beta.iter().enumerate() {
            if let Err(e) = ModelParams::new(b, 1.0) {
                diags.push(Diagnostic::at(format!("grid.beta[{i}]"), e.to_string()));
            }
        }
        for (i, &h) in g.h.iter().enumerate() {
            if let Err(e) = ModelParams::new(1.0, h) {
                diags.push(Diagnostic::at(format!("grid.h[{i}]"), e.to_string()));
            }
        }
        if let Err(e) = self.disorder.profile.validate() {
            diags.push(Diagnostic::at("disorder.profile", e.to_string()));
        }
        if self.disorder.dists.is_empty() {
            diags.push(Diagnostic::at("disorder.dists", "list must not be empty"));
        }
        for (i, dist) in self.disorder.dists.iter().enumerate() {
            if let Err(e) = dist.validate() {
                diags.push(Diagnostic::at(format!("disorder.dists[{i}].nu"), e.to_string()));
            }
        }
        let seeds = self.disorder.seeds;
        if seeds.count == 0 {
            diags.push(Diagnostic::at("disorder.seeds.count", "seed range must not be empty"));
        }
        let cells = g.d.len() * g.n.len() * g.beta.len() * g.h.len() * self.disorder.dists.len();
        let span = if seeds.shared { 1 } else { cells as u64 };
        if span
            .checked_mul(seeds.count)
            .and_then(|t| t.checked_add(seeds.start))
            .is_none()
        {
            diags.push(Diagnostic::at("disorder.seeds", "seed ranges overflow u64"));
        }
        if let Err(e) = self.engine.sampler.validate() {
            diags.push(Diagnostic::at("engine.sampler", e.to_string()));
        }
        if self.observables.is_empty() {
            diags.push(Diagnostic::at("observables", "list must not be empty"));
        }
        for (i, obs) in self.observables.iter().enumerate() {
            let key = format!("observables[{i}]");
            match obs {
                ObservablePlan::GgResidual { m, f } => {
                    if *m < 2 {
                        diags.push(Diagnostic::at(format!("{key}.m"), format!("needs m >= 2 (got {m})")));
                    }
                    match ReplicaFn::by_name(f) {
                        Err(e) => diags.push(Diagnostic::at(format!("{key}.f"), e.to_string())),
                        Ok(func) if func.max_replica() > *m => diags.push(Diagnostic::at(
                            format!("{key}.f"),
                            format!("{f} involves replica {} but m = {m}", func.max_replica()),
                        )),
                        Ok(_) => {}
                    }
                }
                ObservablePlan::VarFnScaling { factor } if !(*factor > 1.0) => {
                    diags.push(Diagnostic::at(
                        format!("{key}.factor"),
                        format!("factor must exceed 1 (got {factor})"),
                    ));
                }
                ObservablePlan::IbpSuite(c) if c.mc_samples_1d < 2 || c.mc_samples_2d < 2 => {
                    diags.push(Diagnostic::at(key.clone(), "monte-carlo needs at least 2 samples"));
                }
                _ => {}
            }
        }
        if self.output.formats.is_empty() {
            diags.push(Diagnostic::at("output.formats", "list must not be empty"));
        }
        if self.output.dir.is_empty() {
            diags.push(Diagnostic::at("output.dir", "directory must not be empty"));
        }
        if diags.is_empty() {
            for cell in self.cells() {
                for (i, obs) in self.observables.iter().enumerate() {
                    if let Some(msg) = capacity_problem(self.engine.kind, &cell, obs) {
                        diags.push(Diagnostic::at(
                            format!("observables[{i}]"),
                            format!("{}: {msg}", cell.label()),
                        ));
                    }
                }
            }
        }
        diags
    }
}

/// Why `obs` cannot run on `cell` under `engine`, if it cannot.
fn capacity_problem(engine: EngineChoice, cell: &CellSpec, obs: &ObservablePlan) -> Option<String> {
    let cfg = EnumerationConfig::default();
    let volume = cell.volume();
    let (max, tables) = (cfg.max_spins as u128, cfg.table_spins as u128);
    if let Err(e) = LatticeSpec::build(cell.d, cell.n) {
        return Some(e.to_string());
    }
    if matches!(obs, ObservablePlan::IbpSuite(_)) {
        return None;
    }
    match engine {
        EngineChoice::Exact => {
            if volume > max {
                return Some(format!("enumeration capacity is {max} spins, cell has {volume}"));
            }
            if obs.needs_replicas() && volume > tables {
                return Some(format!(
                    "replica expectations by enumeration need at most {tables} spins, cell has {volume}"
                ));
            }
            None
        }
        EngineChoice::TransferMatrix => {
            if cell.d != 1 {
                return Some(format!("transfer matrix needs d = 1 (cell has d = {})", cell.d));
            }
            match obs {
                ObservablePlan::QConsistency | ObservablePlan::VarFnScaling { .. } => None,
                other => Some(format!("{} needs the exact or mcmc engine", other.file_stem())),
            }
        }
        EngineChoice::Mcmc => match obs {
            ObservablePlan::FkgScan | ObservablePlan::VarFnScaling { .. } => {
                Some(format!("{} needs enumeration or a transfer matrix", obs.file_stem()))
            }
            _ => None,
        },
        EngineChoice::Auto => match obs {
            ObservablePlan::FkgScan if volume > max => Some(format!(
                "fkg-scan enumerates; capacity is {max} spins, cell has {volume}"
            )),
            ObservablePlan::VarFnScaling { .. } if cell.d != 1 && volume > max => Some(format!(
                "F_n needs d = 1 or at most {max} spins, cell has d = {} and {volume} spins",
                cell.d
            )),
            _ => None,
        },
    }
}

/// Parses and cross-validates a plan document.
pub fn validate_plan(text: &str) -> Result<ExperimentPlan, Vec<Diagnostic>> {
    let plan: ExperimentPlan = serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        // serde_json appends " at line L column C"; keep the message itself
        let message = match message.rfind(" at line ") {
            Some(i) => message[..i].to_string(),
            None => message,
        };
        vec![Diagnostic {
            path: "plan".into(),
            message,
            line: Some(e.line()),
            column: Some(e.column()),
        }]
    })?;
    let diags = plan.check();
    if diags.is_empty() {
        Ok(plan)
    } else {
        Err(diags)
    }
}

/// The bundled plans, by name.
pub fn bundled_plan(name: &str) -> Option<ExperimentPlan> {
    let text = match name {
        "paper-suite" => include_str!("../../plans/paper-suite.json"),
        "q-consistency" => include_str!("../../plans/q-consistency.json"),
        "var-fn" => include_str!("../../plans/var-fn.json"),
        _ => return None,
    };
    Some(validate_plan(text).expect("bundled plans validate"))
}
