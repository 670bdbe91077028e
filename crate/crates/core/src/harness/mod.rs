//! Experiment orchestration: plans, runs, trend verdicts and replay.

pub mod plan;
pub mod run;
pub mod trend;

pub use plan::{bundled_plan, validate_plan, CellSpec, Diagnostic, ExperimentPlan, ObservablePlan};
pub use run::{dump_trajectory, replay, run_plan, Manifest, ReplayReport, RunError, RunOptions, RunOutcome};
pub use trend::{fit_slope, trend_reports, var_fn_scaling, verdict, TrendPoint, TrendReport, Verdict};
