//! `rfim`: run experiment plans, IBP checks and replays from the shell.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rfim_core::harness::{
    bundled_plan, dump_trajectory, replay, run_plan, validate_plan, ExperimentPlan, RunError, RunOptions, RunOutcome,
    TrendReport,
};
use rfim_core::ibp::{compare_to_baseline, ibp_suite, RemainderReport, SuiteConfig};
use rfim_core::observables::EngineChoice;

const OK: u8 = 0;
const INVALID: u8 = 1;
const FAILED: u8 = 2;

/// Residual tolerance and SE multiple for pass/fail of IBP reports.
const IBP_TOL: f64 = 1e-8;
const IBP_SE: f64 = 4.0;

#[derive(Parser)]
#[command(
    name = "rfim",
    version,
    about = "Random field Ising model simulation and verification lab"
)]
struct Cli {
    /// Plan document (JSON), or `@name` for a bundled plan.
    #[arg(long, global = true)]
    plan: Option<String>,
    /// Output directory; overrides the plan's.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// First disorder seed; overrides the plan's.
    #[arg(long, global = true)]
    seed_base: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the plan with the enumeration engine.
    Exact,
    /// Run the plan with the Monte Carlo engine.
    Mcmc {
        /// Also write the trajectory of the first seed of every cell here.
        #[arg(long)]
        dump_trajectories: Option<PathBuf>,
        /// Replicas per dumped trajectory.
        #[arg(long, default_value_t = 2)]
        replicas: usize,
    },
    /// Check the integration-by-parts remainders.
    Ibp {
        /// Compare against a stored report list.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Absolute tolerance for the baseline comparison.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Run the plan's gg-residual observables.
    Gg,
    /// Run the whole plan and print trend verdicts.
    Trend,
    /// Rerun a manifest and compare every output byte for byte.
    Replay { manifest: PathBuf },
    /// Parse and check a plan; print its normal form or diagnostics.
    Validate,
}

/// A message plus the exit code it maps to.
struct Exit(u8, String);

impl From<RunError> for Exit {
    fn from(e: RunError) -> Self {
        let code = if matches!(e, RunError::Invalid(_)) {
            INVALID
        } else {
            FAILED
        };
        Exit(code, e.to_string())
    }
}

fn load_plan(arg: Option<&str>) -> Result<ExperimentPlan, Exit> {
    let arg = arg.ok_or_else(|| Exit(INVALID, "--plan is required for this command".into()))?;
    if let Some(name) = arg.strip_prefix('@') {
        return bundled_plan(name).ok_or_else(|| {
            Exit(
                INVALID,
                format!("no bundled plan named {name} (try paper-suite, q-consistency, var-fn)"),
            )
        });
    }
    let text = fs::read_to_string(arg).map_err(|e| Exit(INVALID, format!("{arg}: {e}")))?;
    validate_plan(&text).map_err(|diags| {
        let lines: Vec<String> = diags
            .iter()
            .map(|d| match d.line {
                Some(_) => format!("{arg}:{d}"),
                None => format!("{arg}: {d}"),
            })
            .collect();
        Exit(INVALID, lines.join("\n"))
    })
}

fn options(cli: &Cli) -> RunOptions {
    RunOptions {
        out: cli.out.clone(),
        workers: cli.workers,
        seed_base: cli.seed_base,
        ..RunOptions::default()
    }
}

fn report_run(outcome: &RunOutcome) -> Result<(), Exit> {
    println!(
        "wrote {} files to {}",
        outcome.manifest.outputs.len() + 1,
        outcome.dir.display()
    );
    for f in &outcome.manifest.failures {
        eprintln!("failed: [{}] {}", f.observable, f.message);
    }
    if outcome.succeeded() {
        Ok(())
    } else {
        Err(Exit(
            FAILED,
            format!("{} failures recorded in the manifest", outcome.manifest.failures.len()),
        ))
    }
}

fn print_trends(trends: &[TrendReport]) {
    for t in trends {
        let ladder: Vec<String> = t
            .points
            .iter()
            .map(|p| format!("{}:{:.3e}±{:.1e}", p.n, p.estimate, p.se))
            .collect();
        let slope = t.slope.map_or("-".to_string(), |s| format!("{:.2}", s.exponent));
        println!(
            "{:<26} d={} beta={} h={} {:<12} {:<24} slope {:>6}  [{}]",
            t.observable,
            t.d,
            t.beta,
            t.h,
            t.dist,
            serde_json::to_value(t.verdict)
                .expect("verdicts serialize")
                .as_str()
                .unwrap_or_default(),
            slope,
            ladder.join(" ")
        );
    }
}

fn ibp_verdict(reports: &[RemainderReport], errors: &[String]) -> Result<(), Exit> {
    let mut bad = errors.to_vec();
    for r in reports {
        let tag = format!("{} on {}", r.function, r.dists.join(" x "));
        println!(
            "{:<40} {:<14} gamma {:>+.6e}  residual {:>+.2e}  bounds {}",
            tag,
            r.method,
            r.gamma,
            r.residual,
            if r.bounds_hold() { "hold" } else { "VIOLATED" }
        );
        if !r.residual_ok(IBP_TOL, IBP_SE) {
            bad.push(format!("{tag}: residual {:e}", r.residual));
        }
        if !r.bounds_hold() {
            bad.push(format!("{tag}: bound violated"));
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Exit(FAILED, bad.join("\n")))
    }
}

fn run_ibp(cli: &Cli, baseline: Option<&Path>, tol: f64) -> Result<(), Exit> {
    let (reports, errors) = if cli.plan.is_some() {
        let plan = load_plan(cli.plan.as_deref())?;
        let opts = RunOptions {
            only: Some(vec!["ibp-suite".into()]),
            ..options(cli)
        };
        let outcome = run_plan(&plan, &opts)?;
        let errors = outcome
            .manifest
            .failures
            .iter()
            .map(|f| format!("{}: {}", f.observable, f.message))
            .collect();
        (outcome.ibp, errors)
    } else {
        let mut reports = Vec::new();
        let mut errors = Vec::new();
        for (name, r) in ibp_suite(&SuiteConfig::default()) {
            match r {
                Ok(r) => reports.push(r),
                Err(e) => errors.push(format!("{name}: {e}")),
            }
        }
        if let Some(out) = &cli.out {
            fs::create_dir_all(out).map_err(|e| Exit(FAILED, format!("{}: {e}", out.display())))?;
            let path = out.join("ibp_reports.json");
            let text = serde_json::to_string_pretty(&reports).expect("reports serialize");
            fs::write(&path, text + "\n").map_err(|e| Exit(FAILED, format!("{}: {e}", path.display())))?;
        }
        (reports, errors)
    };
    let mut result = ibp_verdict(&reports, &errors);
    if let Some(path) = baseline {
        let text = fs::read_to_string(path).map_err(|e| Exit(INVALID, format!("{}: {e}", path.display())))?;
        let stored: Vec<RemainderReport> =
            serde_json::from_str(&text).map_err(|e| Exit(INVALID, format!("{}: {e}", path.display())))?;
        let diffs = compare_to_baseline(&reports, &stored, tol);
        if !diffs.is_empty() {
            result = Err(Exit(FAILED, diffs.join("\n")));
        } else {
            println!("baseline matches within {tol:e}");
        }
    }
    result
}

fn run(cli: &Cli) -> Result<(), Exit> {
    match &cli.command {
        Command::Validate => {
            let plan = load_plan(cli.plan.as_deref())?;
            println!("{}", plan.normalized());
            Ok(())
        }
        Command::Exact => {
            let plan = load_plan(cli.plan.as_deref())?;
            let opts = RunOptions {
                engine: Some(EngineChoice::Exact),
                ..options(cli)
            };
            report_run(&run_plan(&plan, &opts)?)
        }
        Command::Mcmc {
            dump_trajectories,
            replicas,
        } => {
            let plan = load_plan(cli.plan.as_deref())?;
            let opts = RunOptions {
                engine: Some(EngineChoice::Mcmc),
                ..options(cli)
            };
            let outcome = run_plan(&plan, &opts)?;
            if let Some(dir) = dump_trajectories {
                fs::create_dir_all(dir).map_err(|e| Exit(FAILED, format!("{}: {e}", dir.display())))?;
                let effective = &outcome.manifest.plan;
                for cell in effective.cells() {
                    let seed = effective.seeds_for(&cell)[0];
                    let path = dir.join(format!("cell-{}-seed-{seed}.rft", cell.index));
                    let frames = dump_trajectory(effective, &cell, seed, *replicas, &path)
                        .map_err(|e| Exit(FAILED, format!("{}: {e}", cell.label())))?;
                    println!("{}: {frames} frames -> {}", cell.label(), path.display());
                }
            }
            report_run(&outcome)
        }
        Command::Gg => {
            let plan = load_plan(cli.plan.as_deref())?;
            let opts = RunOptions {
                only: Some(vec!["gg-residual".into()]),
                ..options(cli)
            };
            let outcome = run_plan(&plan, &opts)?;
            print_trends(&outcome.trends);
            report_run(&outcome)
        }
        Command::Trend => {
            let plan = load_plan(cli.plan.as_deref())?;
            let outcome = run_plan(&plan, &options(cli))?;
            print_trends(&outcome.trends);
            report_run(&outcome)
        }
        Command::Ibp { baseline, tol } => run_ibp(cli, baseline.as_deref(), *tol),
        Command::Replay { manifest } => {
            let out = cli
                .out
                .clone()
                .ok_or_else(|| Exit(INVALID, "replay needs --out for the rerun".into()))?;
            let report = replay(manifest, &out, cli.workers)?;
            for c in &report.checks {
                println!("{:<10} {}", if c.identical() { "identical" } else { "DIFFERS" }, c.file);
            }
            if report.identical() {
                Ok(())
            } else {
                Err(Exit(FAILED, "replay differs from the manifest".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::from(OK),
        Err(Exit(code, message)) => {
            eprintln!("{message}");
            ExitCode::from(code)
        }
    }
}
