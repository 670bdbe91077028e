//! Python bindings. Structured results cross the boundary as JSON text.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rfim_core::exact::{log_partition as exact_log_partition, ExactGibbs};
use rfim_core::harness::{self, RunError, RunOptions};
use rfim_core::ibp::{ibp_suite as core_ibp_suite, SuiteConfig};
use rfim_core::lattice::LatticeSpec;
use rfim_core::model::ModelParams;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn model(dim: usize, side: usize, beta: f64, h: f64) -> PyResult<(LatticeSpec, ModelParams)> {
    let spec = LatticeSpec::build(dim, side).map_err(value_err)?;
    let params = ModelParams::new(beta, h).map_err(value_err)?;
    Ok((spec, params))
}

/// Parse and check a plan; return its normal form or raise ValueError with one diagnostic per line.
#[pyfunction]
fn validate_plan(text: &str) -> PyResult<String> {
    harness::validate_plan(text).map(|p| p.normalized()).map_err(|diags| {
        let lines: Vec<String> = diags.iter().map(ToString::to_string).collect();
        PyValueError::new_err(lines.join("\n"))
    })
}

/// Normal form of a bundled plan.
#[pyfunction]
fn bundled_plan(name: &str) -> PyResult<String> {
    harness::bundled_plan(name)
        .map(|p| p.normalized())
        .ok_or_else(|| PyValueError::new_err(format!("no bundled plan named {name}")))
}

/// Run a plan and return the manifest as JSON text.
#[pyfunction]
#[pyo3(signature = (plan, out=None, workers=None, seed_base=None))]
fn run_plan(
    py: Python<'_>,
    plan: &str,
    out: Option<PathBuf>,
    workers: Option<usize>,
    seed_base: Option<u64>,
) -> PyResult<String> {
    let plan = harness::validate_plan(plan).map_err(|diags| {
        let lines: Vec<String> = diags.iter().map(ToString::to_string).collect();
        PyValueError::new_err(lines.join("\n"))
    })?;
    let opts = RunOptions {
        out,
        workers,
        seed_base,
        ..RunOptions::default()
    };
    let outcome = py.detach(|| harness::run_plan(&plan, &opts)).map_err(|e| match e {
        RunError::Invalid(_) => value_err(e),
        _ => PyRuntimeError::new_err(e.to_string()),
    })?;
    serde_json::to_string(&outcome.manifest).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Natural log of the partition function on the free-boundary cube of the given side.
#[pyfunction]
fn log_partition(dim: usize, side: usize, beta: f64, h: f64, fields: Vec<f64>) -> PyResult<f64> {
    let (spec, params) = model(dim, side, beta, h)?;
    exact_log_partition(&spec, params, &fields).map_err(value_err)
}

/// Exact Gibbs means of every spin.
#[pyfunction]
fn site_means(dim: usize, side: usize, beta: f64, h: f64, fields: Vec<f64>) -> PyResult<Vec<f64>> {
    let (spec, params) = model(dim, side, beta, h)?;
    let state = ExactGibbs::new(&spec, params, &fields).map_err(value_err)?;
    Ok(state.site_means().to_vec())
}

/// Run the default remainder suite; return successful reports as JSON text.
#[pyfunction]
fn ibp_suite(py: Python<'_>) -> PyResult<String> {
    let results = py.detach(|| core_ibp_suite(&SuiteConfig::default()));
    let mut reports = Vec::new();
    for (name, r) in results {
        reports.push(r.map_err(|e| PyRuntimeError::new_err(format!("{name}: {e}")))?);
    }
    serde_json::to_string(&reports).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn rfim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(validate_plan, m)?)?;
    m.add_function(wrap_pyfunction!(bundled_plan, m)?)?;
    m.add_function(wrap_pyfunction!(run_plan, m)?)?;
    m.add_function(wrap_pyfunction!(log_partition, m)?)?;
    m.add_function(wrap_pyfunction!(site_means, m)?)?;
    m.add_function(wrap_pyfunction!(ibp_suite, m)?)?;
    Ok(())
}
