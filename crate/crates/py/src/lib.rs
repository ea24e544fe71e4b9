//! Python bindings: benchmark runs, predictor scoring and a few building
//! blocks (planner cost, NMSE) for scripting and cross-checking.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use crowdnav::bench::{eval_predictor as eval, run_benchmark, BenchError, BenchmarkConfig, ControllerSpec, DataSource, PredictorSpec};
use crowdnav::dataset::CrowdConfig;
use crowdnav::planner::{DStarLite, PathStatus};
use crowdnav::prediction::nmse as nmse_score;
use crowdnav::{CellIndex, GridSpec, PixelPoint, SceneSpec};

fn bench_err(e: BenchError) -> PyErr {
    if e.is_data_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn source(store: Option<PathBuf>, crowd_seed: u64) -> DataSource {
    match store {
        Some(path) => DataSource::Store { path, scene: SceneSpec::default() },
        None => DataSource::Synth(CrowdConfig { seed: crowd_seed, ..CrowdConfig::default() }),
    }
}

/// Runs one controller over a seeded episode list and returns
/// `{"metadata": {...}, "rows": [{...}]}`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (controller, episodes, seed, store=None, crowd_seed=0, workers=None, out=None))]
fn simulate<'py>(
    py: Python<'py>,
    controller: &str,
    episodes: usize,
    seed: u64,
    store: Option<PathBuf>,
    crowd_seed: u64,
    workers: Option<usize>,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let spec: ControllerSpec = controller.parse().map_err(bench_err)?;
    let mut cfg = BenchmarkConfig::new(source(store, crowd_seed), spec, episodes, seed);
    cfg.workers = workers;
    cfg.out = out;
    let run = py.detach(|| run_benchmark(&cfg)).map_err(bench_err)?;
    let result = PyDict::new(py);
    result.set_item("metadata", run.table.metadata.clone())?;
    let rows = PyList::empty(py);
    for r in &run.table.rows {
        let d = PyDict::new(py);
        d.set_item("controller", &r.controller)?;
        d.set_item("episodes", r.episodes)?;
        d.set_item("reached", r.reached)?;
        d.set_item("failures", r.failures)?;
        d.set_item("mean_delay_pct", r.mean_delay)?;
        d.set_item("SR", r.sr)?;
        d.set_item("SP", r.sp)?;
        d.set_item("MRP", r.mrp)?;
        d.set_item("stall_ticks", r.stall_ticks)?;
        rows.append(d)?;
    }
    result.set_item("rows", rows)?;
    Ok(result)
}

/// NMSE per split for a predictor spec (`persistence`, `oracle`, `forest`,
/// `forest:<path>`, `external:<path>`).
#[pyfunction]
#[pyo3(signature = (predictor, split_seed, store=None, crowd_seed=0))]
fn eval_predictor<'py>(
    py: Python<'py>,
    predictor: &str,
    split_seed: u64,
    store: Option<PathBuf>,
    crowd_seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let spec: PredictorSpec = predictor.parse().map_err(bench_err)?;
    let data = source(store, crowd_seed).load().map_err(bench_err)?;
    let report = py.detach(|| eval(&spec, &data, split_seed)).map_err(bench_err)?;
    let d = PyDict::new(py);
    d.set_item("predictor", report.predictor)?;
    d.set_item("train", report.train)?;
    d.set_item("validation", report.validation)?;
    d.set_item("test", report.test)?;
    d.set_item("windows", report.windows.to_vec())?;
    Ok(d)
}

/// Shortest 8-connected move count from `start` to `goal`, or `None`.
#[pyfunction]
fn shortest_path_cost(cols: u32, rows: u32, blocked: Vec<(u32, u32)>, start: (u32, u32), goal: (u32, u32)) -> PyResult<Option<u64>> {
    let scene = SceneSpec::new(f64::from(cols), f64::from(rows), 1.0).map_err(value_err)?;
    let grid = GridSpec::new(&scene, cols, rows).map_err(value_err)?;
    let cell = |(c, r): (u32, u32)| CellIndex::new(c, r);
    let mut planner =
        DStarLite::new(grid, cell(start), cell(goal), blocked.into_iter().map(cell)).map_err(value_err)?;
    Ok(match planner.compute_shortest_path() {
        PathStatus::PathExists => planner.path_cost(),
        PathStatus::NoPath => None,
    })
}

/// Normalized mean squared error of paired points in a `width x height` scene.
#[pyfunction]
fn nmse(predictions: Vec<(f64, f64)>, truths: Vec<(f64, f64)>, width: f64, height: f64) -> PyResult<f64> {
    let scene = SceneSpec::new(width, height, 1.0).map_err(value_err)?;
    let pts = |v: Vec<(f64, f64)>| v.into_iter().map(|(x, y)| PixelPoint::new(x, y)).collect::<Vec<_>>();
    nmse_score(&pts(predictions), &pts(truths), &scene).map_err(value_err)
}

#[pymodule]
fn crowdnav_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(eval_predictor, m)?)?;
    m.add_function(wrap_pyfunction!(shortest_path_cost, m)?)?;
    m.add_function(wrap_pyfunction!(nmse, m)?)?;
    Ok(())
}
