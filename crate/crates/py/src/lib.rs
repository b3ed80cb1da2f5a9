//! Python bindings: the correction graph, the surrogate with its Shapley
//! attributions, the budget-theory checks, the bootstrap estimator and the
//! configured run drivers.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use ::algograph::config::{Overrides, RunConfig, TheoryConfig};
use ::algograph::correction::{apply_correction, parse_corrections, CorrectionStatus};
use ::algograph::graph::{CodeGraph, CorrectionId};
use ::algograph::runner;
use ::algograph::search::{RunTrace, Variant};
use ::algograph::surrogate::{self, ForestConfig, ShapMode};
use ::algograph::theory::{self, bootstrap_restarts};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Converts a JSON value into plain Python objects.
fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn serialize<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(value).map_err(runtime_err)?)
}

/// A program and the corrections applied to it, stored as a DAG of line
/// blocks whose source-to-sink paths are the candidate programs.
#[pyclass(name = "CodeGraph", module = "algograph")]
struct PyCodeGraph {
    graph: CodeGraph,
    next_id: u32,
}

#[pymethods]
impl PyCodeGraph {
    #[new]
    fn new(program: &str) -> PyResult<Self> {
        Ok(Self {
            graph: CodeGraph::new(program).map_err(value_err)?,
            next_id: 1,
        })
    }

    /// Applies every correction in a JSON payload against the path that
    /// uses exactly `reference` (the original program by default). Returns
    /// one dict per correction with its id and status.
    #[pyo3(signature = (payload, reference=None))]
    fn apply<'py>(
        &mut self,
        py: Python<'py>,
        payload: &str,
        reference: Option<Vec<u32>>,
    ) -> PyResult<Bound<'py, PyList>> {
        let reference = self.find_path(reference.unwrap_or_default())?;
        let corrections = parse_corrections(payload, self.next_id).map_err(value_err)?;
        self.next_id += corrections.len() as u32;
        let out = PyList::empty(py);
        for mut c in corrections {
            if matches!(c.status, CorrectionStatus::Pending) {
                let reference = self.graph.refresh(&reference);
                let _ = apply_correction(&mut self.graph, &mut c, &reference);
            }
            let entry = PyDict::new(py);
            entry.set_item("id", c.id.0)?;
            entry.set_item("description", &c.description)?;
            match &c.status {
                CorrectionStatus::Rejected(why) => {
                    entry.set_item("status", "rejected")?;
                    entry.set_item("reason", why)?;
                }
                CorrectionStatus::Applied => entry.set_item("status", "applied")?,
                CorrectionStatus::Pending => entry.set_item("status", "pending")?,
            }
            out.append(entry)?;
        }
        Ok(out)
    }

    fn count_paths(&self) -> u128 {
        self.graph.count_paths()
    }

    /// Up to `limit` candidate programs as (correction ids, text) pairs.
    #[pyo3(signature = (limit=1024))]
    fn paths(&self, limit: usize) -> PyResult<Vec<(Vec<u32>, String)>> {
        let paths = self.graph.enumerate_paths(None, limit.max(1)).map_err(value_err)?;
        Ok(paths
            .iter()
            .map(|p| {
                let ids = self.graph.corrections_on(p).into_iter().filter(|c| !c.is_root()).map(|c| c.0).collect();
                (ids, self.graph.render(p))
            })
            .collect())
    }

    /// The program using exactly the given corrections.
    fn render(&self, corrections: Vec<u32>) -> PyResult<String> {
        Ok(self.graph.render(&self.find_path(corrections)?))
    }

    fn to_dot(&self) -> String {
        self.graph.to_dot()
    }

    fn snapshot<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        serialize(py, &self.graph.snapshot())
    }

    fn __repr__(&self) -> String {
        format!(
            "CodeGraph(nodes={}, edges={}, paths={})",
            self.graph.node_count(),
            self.graph.edge_count(),
            self.graph.count_paths()
        )
    }
}

impl PyCodeGraph {
    fn find_path(&self, corrections: Vec<u32>) -> PyResult<::algograph::graph::Path> {
        let wanted: std::collections::BTreeSet<CorrectionId> = corrections.into_iter().map(CorrectionId).collect();
        let paths = self.graph.enumerate_paths(None, 1 << 20).map_err(value_err)?;
        paths
            .into_iter()
            .find(|p| {
                let used: std::collections::BTreeSet<CorrectionId> =
                    self.graph.corrections_on(p).into_iter().filter(|c| !c.is_root()).collect();
                used == wanted
            })
            .ok_or_else(|| PyValueError::new_err(format!("no path uses exactly {wanted:?}")))
    }
}

/// Random-forest regressor with exact and sampled Shapley attributions.
#[pyclass(name = "RandomForest", module = "algograph")]
struct PyRandomForest {
    model: surrogate::RandomForest,
}

#[pymethods]
impl PyRandomForest {
    #[new]
    #[pyo3(signature = (rows, y, n_trees=100, seed=0, max_depth=None))]
    fn new(rows: Vec<Vec<f64>>, y: Vec<f64>, n_trees: usize, seed: u64, max_depth: Option<usize>) -> PyResult<Self> {
        let config = ForestConfig {
            n_trees,
            max_depth,
            ..ForestConfig::default()
        };
        Ok(Self {
            model: surrogate::RandomForest::fit(&rows, &y, &config, seed).map_err(value_err)?,
        })
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.model.feature_count {
            return Err(value_err(format!("expected {} features, got {}", self.model.feature_count, x.len())));
        }
        Ok(self.model.predict(&x))
    }

    #[getter]
    fn baseline(&self) -> f64 {
        self.model.baseline
    }

    /// Exact attributions by default; pass `permutations` for the sampled
    /// estimate.
    #[pyo3(signature = (x, permutations=None, seed=0))]
    fn shapley(&self, x: Vec<f64>, permutations: Option<usize>, seed: u64) -> PyResult<Vec<f64>> {
        let mode = match permutations {
            None => ShapMode::Exact,
            Some(permutations) => ShapMode::Sampled { permutations, seed },
        };
        surrogate::shapley(&self.model, &x, mode).map_err(value_err)
    }

    /// Per-feature credit: mean attribution over rows having the feature
    /// minus over rows lacking it. `None` when either side is empty.
    fn credit(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<Option<f64>>> {
        let names: Vec<(CorrectionId, String)> = (0..self.model.feature_count)
            .map(|i| (CorrectionId(i as u32 + 1), format!("f{i}")))
            .collect();
        let report = surrogate::credit_report(&self.model, &rows, &names, ShapMode::Exact).map_err(value_err)?;
        Ok(report.entries.iter().map(|e| e.delta).collect())
    }
}

/// Runs every applicable check on a profile given as TOML text. Returns one
/// dict per check with its name, verdict and full report text.
#[pyfunction]
fn check_profile<'py>(py: Python<'py>, toml_text: &str) -> PyResult<Bound<'py, PyList>> {
    let config = TheoryConfig::from_toml(toml_text).map_err(value_err)?;
    let out = PyList::empty(py);
    for r in runner::theory_checks(&config) {
        let d = PyDict::new(py);
        d.set_item("name", &r.name)?;
        d.set_item("verdict", r.verdict.to_string())?;
        d.set_item("b_bar", r.b_bar)?;
        d.set_item("report", r.to_string())?;
        out.append(d)?;
    }
    Ok(out)
}

/// Maximizers of Z_B(ω) over [c0, B] for a profile given as TOML text.
#[pyfunction]
#[pyo3(signature = (toml_text, budget, points=2001))]
fn omega_star(toml_text: &str, budget: f64, points: usize) -> PyResult<Vec<f64>> {
    let config = TheoryConfig::from_toml(toml_text).map_err(value_err)?;
    if !(budget.is_finite() && budget >= config.profile.c0) {
        return Err(value_err(format!("budget must be at least c0 = {}", config.profile.c0)));
    }
    Ok(theory::omega_star(&config.profile, budget, points).omegas)
}

/// Expected best fitness under a budget with restarts every `n_cap`
/// iterations. `bank` holds (initial fitness, initial cost, [(cost,
/// incumbent fitness), ...]) per recorded run. Returns (mean, std error).
#[pyfunction]
#[pyo3(signature = (bank, budget, n_cap, trajectories=100_000, seed=0))]
fn bootstrap(
    bank: Vec<(f64, u64, Vec<(u64, f64)>)>,
    budget: f64,
    n_cap: usize,
    trajectories: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let traces: Vec<RunTrace> = bank
        .into_iter()
        .map(|(fitness, cost, steps)| RunTrace {
            initial_fitness: fitness,
            initial_cost: cost,
            iterations: steps
                .into_iter()
                .enumerate()
                .map(|(i, (c, f))| ::algograph::search::IterationTrace {
                    iteration: i + 1,
                    proposed: 0,
                    applied: 0,
                    rejected: 0,
                    evaluations: 0,
                    retrains: 0,
                    new_paths: 0,
                    incumbent_fitness: f,
                    cost: c,
                    cumulative_cost: 0,
                    reference: String::new(),
                })
                .collect(),
        })
        .collect();
    let e = bootstrap_restarts(&traces, budget, n_cap, trajectories, seed).map_err(value_err)?;
    Ok((e.mean, e.std_error))
}

/// Executes one configured run into `out` and returns its summary.
#[pyfunction]
#[pyo3(signature = (config, out, seed=None, budget=None, iterations=None, variant=None))]
fn run<'py>(
    py: Python<'py>,
    config: PathBuf,
    out: PathBuf,
    seed: Option<u64>,
    budget: Option<u64>,
    iterations: Option<usize>,
    variant: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = RunConfig::load(&config).map_err(value_err)?;
    let variant = variant.map(str::parse::<Variant>).transpose().map_err(value_err)?;
    cfg.apply(&Overrides {
        seed,
        budget,
        iterations,
        variant,
    });
    cfg.validate().map_err(value_err)?;
    let summary = py.detach(|| runner::run_to_dir(&cfg, &out)).map_err(|e| match e.exit_code() {
        2 => value_err(e),
        _ => runtime_err(e),
    })?;
    serialize(py, &summary)
}

/// Executes `runs` runs with derived seeds and returns the bank manifest.
#[pyfunction]
#[pyo3(signature = (config, out, runs, parallelism=1))]
fn batch<'py>(py: Python<'py>, config: PathBuf, out: PathBuf, runs: usize, parallelism: usize) -> PyResult<Bound<'py, PyAny>> {
    let cfg = RunConfig::load(&config).map_err(value_err)?;
    let manifest = py
        .detach(|| runner::batch(&cfg, runs, parallelism, &out))
        .map_err(|e| match e.exit_code() {
            2 => value_err(e),
            _ => runtime_err(e),
        })?;
    serialize(py, &manifest)
}

#[pymodule]
fn algograph(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCodeGraph>()?;
    m.add_class::<PyRandomForest>()?;
    m.add_function(wrap_pyfunction!(check_profile, m)?)?;
    m.add_function(wrap_pyfunction!(omega_star, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(batch, m)?)?;
    Ok(())
}
