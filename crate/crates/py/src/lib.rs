use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ultho_core::bandit::{self, HpCluster, SchedulerConfig};
use ultho_core::harness::{self, ExperimentConfig};
use ultho_core::{relay, service, testbed};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn harness_err(e: harness::HarnessError) -> PyErr {
    if e.is_config_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "ultho")]
struct Decision {
    cluster: String,
    hp: String,
    value: f64,
    episode: u64,
}

#[pymethods]
impl Decision {
    fn __repr__(&self) -> String {
        format!(
            "Decision(cluster={:?}, hp={:?}, value={}, episode={})",
            self.cluster, self.hp, self.value, self.episode
        )
    }
}

impl From<bandit::Decision> for Decision {
    fn from(d: bandit::Decision) -> Self {
        Decision {
            cluster: d.cluster_name,
            hp: d.hp_name,
            value: d.hp_value,
            episode: d.episode,
        }
    }
}

/// Two-level UCB scheduler over named clusters of hyperparameter values.
///
/// `clusters` is a list of `(name, [values...])` pairs.
#[pyclass(module = "ultho")]
struct Scheduler {
    inner: bandit::Scheduler,
}

#[pymethods]
impl Scheduler {
    #[new]
    #[pyo3(signature = (clusters, c = 1.0, window = 10))]
    fn new(clusters: Vec<(String, Vec<f64>)>, c: f64, window: usize) -> PyResult<Self> {
        let clusters = clusters
            .into_iter()
            .map(|(name, values)| HpCluster::from_values(name, &values))
            .collect();
        let inner = bandit::Scheduler::new(clusters, SchedulerConfig::new(c, window)).map_err(value_err)?;
        Ok(Scheduler { inner })
    }

    #[getter]
    fn episode(&self) -> u64 {
        self.inner.episode()
    }

    fn select(&mut self) -> PyResult<Decision> {
        self.inner.select().map(Decision::from).map_err(value_err)
    }

    fn record(&mut self, v_bar: f64) -> PyResult<()> {
        self.inner.record(v_bar).map_err(value_err)
    }

    fn cluster_counts(&self) -> Vec<(String, u64)> {
        self.inner.cluster_counts()
    }

    /// Snapshot as a JSON string.
    fn snapshot(&self) -> String {
        self.inner.snapshot().to_json()
    }
}

/// In-process ask/tell protocol endpoint: one JSON request line in, one response line out.
#[pyclass(module = "ultho")]
struct Service {
    inner: service::Service,
}

#[pymethods]
impl Service {
    #[new]
    fn new() -> Self {
        Service {
            inner: service::Service::new(),
        }
    }

    fn handle_line(&mut self, line: &str) -> String {
        self.inner.handle_line(line)
    }
}

#[pyfunction]
fn identify_coi_noi(counts: Vec<(String, u64)>) -> PyResult<(String, String)> {
    relay::identify_coi_noi(&counts).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (rewards, values, dones, bootstrap, gamma = 0.99, lam = 0.95))]
fn gae(
    rewards: Vec<f64>,
    values: Vec<f64>,
    dones: Vec<bool>,
    bootstrap: f64,
    gamma: f64,
    lam: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    testbed::gae(&rewards, &values, &dones, bootstrap, gamma, lam).map_err(value_err)
}

/// Runs an experiment from a JSON config; returns the run report as JSON.
#[pyfunction]
#[pyo3(signature = (config_json, out_dir = None))]
fn run_experiment(py: Python<'_>, config_json: &str, out_dir: Option<PathBuf>) -> PyResult<String> {
    let mut cfg = ExperimentConfig::from_json(config_json).map_err(harness_err)?;
    if out_dir.is_some() {
        cfg.output_dir = out_dir;
    }
    let report = py.detach(|| harness::run_experiment(&cfg)).map_err(harness_err)?;
    serde_json::to_string(&report).map_err(value_err)
}

/// Replays a decision log; returns the verdict as JSON.
#[pyfunction]
fn replay(log: PathBuf) -> PyResult<String> {
    let verdict = harness::replay(&log).map_err(harness_err)?;
    serde_json::to_string(&verdict).map_err(value_err)
}

#[pymodule]
fn ultho(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Decision>()?;
    m.add_class::<Scheduler>()?;
    m.add_class::<Service>()?;
    m.add_function(wrap_pyfunction!(identify_coi_noi, m)?)?;
    m.add_function(wrap_pyfunction!(gae, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    Ok(())
}
