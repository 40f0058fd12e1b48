//! Python bindings: dataflow parsing and validation, equivalence queries, a
//! reuse session, and workload/trace generation and replay.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use streamreuse_core::equivalence::{maximal_ancestor_intersection, Matcher};
use streamreuse_core::harness::{
    generate_trace, generate_workload, pair, replay as replay_trace, Mode, ReplayConfig, ReuseHistogram,
    Trace, TraceSpec, Workload, WorkloadSpec,
};
use streamreuse_core::manager::ManagerError;
use streamreuse_core::model::{parse_dataflow, serialize_dataflow, validate};
use streamreuse_core::session::{Session as CoreSession, SessionError};
use streamreuse_core::{Dataflow as CoreDataflow, TaskId};

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_json<T: serde::de::DeserializeOwned>(text: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn session_err(e: SessionError) -> PyErr {
    match &e {
        SessionError::Manager(ManagerError::UnknownName(_)) => PyKeyError::new_err(e.to_string()),
        SessionError::Manager(ManagerError::DuplicateName(_) | ManagerError::InvalidDataflow { .. }) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A dataflow DAG of concrete tasks.
#[pyclass(module = "streamreuse", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Dataflow(CoreDataflow);

#[pymethods]
impl Dataflow {
    /// Parses a JSON document and applies every structural rule.
    #[staticmethod]
    fn from_json(document: &str) -> PyResult<Self> {
        parse_dataflow(document)
            .map(Dataflow)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> String {
        serialize_dataflow(&self.0)
    }

    #[getter]
    fn name(&self) -> &str {
        self.0.name()
    }

    /// `(id, type, config)` triples in id order.
    #[getter]
    fn tasks(&self) -> Vec<(String, String, String)> {
        self.0
            .tasks()
            .map(|(id, t)| (id.to_string(), t.kind.clone(), t.config.clone()))
            .collect()
    }

    #[getter]
    fn streams(&self) -> Vec<(String, String)> {
        self.0
            .streams()
            .iter()
            .map(|s| (s.from.to_string(), s.to.to_string()))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataflow({:?}, {} tasks, {} streams)",
            self.0.name(),
            self.0.len(),
            self.0.streams().len()
        )
    }
}

/// Rule violations of a JSON dataflow document; empty when it is valid.
#[pyfunction]
fn validate_document(document: &str) -> PyResult<Vec<String>> {
    let doc: streamreuse_core::model::DataflowDocument = from_json(document)?;
    let d = CoreDataflow::try_from(doc).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(validate(&d).violations.iter().map(ToString::to_string).collect())
}

/// Whether task `a` of `left` and task `b` of `right` are equivalent.
#[pyfunction]
fn equivalent(left: &Dataflow, a: &str, right: &Dataflow, b: &str) -> PyResult<bool> {
    let (a, b) = (TaskId::new(a), TaskId::new(b));
    if !left.0.contains(&a) || !right.0.contains(&b) {
        return Err(PyKeyError::new_err("unknown task id"));
    }
    Ok(Matcher::between(&left.0, &right.0).equivalent(&a, &b))
}

/// Maps each task of `left` to its equivalent in `right`.
#[pyfunction]
fn shared_tasks(left: &Dataflow, right: &Dataflow) -> BTreeMap<String, String> {
    Matcher::between(&left.0, &right.0)
        .match_all()
        .into_iter()
        .map(|(l, r)| (l.to_string(), r.to_string()))
        .collect()
}

/// Roots of the maximal shared ancestor graphs of `left`.
#[pyfunction]
fn reuse_points(left: &Dataflow, right: &Dataflow) -> Vec<String> {
    maximal_ancestor_intersection(&left.0, &right.0)
        .into_iter()
        .map(|g| g.root.to_string())
        .collect()
}

/// A reuse manager together with the deployment that enacts it.
#[pyclass(module = "streamreuse")]
#[derive(Default)]
struct Session(CoreSession);

#[pymethods]
impl Session {
    #[new]
    fn new() -> Self {
        Session::default()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        from_json(text).map(Session)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("serializable")
    }

    /// Submits a dataflow and returns the merge plan as a dict.
    fn submit<'py>(&mut self, py: Python<'py>, dataflow: &Dataflow) -> PyResult<Bound<'py, PyAny>> {
        let (plan, fragment) = self.0.submit(dataflow.0.clone()).map_err(session_err)?;
        let out = to_py(py, &plan)?;
        out.set_item("fragment", fragment)?;
        Ok(out)
    }

    /// Removes a submitted dataflow and returns the unmerge plan as a dict.
    fn remove<'py>(&mut self, py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
        let plan = self.0.remove(name).map_err(session_err)?;
        to_py(py, &plan)
    }

    #[getter]
    fn submitted(&self) -> Vec<String> {
        self.0.manager.submitted().keys().cloned().collect()
    }

    /// Running DAG name to the submitted names it serves.
    #[getter]
    fn running(&self) -> BTreeMap<String, Vec<String>> {
        self.0
            .manager
            .decomposition()
            .iter()
            .map(|(r, served)| (r.clone(), served.iter().cloned().collect()))
            .collect()
    }

    #[getter]
    fn running_task_count(&self) -> usize {
        self.0.manager.running_task_count()
    }

    #[getter]
    fn paused_task_count(&self) -> usize {
        self.0.deployment.paused().len()
    }

    #[getter]
    fn cost(&self) -> f64 {
        self.0.deployment.cost()
    }

    /// Violated manager invariants; empty when all hold.
    fn check_constraints(&self) -> Vec<String> {
        self.0
            .manager
            .check_constraints()
            .violations
            .iter()
            .map(ToString::to_string)
            .collect()
    }
}

/// Generates a workload as JSON from a preset or a JSON spec.
#[pyfunction]
#[pyo3(signature = (preset = "opmw-like", seed = None, spec = None))]
fn workload(preset: &str, seed: Option<u64>, spec: Option<&str>) -> PyResult<String> {
    let mut spec = match (spec, preset) {
        (Some(s), _) => from_json::<WorkloadSpec>(s)?,
        (None, "opmw-like") => WorkloadSpec::opmw_like(),
        (None, "small") => WorkloadSpec::small(0),
        (None, other) => return Err(PyValueError::new_err(format!("unknown preset {other}"))),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let w = generate_workload(&spec).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(serde_json::to_string(&w).expect("serializable"))
}

/// Generates a SEQ or RW trace as JSON over a JSON workload.
#[pyfunction]
#[pyo3(signature = (workload, kind = "SEQ", seed = 0, rw_steps = 100, initial_fill = 0.57))]
fn trace(workload: &str, kind: &str, seed: u64, rw_steps: usize, initial_fill: f64) -> PyResult<String> {
    let w: Workload = from_json(workload)?;
    let spec = match kind.to_ascii_uppercase().as_str() {
        "SEQ" => TraceSpec::seq(seed),
        "RW" => TraceSpec::rw(seed, rw_steps, initial_fill),
        other => return Err(PyValueError::new_err(format!("unknown trace kind {other}"))),
    };
    let t = generate_trace(&w, &spec).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(serde_json::to_string(&t).expect("serializable"))
}

/// Replays a trace in both modes. Returns per-step samples and the reuse
/// histogram as a dict.
#[pyfunction]
#[pyo3(signature = (workload, trace, oracle_every = 0))]
fn replay<'py>(py: Python<'py>, workload: &str, trace: &str, oracle_every: usize) -> PyResult<Bound<'py, PyAny>> {
    let w: Workload = from_json(workload)?;
    let t: Trace = from_json(trace)?;
    t.check().map_err(|e| PyValueError::new_err(e.to_string()))?;
    let config = ReplayConfig {
        oracle_every,
        ..ReplayConfig::default()
    };
    let run = |mode| replay_trace(&t, &w, mode, &config).map_err(|e| PyRuntimeError::new_err(e.to_string()));
    let (d, r) = (run(Mode::Default)?, run(Mode::Reuse)?);
    #[derive(Serialize)]
    struct Out {
        samples: Vec<streamreuse_core::harness::MetricsSample>,
        histogram: BTreeMap<usize, f64>,
    }
    to_py(
        py,
        &Out {
            samples: pair(&d, &r),
            histogram: ReuseHistogram::from_usage(&r.usage).reported().collect(),
        },
    )
}

#[pymodule]
fn streamreuse(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataflow>()?;
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(validate_document, m)?)?;
    m.add_function(wrap_pyfunction!(equivalent, m)?)?;
    m.add_function(wrap_pyfunction!(shared_tasks, m)?)?;
    m.add_function(wrap_pyfunction!(reuse_points, m)?)?;
    m.add_function(wrap_pyfunction!(workload, m)?)?;
    m.add_function(wrap_pyfunction!(trace, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    Ok(())
}
