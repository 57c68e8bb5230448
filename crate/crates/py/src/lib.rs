//! Python bindings. Documents cross the boundary as the same JSON text the
//! CLI and the service exchange, so results can be compared byte for byte.

use std::fmt::Display;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use medsched_core::edit::{apply_edits, EditOp};
use medsched_core::engine::SolveConfig;
use medsched_core::explain::ExplainConfig;
use medsched_core::io::{
    generate, parse_instance, parse_solution, write_explanation, write_instance, write_solution,
    GenParams, Instance, ProblemKind,
};
use medsched_core::pipeline::{greedy, verify_schedule, PipelineError, Prepared};

create_exception!(medsched, MedschedError, PyException, "Any failure reported by the scheduling core.");
create_exception!(medsched, UnsatError, MedschedError, "The instance has no solution.");

fn error(e: impl Display) -> PyErr {
    MedschedError::new_err(e.to_string())
}

fn pipeline_error(e: PipelineError) -> PyErr {
    match e {
        PipelineError::Unsat => UnsatError::new_err(e.to_string()),
        other => error(other),
    }
}

fn solve_config(time_limit: f64, node_limit: Option<u64>) -> PyResult<SolveConfig> {
    if !(time_limit.is_finite() && time_limit > 0.0) {
        return Err(error(format!("time_limit must be a positive number of seconds, got {time_limit}")));
    }
    Ok(SolveConfig::with_secs(time_limit).with_node_limit(node_limit))
}

fn explain_config(time_limit: f64) -> PyResult<ExplainConfig> {
    Ok(ExplainConfig {
        solve: solve_config(time_limit, None)?,
        ..ExplainConfig::default()
    })
}

/// A validated scheduling instance (CTS, ORS or POAC).
#[pyclass(name = "Instance", module = "medsched", frozen)]
pub struct PyInstance {
    inner: Instance,
}

/// Outcome of a solve: status, objective vector and the solution document.
#[pyclass(name = "SolveResult", module = "medsched", frozen, get_all)]
pub struct PySolveResult {
    pub status: String,
    pub objective: Option<Vec<u64>>,
    pub solution: Option<String>,
    pub nodes: u64,
}

#[pymethods]
impl PySolveResult {
    fn __repr__(&self) -> String {
        format!("SolveResult(status={:?}, objective={:?})", self.status, self.objective)
    }
}

#[pymethods]
impl PyInstance {
    /// Parses an instance document.
    #[new]
    pub fn new(document: &str) -> PyResult<Self> {
        Ok(PyInstance {
            inner: parse_instance(document).map_err(error)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (kind, seed, size, tightness, horizon = None, extensions = true))]
    pub fn generate(
        kind: &str,
        seed: u64,
        size: usize,
        tightness: f64,
        horizon: Option<u32>,
        extensions: bool,
    ) -> PyResult<Self> {
        let kind: ProblemKind = kind.parse().map_err(error)?;
        let params = GenParams {
            seed,
            size,
            tightness,
            horizon,
            extensions,
        };
        Ok(PyInstance {
            inner: generate(kind, &params).map_err(error)?,
        })
    }

    #[getter]
    pub fn kind(&self) -> &'static str {
        self.inner.kind().as_str()
    }

    pub fn to_json(&self) -> String {
        write_instance(&self.inner)
    }

    /// Exact lexicographic solve. An unsatisfiable instance is reported
    /// through `status`, not raised.
    #[pyo3(signature = (time_limit = 60.0, node_limit = None))]
    pub fn solve(&self, py: Python<'_>, time_limit: f64, node_limit: Option<u64>) -> PyResult<PySolveResult> {
        let config = solve_config(time_limit, node_limit)?;
        let instance = self.inner.clone();
        let report = py
            .detach(move || Prepared::new(&instance).and_then(|p| p.solve(&config)))
            .map_err(pipeline_error)?;
        Ok(PySolveResult {
            status: report.outcome.status.as_str().to_string(),
            objective: report.schedule.as_ref().map(|s| s.objective().0.clone()),
            solution: report.document().map(|d| write_solution(&d)),
            nodes: report.outcome.stats.nodes,
        })
    }

    /// Greedy reference: `(objective, virtual_resources)`, or `None` for
    /// kinds without a greedy baseline.
    pub fn greedy(&self) -> Option<(Vec<u64>, u32)> {
        greedy(&self.inner).map(|(s, v)| (s.objective().0.clone(), v))
    }

    /// Re-checks a solution document: `(violations, objective)`.
    pub fn verify(&self, solution: &str) -> PyResult<(Vec<String>, Vec<u64>)> {
        let doc = parse_solution(solution).map_err(error)?;
        let report = verify_schedule(&self.inner, &doc.schedule).map_err(pipeline_error)?;
        Ok((
            report.violations.iter().map(ToString::to_string).collect(),
            report.objective.0,
        ))
    }

    /// Minimal conflict of an unsatisfiable instance, as an explanation document.
    #[pyo3(signature = (time_limit = 60.0))]
    pub fn explain_unsat(&self, py: Python<'_>, time_limit: f64) -> PyResult<String> {
        let config = explain_config(time_limit)?;
        let instance = self.inner.clone();
        let (_, doc) = py
            .detach(move || Prepared::new(&instance)?.explain_unsat(&config))
            .map_err(pipeline_error)?;
        Ok(write_explanation(&doc))
    }

    /// Justification of `name=value` atoms of the optimal solution.
    #[pyo3(signature = (atoms, time_limit = 60.0))]
    pub fn explain_why(&self, py: Python<'_>, atoms: Vec<String>, time_limit: f64) -> PyResult<String> {
        let config = explain_config(time_limit)?;
        let instance = self.inner.clone();
        let (_, _, doc) = py
            .detach(move || Prepared::new(&instance)?.explain_why(&atoms, &config))
            .map_err(pipeline_error)?;
        Ok(write_explanation(&doc))
    }

    /// Why assignment `a` holds in the optimal solution rather than `b`.
    #[pyo3(signature = (a, b, time_limit = 60.0))]
    pub fn explain_contrast(&self, py: Python<'_>, a: String, b: String, time_limit: f64) -> PyResult<String> {
        let config = explain_config(time_limit)?;
        let instance = self.inner.clone();
        let (_, doc) = py
            .detach(move || Prepared::new(&instance)?.explain_contrast(&a, &b, &config))
            .map_err(pipeline_error)?;
        Ok(write_explanation(&doc))
    }

    /// Applies edit operations given as a JSON array or `{"ops": [...]}`
    /// and returns the edited instance.
    pub fn apply_edits(&self, ops: &str) -> PyResult<PyInstance> {
        let value: serde_json::Value = serde_json::from_str(ops).map_err(error)?;
        let list = match value {
            serde_json::Value::Object(mut map) => map.remove("ops").unwrap_or(serde_json::Value::Null),
            other => other,
        };
        let ops: Vec<EditOp> = serde_json::from_value(list).map_err(error)?;
        Ok(PyInstance {
            inner: apply_edits(&self.inner, &ops).map_err(error)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Instance(kind={:?})", self.kind())
    }
}

#[pymodule]
fn medsched(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PySolveResult>()?;
    m.add("MedschedError", m.py().get_type::<MedschedError>())?;
    m.add("UnsatError", m.py().get_type::<UnsatError>())?;
    Ok(())
}
