//! Python bindings: composition names, metrics, topologies, synthetic environments
//! and the amplification search.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use toolamp::amplifier::{self, library_to_jsonl, SearchConfig, ValidationEvaluator};
use toolamp::composition::{self, CompositionTree};
use toolamp::dataset::dataset_to_jsonl;
use toolamp::metrics::{self, Bitset, Smoothing, TaskKind, TokenSequence};
use toolamp::simenv::{gen_simenv, SimEnvSpec};
use toolamp::topology::{self, TopologyKind};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A parsed composition.
#[pyclass(name = "Tree", frozen)]
struct PyTree {
    inner: CompositionTree,
}

#[pymethods]
impl PyTree {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        composition::parse_name(name).map(|inner| PyTree { inner }).map_err(value_error)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name()
    }

    #[getter]
    fn leaves(&self) -> Vec<String> {
        self.inner.leaves().iter().filter_map(|l| l.leaf_id()).collect()
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth()
    }

    #[getter]
    fn layers(&self) -> u32 {
        self.inner.layers()
    }

    fn __str__(&self) -> String {
        self.inner.name()
    }

    fn __repr__(&self) -> String {
        format!("Tree({:?})", self.inner.name())
    }
}

/// Canonical form of a composition name.
#[pyfunction]
fn canonical_name(name: &str) -> PyResult<String> {
    composition::parse_name(name).map(|t| t.name()).map_err(value_error)
}

#[pyfunction]
fn levenshtein(a: &str, b: &str) -> usize {
    metrics::levenshtein(a, b)
}

#[pyfunction]
#[pyo3(signature = (candidate, reference, max_n = 4, smoothing = false))]
fn bleu(candidate: Vec<String>, reference: Vec<String>, max_n: usize, smoothing: bool) -> PyResult<f64> {
    if max_n == 0 {
        return Err(value_error("max_n must be at least 1"));
    }
    let smoothing = if smoothing { Smoothing::AddOne } else { Smoothing::None };
    Ok(metrics::bleu(
        &TokenSequence::from_tokens(&candidate),
        &TokenSequence::from_tokens(&reference),
        max_n,
        smoothing,
    ))
}

#[pyfunction]
fn tanimoto(a: Vec<usize>, b: Vec<usize>, width: usize) -> PyResult<f64> {
    if let Some(i) = a.iter().chain(&b).find(|&&i| i >= width) {
        return Err(value_error(format!("bit {i} outside width {width}")));
    }
    metrics::tanimoto(&Bitset::from_indices(width, a), &Bitset::from_indices(width, b)).map_err(value_error)
}

/// All metrics of a task for one prediction.
#[pyfunction]
fn score_instance(task: &str, prediction: &str, gold: &str) -> PyResult<BTreeMap<String, f64>> {
    let task: TaskKind = task.parse().map_err(value_error)?;
    Ok(metrics::score_instance(task, prediction, gold).into_iter().map(|(k, v)| (k.as_str().to_string(), v)).collect())
}

/// Directed messages of a baseline network as `(from, to)` labels.
#[pyfunction]
#[pyo3(signature = (kind, num, rounds = None, seed = 0))]
fn topology_edges(kind: &str, num: usize, rounds: Option<u32>, seed: u64) -> PyResult<Vec<(String, String)>> {
    let kind: TopologyKind = kind.parse().map_err(value_error)?;
    let spec =
        topology::build_topology(kind, num, rounds.unwrap_or(kind.default_rounds()), seed).map_err(value_error)?;
    Ok(spec.edges().into_iter().map(|(a, b)| (a.to_string(), b.to_string())).collect())
}

/// Generates a synthetic environment from its JSON spec; returns (dataset JSONL, tools JSON).
#[pyfunction]
fn generate_environment(spec_json: &str) -> PyResult<(String, String)> {
    let spec: SimEnvSpec = serde_json::from_str(spec_json).map_err(value_error)?;
    let env = gen_simenv(&spec).map_err(value_error)?;
    let tools = serde_json::to_string(&env.descriptors).map_err(value_error)?;
    Ok((dataset_to_jsonl(&env.dataset), tools))
}

/// Runs the two-stage search in a synthetic environment. Returns (best name, best
/// score, library JSONL).
#[pyfunction]
#[pyo3(signature = (spec_json, search_json = "{}"))]
fn amplify(py: Python<'_>, spec_json: &str, search_json: &str) -> PyResult<(String, f64, String)> {
    let spec: SimEnvSpec = serde_json::from_str(spec_json).map_err(value_error)?;
    let config: SearchConfig = serde_json::from_str(search_json).map_err(value_error)?;
    py.detach(|| {
        let env = gen_simenv(&spec).map_err(value_error)?;
        let registry = env.registry().map_err(value_error)?;
        let mut evaluator = ValidationEvaluator::new(registry, env.dataset.clone(), env.policy_factory(), &config);
        let result = amplifier::run(&config, &env.tool_ids(), &mut evaluator).map_err(value_error)?;
        Ok((result.best.name(), result.best.score, library_to_jsonl(&result.library)))
    })
}

#[pymodule]
pub fn pytoolamp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTree>()?;
    m.add_function(wrap_pyfunction!(canonical_name, m)?)?;
    m.add_function(wrap_pyfunction!(levenshtein, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    m.add_function(wrap_pyfunction!(tanimoto, m)?)?;
    m.add_function(wrap_pyfunction!(score_instance, m)?)?;
    m.add_function(wrap_pyfunction!(topology_edges, m)?)?;
    m.add_function(wrap_pyfunction!(generate_environment, m)?)?;
    m.add_function(wrap_pyfunction!(amplify, m)?)?;
    Ok(())
}
