//! Python bindings: protocols, validation, state traces, trials and the
//! Bayes-factor helpers. Errors surface as `ValueError`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use wignersim::cli::report_json;
use wignersim::engine::{run_state_trace, Dynamics, DynamicsModel, EventKind, Runner};
use wignersim::protocol::{self, BUILTIN_NAMES};
use wignersim::protofile;
use wignersim::statevec::{self, RegisterLayout};
use wignersim::trials::{self, RngStream};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_model(model: &str, collapse_at: Option<Vec<usize>>) -> PyResult<DynamicsModel> {
    let dynamics: Dynamics = model.parse().map_err(value_error)?;
    Ok(match (dynamics, collapse_at) {
        (Dynamics::Collapse, Some(steps)) => DynamicsModel::collapse_at(steps),
        (Dynamics::Collapse, None) => DynamicsModel::collapse(),
        (Dynamics::Unitary, None) => DynamicsModel::unitary(),
        (Dynamics::Unitary, Some(_)) => {
            return Err(PyValueError::new_err("collapse_at only applies to the collapse model"))
        }
    })
}

/// An experiment description: registers, initial basis state and steps.
#[pyclass(name = "Protocol", module = "wignersim", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyProtocol {
    inner: protocol::Protocol,
}

#[pymethods]
impl PyProtocol {
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        protocol::builtin(name)
            .map(|inner| PyProtocol { inner })
            .map_err(value_error)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        protofile::parse(text)
            .map(|inner| PyProtocol { inner })
            .map_err(value_error)
    }

    fn serialize(&self) -> String {
        protofile::serialize(&self.inner)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn registers(&self) -> Vec<(String, usize)> {
        self.inner.registers.clone()
    }

    #[getter]
    fn steps(&self) -> Vec<String> {
        protofile::serialize(&self.inner)
            .lines()
            .skip(3 + self.inner.registers.len())
            .map(str::to_string)
            .collect()
    }

    fn validate(&self) -> PyResult<PyValidated> {
        protocol::validate(&self.inner)
            .map(|inner| PyValidated { inner })
            .map_err(value_error)
    }

    /// Same protocol with every `reverse` range replaced by explicit inverse steps.
    fn expand_reverses(&self) -> PyResult<Self> {
        self.inner
            .expand_reverses()
            .map(|inner| PyProtocol { inner })
            .map_err(value_error)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Protocol({:?}, {} steps)", self.inner.name, self.inner.steps.len())
    }
}

/// A protocol that passed validation and can be executed.
#[pyclass(name = "ValidatedProtocol", module = "wignersim", frozen)]
struct PyValidated {
    inner: protocol::ValidatedProtocol,
}

#[pymethods]
impl PyValidated {
    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn protocol(&self) -> PyProtocol {
        PyProtocol {
            inner: self.inner.protocol().clone(),
        }
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.layout().total_dim()
    }

    /// Unitary-model states: index 0 is the initial state, index k the state after step k.
    fn state_trace(&self) -> PyResult<Vec<PyState>> {
        let trace = run_state_trace(&self.inner).map_err(value_error)?;
        Ok(trace.into_iter().map(|inner| PyState { inner }).collect())
    }

    /// One trial with the stream of `(seed, trial)`.
    #[pyo3(signature = (model = "unitary", seed = 0, trial = 0, collapse_at = None))]
    fn run<'py>(
        &self,
        py: Python<'py>,
        model: &str,
        seed: u64,
        trial: u64,
        collapse_at: Option<Vec<usize>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let runner = Runner::new(&self.inner, parse_model(model, collapse_at)?).map_err(value_error)?;
        let mut rng = RngStream::new(seed, trial);
        let res = runner.run(Some(&mut rng)).map_err(value_error)?;
        let mut collapses = Vec::new();
        let mut readout = None;
        for e in &res.log.events {
            let item: BTreeMap<&str, Py<PyAny>> = BTreeMap::from([
                ("step", e.step.into_pyobject(py)?.into_any().unbind()),
                ("registers", e.registers.clone().into_pyobject(py)?.into_any().unbind()),
                ("values", e.values.clone().into_pyobject(py)?.into_any().unbind()),
                ("probability", e.probability.into_pyobject(py)?.into_any().unbind()),
            ]);
            match e.kind {
                EventKind::Collapse => collapses.push(item),
                EventKind::FinalMeasure => readout = Some(item),
            }
        }
        let out = PyDict::new(py);
        out.set_item("collapses", collapses)?;
        out.set_item("readout", readout)?;
        out.set_item("return_fidelity", res.log.return_fidelity)?;
        out.set_item("returned", res.log.returned)?;
        out.set_item("final_state", PyState { inner: res.final_state })?;
        Ok(out)
    }

    /// Runs `trials` trials and returns the report as a dict.
    #[pyo3(signature = (model = "unitary", trials = 1000, seed = 0, collapse_at = None))]
    fn run_trials<'py>(
        &self,
        py: Python<'py>,
        model: &str,
        trials: u64,
        seed: u64,
        collapse_at: Option<Vec<usize>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let model = parse_model(model, collapse_at)?;
        let report = py
            .detach(|| trials::run_trials(&self.inner, &model, trials, seed))
            .map_err(value_error)?;
        let out = PyDict::new(py);
        out.set_item("format_version", 1)?;
        out.set_item("protocol", &report.protocol)?;
        out.set_item("model", report.model.as_str())?;
        out.set_item("trials", report.trials)?;
        out.set_item("seed", report.seed)?;
        out.set_item("measured", &report.measured)?;
        let histogram = report
            .histogram
            .iter()
            .map(|(outcome, count)| {
                let bin = PyDict::new(py);
                bin.set_item("outcome", outcome)?;
                bin.set_item("count", count)?;
                Ok(bin)
            })
            .collect::<PyResult<Vec<_>>>()?;
        out.set_item("histogram", histogram)?;
        let expectations = report
            .expectations
            .iter()
            .map(|e| {
                let d = PyDict::new(py);
                d.set_item("step", e.step)?;
                d.set_item("target_prob", e.target_prob)?;
                d.set_item("observed_prob", e.observed_prob)?;
                d.set_item("tol", e.tol)?;
                d.set_item("pass", e.pass)?;
                Ok(d)
            })
            .collect::<PyResult<Vec<_>>>()?;
        out.set_item("expectations", expectations)?;
        out.set_item("returns", report.returns)?;
        out.set_item("return_rate", report.return_rate)?;
        out.set_item("bayes_factor", report.bayes_factor)?;
        out.set_item("wall_ms", report.wall_ms)?;
        out.set_item("json", report_json(&report))?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!(
            "ValidatedProtocol({:?}, dimension {})",
            self.inner.name(),
            self.inner.layout().total_dim()
        )
    }
}

/// A normalized pure state over named registers.
#[pyclass(name = "StateVector", module = "wignersim", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyState {
    inner: statevec::StateVector,
}

fn layout(registers: Vec<(String, usize)>) -> PyResult<RegisterLayout> {
    RegisterLayout::new(registers).map_err(value_error)
}

#[pymethods]
impl PyState {
    #[staticmethod]
    fn basis(registers: Vec<(String, usize)>, assignment: Vec<(String, usize)>) -> PyResult<Self> {
        statevec::StateVector::basis_state(&layout(registers)?, assignment)
            .map(|inner| PyState { inner })
            .map_err(value_error)
    }

    /// Builds a state from amplitudes; pass `normalize=True` to rescale.
    #[staticmethod]
    #[pyo3(signature = (registers, amplitudes, normalize = false))]
    fn from_amplitudes(registers: Vec<(String, usize)>, amplitudes: Vec<Complex64>, normalize: bool) -> PyResult<Self> {
        let layout = layout(registers)?;
        let state = if normalize {
            statevec::StateVector::normalized(&layout, amplitudes)
        } else {
            statevec::StateVector::from_amplitudes(&layout, amplitudes)
        };
        state.map(|inner| PyState { inner }).map_err(value_error)
    }

    #[getter]
    fn registers(&self) -> Vec<(String, usize)> {
        self.inner
            .layout()
            .registers()
            .iter()
            .map(|r| (r.name().to_string(), r.dim()))
            .collect()
    }

    #[getter]
    fn amplitudes(&self) -> Vec<Complex64> {
        self.inner.amplitudes().to_vec()
    }

    fn amplitude(&self, values: Vec<usize>) -> PyResult<Complex64> {
        self.inner.amplitude(&values).map_err(value_error)
    }

    fn norm_sqr(&self) -> f64 {
        self.inner.norm_sqr()
    }

    fn fidelity(&self, other: &PyState) -> PyResult<f64> {
        self.inner.fidelity(&other.inner).map_err(value_error)
    }

    fn reduced_purity(&self, part: Vec<String>) -> PyResult<f64> {
        self.inner.reduced_purity(&part).map_err(value_error)
    }

    fn marginal_probability(&self, assignment: Vec<(String, usize)>) -> PyResult<f64> {
        self.inner.marginal_probability(assignment).map_err(value_error)
    }

    fn marginal_distribution(&self, registers: Vec<String>) -> PyResult<Vec<f64>> {
        self.inner.marginal_distribution(&registers).map_err(value_error)
    }

    /// Measures `registers` with uniform `u`; returns (values, probability, post-state).
    fn measure(&self, registers: Vec<String>, u: f64) -> PyResult<(Vec<usize>, f64, PyState)> {
        let (outcome, post) = self.inner.measure(&registers, u).map_err(value_error)?;
        Ok((outcome.values, outcome.probability, PyState { inner: post }))
    }

    fn __len__(&self) -> usize {
        self.inner.amplitudes().len()
    }

    fn __repr__(&self) -> String {
        format!("StateVector(dimension {})", self.inner.amplitudes().len())
    }
}

/// Likelihood ratio of unitary (return probability 1) against collapse (1/2)
/// after `k` returns in `n` trials.
#[pyfunction]
fn bayes_factor(k: u64, n: u64) -> PyResult<f64> {
    trials::bayes_factor(k, n).map_err(value_error)
}

/// Smallest number of all-returned trials whose Bayes factor reaches `threshold`.
#[pyfunction]
fn trials_to_threshold(threshold: f64) -> PyResult<u32> {
    trials::trials_to_threshold(threshold).map_err(value_error)
}

#[pyfunction]
fn builtin_names() -> Vec<&'static str> {
    BUILTIN_NAMES.to_vec()
}

#[pymodule]
#[pyo3(name = "wignersim")]
fn wignersim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProtocol>()?;
    m.add_class::<PyValidated>()?;
    m.add_class::<PyState>()?;
    m.add_function(wrap_pyfunction!(bayes_factor, m)?)?;
    m.add_function(wrap_pyfunction!(trials_to_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(builtin_names, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
