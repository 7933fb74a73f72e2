//! Python bindings.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use twinsim::analytic::{expected_cost_c1, expected_cost_c2, expected_cost_c3_hamming, ExpectationForm};
use twinsim::config::Config;
use twinsim::experiment::simulate_cell;
use twinsim::mdp::{build_mdp, optimality_residual, solve_constrained, RviOptions};
use twinsim::policy::pptp_probability;
use twinsim::scenario::reference_scenario;
use twinsim::{
    CostFunctionSpec, Distance, Error, GeneratorMatrix, InitialCondition, Overlap, PhysicalSystem,
    PolicyKind, ScenarioSpec,
};

fn py_err(e: Error) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn parse_cost(label: &str, scenario: &ScenarioSpec) -> PyResult<CostFunctionSpec> {
    match label.split_once(':') {
        None if label == "c1" => Ok(CostFunctionSpec::C1),
        None if label == "c2" => CostFunctionSpec::c2(scenario.weights()).map_err(py_err),
        None if label == "c3" => Ok(CostFunctionSpec::c3(Distance::EuclideanPaper)),
        Some(("c3", d)) => Ok(CostFunctionSpec::c3(d.parse().map_err(py_err)?)),
        _ => Err(PyValueError::new_err(format!(
            "unknown cost `{label}` (expected c1, c2 or c3[:distance])"
        ))),
    }
}

fn parse_form(form: &str) -> PyResult<ExpectationForm> {
    match form {
        "sojourn" => Ok(ExpectationForm::Sojourn),
        "paper_diagonal" => Ok(ExpectationForm::PaperDiagonal),
        other => Err(PyValueError::new_err(format!(
            "unknown form `{other}` (expected sojourn|paper_diagonal)"
        ))),
    }
}

/// Validated CTMC generator.
#[pyclass(name = "Generator", frozen)]
struct PyGenerator {
    inner: GeneratorMatrix,
}

#[pymethods]
impl PyGenerator {
    #[new]
    fn new(q: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: GeneratorMatrix::new(&q).map_err(py_err)?,
        })
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    #[getter]
    fn exit_rates(&self) -> Vec<f64> {
        self.inner.exit_rates().to_vec()
    }

    fn stationary(&self) -> PyResult<Vec<f64>> {
        let pi = self.inner.stationary_distribution().map_err(py_err)?;
        Ok(pi.probabilities().to_vec())
    }

    /// `e^{Q·tau}` as a list of rows.
    fn transition_matrix(&self, tau: f64) -> PyResult<Vec<Vec<f64>>> {
        let p = self.inner.transition_matrix(tau).map_err(py_err)?;
        Ok((0..p.nrows())
            .map(|i| (0..p.ncols()).map(|j| p[(i, j)]).collect())
            .collect())
    }

    fn __repr__(&self) -> String {
        format!("Generator({:?})", self.inner.to_rows())
    }
}

/// A set of physical systems with a sync delay and overlap semantics.
#[pyclass(name = "Scenario", frozen)]
struct PyScenario {
    inner: ScenarioSpec,
}

#[pymethods]
impl PyScenario {
    /// `systems` is a list of `(name, Q, weight)` tuples.
    #[new]
    #[pyo3(signature = (systems, delta = 0.0, overlap = "preempt"))]
    fn new(systems: Vec<(String, Vec<Vec<f64>>, f64)>, delta: f64, overlap: &str) -> PyResult<Self> {
        let overlap: Overlap = overlap.parse().map_err(PyValueError::new_err)?;
        let systems = systems
            .into_iter()
            .map(|(name, q, w)| PhysicalSystem::new(name, GeneratorMatrix::new(&q)?, w))
            .collect::<Result<Vec<_>, Error>>()
            .map_err(py_err)?;
        let inner = ScenarioSpec::new(systems, delta, overlap, InitialCondition::Stationary)
            .map_err(py_err)?;
        Ok(Self { inner })
    }

    /// The two-system reference scenario.
    #[staticmethod]
    #[pyo3(signature = (delta = 0.0))]
    fn reference(delta: f64) -> PyResult<Self> {
        Ok(Self {
            inner: reference_scenario(delta).map_err(py_err)?,
        })
    }

    /// Scenario from a JSON config document.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Config::from_json(text).map_err(py_err)?.scenario,
        })
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[getter]
    fn overlap(&self) -> &'static str {
        self.inner.overlap.as_str()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights()
    }

    fn total_event_rate(&self) -> f64 {
        self.inner.total_event_rate()
    }

    fn pptp_probability(&self, rate: f64) -> PyResult<f64> {
        pptp_probability(&self.inner, rate).map_err(py_err)
    }

    /// Closed-form expected cost at time `t` after a sample.
    #[pyo3(signature = (cost, t, form = "sojourn"))]
    fn expected_cost(&self, cost: &str, t: f64, form: &str) -> PyResult<f64> {
        let form = parse_form(form)?;
        match cost {
            "c1" => expected_cost_c1(&self.inner, t, form),
            "c2" => expected_cost_c2(&self.inner, &self.inner.weights(), t, form),
            "c3:hamming" => expected_cost_c3_hamming(&self.inner, &vec![1.0; self.inner.len()], t),
            other => {
                return Err(PyValueError::new_err(format!(
                    "no closed form for `{other}` (expected c1, c2 or c3:hamming)"
                )))
            }
        }
        .map_err(py_err)
    }

    /// Replicated simulation of one policy. Returns a dict with per-cost
    /// `(mean, stderr)` pairs under `costs` and the query rate under `rate`.
    #[pyo3(signature = (policy, rate, costs = vec!["c1".to_string()], horizon = 1000.0, reps = 100, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        policy: &str,
        rate: f64,
        costs: Vec<String>,
        horizon: f64,
        reps: u64,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let kind: PolicyKind = policy.parse().map_err(PyValueError::new_err)?;
        let spec = kind.with_rate(rate).map_err(py_err)?;
        let specs = costs
            .iter()
            .map(|c| parse_cost(c, &self.inner))
            .collect::<PyResult<Vec<_>>>()?;
        let stats = py
            .detach(|| simulate_cell(&self.inner, &spec, &specs, horizon, reps, seed, 0))
            .map_err(py_err)?;
        let out = PyDict::new(py);
        let per_cost = PyDict::new(py);
        for (spec, est) in specs.iter().zip(&stats.costs) {
            per_cost.set_item(spec.label(), (est.mean, est.stderr))?;
        }
        out.set_item("costs", per_cost)?;
        out.set_item("rate", (stats.rate.mean, stats.rate.stderr))?;
        out.set_item("replications", reps)?;
        Ok(out)
    }

    /// Rate-constrained optimal twinning policy (zero-delay scenarios).
    #[pyo3(signature = (budget, cost = "c1"))]
    fn solve_constrained<'py>(&self, py: Python<'py>, budget: f64, cost: &str) -> PyResult<Bound<'py, PyDict>> {
        let spec = parse_cost(cost, &self.inner)?;
        let (sol, residual, n) = py
            .detach(|| {
                let model = build_mdp(&self.inner, &spec)?;
                let sol = solve_constrained(&model, budget, RviOptions::default())?;
                let residual = optimality_residual(&model, &sol);
                Ok((sol, residual, model.n_states()))
            })
            .map_err(py_err)?;
        let out = PyDict::new(py);
        out.set_item("eta", sol.eta)?;
        out.set_item("gain", sol.gain)?;
        out.set_item("average_cost", sol.average_cost)?;
        out.set_item("achieved_rate", sol.achieved_rate)?;
        out.set_item("residual", residual)?;
        out.set_item("n_states", n)?;
        out.set_item("table", sol.to_table())?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(systems={}, delta={}, overlap={})",
            self.inner.len(),
            self.inner.delta,
            self.inner.overlap.as_str()
        )
    }
}

#[pymodule]
#[pyo3(name = "twinsim")]
fn twinsim_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGenerator>()?;
    m.add_class::<PyScenario>()?;
    Ok(())
}
