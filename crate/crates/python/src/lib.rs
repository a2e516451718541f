//! Python bindings. Structured results come back as plain dicts and lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;

use gdx_core::analysis::{render_text, run_analysis, AnalysisOptions};
use gdx_core::game::{Game as CoreGame, PayoffPoint, PureProfile};
use gdx_core::graph::PreferenceGraph;
use gdx_core::random::{random_game, PayoffDistribution};
use gdx_core::stability::{stability_test, Tolerances};
use gdx_core::{brd, builtins, export, io, rd};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
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

fn serialize<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(value).map_err(runtime_err)?)
}

/// A finite normal-form game.
#[pyclass(frozen)]
struct Game {
    inner: CoreGame,
}

impl Game {
    fn point(&self, w: Vec<f64>) -> PyResult<PayoffPoint> {
        PayoffPoint::from_flat(self.inner.strategy_counts(), w).map_err(value_err)
    }

    fn walk(&self, profiles: Vec<Vec<usize>>) -> PyResult<gdx_core::graph::Walk> {
        let profiles: Vec<PureProfile> = profiles.into_iter().map(PureProfile::new).collect();
        PreferenceGraph::build(&self.inner)
            .validate_walk(&profiles)
            .map_err(value_err)
    }
}

#[pymethods]
impl Game {
    /// `payoffs[k]` is the payoff vector of the k-th profile, last player fastest.
    #[new]
    #[pyo3(signature = (strategy_counts, payoffs))]
    fn new(strategy_counts: Vec<usize>, payoffs: Vec<Vec<f64>>) -> PyResult<Self> {
        let labels = gdx_core::game::default_labels(&strategy_counts);
        CoreGame::new(labels, payoffs)
            .map(|inner| Game { inner })
            .map_err(value_err)
    }

    #[staticmethod]
    #[pyo3(signature = (name, params = Vec::new()))]
    fn builtin(name: &str, params: Vec<f64>) -> PyResult<Self> {
        builtins::builtin(name, &params)
            .map(|inner| Game { inner })
            .map_err(value_err)
    }

    #[staticmethod]
    #[pyo3(signature = (dims, seed = 0, dist = "uniform01"))]
    fn random(dims: Vec<usize>, seed: u64, dist: &str) -> PyResult<Self> {
        let dist: PayoffDistribution = dist.parse().map_err(PyValueError::new_err)?;
        random_game(&dims, seed, dist)
            .map(|inner| Game { inner })
            .map_err(value_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        io::parse_game(text).map(|inner| Game { inner }).map_err(value_err)
    }

    fn to_json(&self) -> String {
        io::game_to_string(&self.inner)
    }

    #[getter]
    fn strategy_counts(&self) -> Vec<usize> {
        self.inner.strategy_counts().to_vec()
    }

    #[getter]
    fn labels(&self) -> Vec<Vec<String>> {
        self.inner.labels().to_vec()
    }

    fn payoff(&self, profile: Vec<usize>) -> PyResult<Vec<f64>> {
        let p = PureProfile::new(profile);
        self.inner.check_profile(&p).map_err(value_err)?;
        Ok(self.inner.payoff(&p).to_vec())
    }

    /// Sink equilibria of the preference graph, each a list of profiles.
    fn sink_equilibria(&self) -> Vec<Vec<Vec<usize>>> {
        PreferenceGraph::build(&self.inner)
            .sink_equilibria()
            .into_iter()
            .map(|s| s.profiles.into_iter().map(|p| p.strategies().to_vec()).collect())
            .collect()
    }

    #[pyo3(signature = (max_len = 6))]
    fn simple_cycles(&self, max_len: usize) -> Vec<Vec<Vec<usize>>> {
        PreferenceGraph::build(&self.inner)
            .simple_cycles(max_len)
            .map(|w| w.profiles.into_iter().map(|p| p.strategies().to_vec()).collect())
            .collect()
    }

    fn to_dot(&self) -> String {
        export::export_dot(&self.inner, &PreferenceGraph::build(&self.inner))
    }

    fn stability_test<'py>(&self, py: Python<'py>, walk: Vec<Vec<usize>>) -> PyResult<Bound<'py, PyAny>> {
        let walk = self.walk(walk)?;
        let verdict = stability_test(&self.inner, &walk, &Tolerances::default()).map_err(runtime_err)?;
        serialize(py, &verdict)
    }

    /// `w0` is the flat payoff point, player by player.
    #[pyo3(signature = (w0, switches = 100))]
    fn simulate_brd<'py>(&self, py: Python<'py>, w0: Vec<f64>, switches: usize) -> PyResult<Bound<'py, PyAny>> {
        let traj = brd::simulate(&self.inner, &self.point(w0)?, switches).map_err(runtime_err)?;
        serialize(py, &traj)
    }

    #[pyo3(signature = (w0, t_end, abs_tol = 1e-9, rel_tol = 1e-7))]
    fn simulate_rd<'py>(
        &self,
        py: Python<'py>,
        w0: Vec<f64>,
        t_end: f64,
        abs_tol: f64,
        rel_tol: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let traj = rd::rd_simulate(&self.inner, &self.point(w0)?, t_end, abs_tol, rel_tol).map_err(runtime_err)?;
        serialize(py, &traj)
    }

    #[pyo3(signature = (max_cycle_len = 6, simulate = false, seed = 0, text = false))]
    fn analyze<'py>(
        &self,
        py: Python<'py>,
        max_cycle_len: usize,
        simulate: bool,
        seed: u64,
        text: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let opts = AnalysisOptions {
            max_cycle_len,
            simulate,
            seed,
            ..Default::default()
        };
        let report = py.detach(|| run_analysis(&self.inner, &opts));
        if text {
            Ok(render_text(&report).into_pyobject(py)?.into_any())
        } else {
            serialize(py, &report)
        }
    }

    fn __repr__(&self) -> String {
        format!("Game(strategy_counts={:?})", self.inner.strategy_counts())
    }
}

#[pymodule]
fn gdx(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Game>()?;
    Ok(())
}
