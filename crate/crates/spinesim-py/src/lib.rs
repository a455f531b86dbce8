//! Python bindings for the branching-process simulator. Models and
//! experiment configs use the same TOML dialect as the `spinesim` CLI; trees
//! come back as lightweight handles with snapshot accessors, and the full
//! experiment runner returns the report as a plain dict.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use spinesim::cli::catalog::CATALOG;
use spinesim::cli::config::{ExperimentConfig, Overrides};
use spinesim::cli::experiments;
use spinesim::cli::report::Report;
use spinesim::error::Error;
use spinesim::functionals;
use spinesim::model::{Model, ModelSpec, State};
use spinesim::oracle;
use spinesim::sim::{SimConfig, Simulator};
use spinesim::spectral::{eigen_for_model, EigenData, EigenFunction};
use spinesim::spine_sim::{QSimConfig, QSimulator};
use spinesim::stats;
use spinesim::tree::{MarkedTree, SpineRecord};

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_model(text: &str) -> PyResult<Model> {
    let spec: ModelSpec =
        toml::from_str(text).map_err(|e| PyValueError::new_err(format!("model TOML: {e}")))?;
    Model::new(spec).map_err(err)
}

fn state_to_py(py: Python<'_>, s: &State) -> PyObject {
    match s {
        State::Point(x) => x.into_pyobject(py).unwrap().into_any().unbind(),
        State::Type(i) => i.into_pyobject(py).unwrap().into_any().unbind(),
        State::Typed { pos, ty } => (*ty, *pos).into_pyobject(py).unwrap().into_any().unbind(),
    }
}

/// float -> position on the line, int -> chain type, (int, float) -> both.
fn state_from_py(obj: &Bound<'_, PyAny>) -> PyResult<State> {
    if let Ok((ty, pos)) = obj.extract::<(usize, f64)>() {
        return Ok(State::Typed { pos, ty });
    }
    if obj.extract::<bool>().is_ok() {
        return Err(PyValueError::new_err("a bool is not a state"));
    }
    if let Ok(i) = obj.extract::<usize>() {
        return Ok(State::Type(i));
    }
    if let Ok(x) = obj.extract::<f64>() {
        return Ok(State::Point(x));
    }
    Err(PyValueError::new_err(
        "expected a float position, an int type index, or a (type, position) pair",
    ))
}

fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> PyObject {
    match v {
        serde_json::Value::Null => py.None(),
        serde_json::Value::Bool(b) => b.into_pyobject(py).unwrap().into_any().unbind(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py).unwrap().into_any().unbind()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py).unwrap().into_any().unbind()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py).unwrap().into_any().unbind()
            }
        }
        serde_json::Value::String(s) => s.into_pyobject(py).unwrap().into_any().unbind(),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for it in items {
                list.append(json_to_py(py, it)).unwrap();
            }
            list.into_any().unbind()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, val) in map {
                dict.set_item(k, json_to_py(py, val)).unwrap();
            }
            dict.into_any().unbind()
        }
    }
}

fn eigen_dict(py: Python<'_>, model: &Model, eigen: &EigenData) -> PyResult<PyObject> {
    let dict = PyDict::new(py);
    dict.set_item("lambda1", eigen.lambda1)?;
    let fun = |f: &EigenFunction| -> PyObject {
        match f {
            EigenFunction::Table { values } => {
                values.clone().into_pyobject(py).unwrap().into_any().unbind()
            }
            EigenFunction::ExpDecay { lambda } => {
                format!("exp(-{lambda} x)").into_pyobject(py).unwrap().into_any().unbind()
            }
            EigenFunction::TypedExp { lambda, values } => {
                (values.clone(), format!("exp(-{lambda} x)"))
                    .into_pyobject(py)
                    .unwrap()
                    .into_any()
                    .unbind()
            }
        }
    };
    dict.set_item("phi", fun(&eigen.phi))?;
    dict.set_item("phi_hat", fun(&eigen.phi_hat))?;
    dict.set_item("residual", eigen.residual)?;
    dict.set_item("phi_hat_normalizable", eigen.phi_hat_normalizable)?;
    if let Ok(s2) = functionals::sigma_squared(model, eigen) {
        dict.set_item("sigma_squared", s2)?;
    }
    Ok(dict.into_any().unbind())
}

/// A sampled genealogy: node count, snapshot accessors, and the textual dump
/// format shared with the Rust side.
#[pyclass(name = "Tree")]
struct PyTree {
    inner: MarkedTree,
}

#[pymethods]
impl PyTree {
    /// Number of particles alive at time t.
    fn population(&self, t: f64) -> PyResult<usize> {
        Ok(self.inner.alive_ids_at(t).map_err(err)?.len())
    }

    /// States of the particles alive at time t.
    fn states(&self, py: Python<'_>, t: f64) -> PyResult<PyObject> {
        let ids = self.inner.alive_ids_at(t).map_err(err)?;
        let list = PyList::empty(py);
        for id in ids {
            let s = self.inner.nodes[id].state_at(t).map_err(err)?;
            list.append(state_to_py(py, &s))?;
        }
        Ok(list.into_any().unbind())
    }

    /// Sum over alive and dead lines of the product of 1/(offspring count)
    /// along each ancestry; equals 1 on every tree.
    fn ancestral_mass(&self, t: f64) -> PyResult<f64> {
        self.inner.ancestral_mass(t).map_err(err)
    }

    /// Textual dump, one node per line; parse() round-trips it.
    fn dump(&self) -> String {
        self.inner.dump()
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<PyTree> {
        Ok(PyTree { inner: MarkedTree::parse(text).map_err(err)? })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Tree(nodes={}, horizon={})", self.inner.len(), self.inner.horizon)
    }
}

/// The distinguished line of descent of a size-biased tree.
#[pyclass(name = "Spine")]
struct PySpine {
    inner: SpineRecord,
}

#[pymethods]
impl PySpine {
    /// Genealogical labels along the spine, root first.
    fn labels(&self) -> Vec<String> {
        self.inner.spine_labels.iter().map(|l| l.to_string()).collect()
    }

    fn fission_times(&self) -> Vec<f64> {
        self.inner.fission_times.clone()
    }

    fn offspring_counts(&self) -> Vec<u32> {
        self.inner.offspring_counts.clone()
    }

    /// Time the spine entered the absorbing placeholder particle, if ever.
    fn dagger_time(&self) -> Option<f64> {
        self.inner.dagger_time
    }

    /// Spine path as (time, state) pairs.
    fn path(&self, py: Python<'_>) -> PyResult<PyObject> {
        let list = PyList::empty(py);
        for (t, s) in &self.inner.spine_path {
            list.append((*t, state_to_py(py, s)))?;
        }
        Ok(list.into_any().unbind())
    }

    fn __repr__(&self) -> String {
        format!(
            "Spine(generations={}, dagger={:?})",
            self.inner.spine_labels.len(),
            self.inner.dagger_time
        )
    }
}

/// Samples trees under the plain branching law and under the size-biased
/// (spine) law, and evaluates the martingale functionals used by the
/// experiment suite.
#[pyclass(name = "Simulator")]
struct PySimulator {
    cfg: SimConfig,
    model: Model,
    eigen: Option<EigenData>,
    start: State,
}

impl PySimulator {
    fn eigen_ref(&self) -> PyResult<&EigenData> {
        self.eigen
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("no eigenpair for this model (pass lam=...)"))
    }

    fn tilt(&self) -> PyResult<(f64, f64)> {
        stats::constant_branching(&self.model).map_err(err)
    }
}

#[pymethods]
impl PySimulator {
    /// model_toml uses the CLI's [model] dialect (name, motion, rate,
    /// offspring). Observation times register path samples so snapshots and
    /// ladder queries below the horizon are exact.
    #[new]
    #[pyo3(signature = (model_toml, *, horizon, seed, start, observation_times=None, max_nodes=1_000_000, lam=None))]
    fn new(
        model_toml: &str,
        horizon: f64,
        seed: u64,
        start: &Bound<'_, PyAny>,
        observation_times: Option<Vec<f64>>,
        max_nodes: u64,
        lam: Option<f64>,
    ) -> PyResult<Self> {
        let model = parse_model(model_toml)?;
        let cfg = SimConfig {
            model: model.spec.clone(),
            horizon,
            max_nodes,
            seed,
            observation_times: observation_times.unwrap_or_default(),
        };
        cfg.validate().map_err(err)?;
        let eigen = eigen_for_model(&model, lam).ok();
        Ok(PySimulator { cfg, model, eigen, start: state_from_py(start)? })
    }

    /// One tree under the plain branching law; replicates are independent
    /// and reproducible per (seed, replicate).
    fn tree(&self, replicate: u64) -> PyResult<PyTree> {
        let sim = Simulator::new(&self.cfg).map_err(err)?;
        Ok(PyTree { inner: sim.simulate_p(self.start, replicate).map_err(err)? })
    }

    /// One tree under the size-biased law, with its spine.
    fn spine_tree(&self, replicate: u64) -> PyResult<(PyTree, PySpine)> {
        let qcfg =
            QSimConfig { sim: self.cfg.clone(), eigen: self.eigen_ref()?.clone() };
        let qsim = QSimulator::new(&qcfg).map_err(err)?;
        let (tree, spine) = qsim.simulate_q(self.start, replicate).map_err(err)?;
        Ok((PyTree { inner: tree }, PySpine { inner: spine }))
    }

    /// Principal eigenpair of the mean semigroup, as a dict.
    fn eigen(&self, py: Python<'_>) -> PyResult<PyObject> {
        eigen_dict(py, &self.model, self.eigen_ref()?)
    }

    /// Eigenvalue-normalized phi-mass of the tree at time t; mean one.
    fn m_phi(&self, tree: &PyTree, t: f64) -> PyResult<f64> {
        functionals::m_phi(&tree.inner, self.eigen_ref()?, t).map_err(err)
    }

    /// Additive tilt martingale at lam for constant-rate models on the line.
    fn w_lambda(&self, tree: &PyTree, lam: f64, t: f64) -> PyResult<f64> {
        let (beta, a_mean) = self.tilt()?;
        functionals::w_lambda(&tree.inner, lam, beta, a_mean, t).map_err(err)
    }

    /// Its negative lam-derivative.
    fn dw_lambda(&self, tree: &PyTree, lam: f64, t: f64) -> PyResult<f64> {
        let (beta, a_mean) = self.tilt()?;
        functionals::dw_lambda(&tree.inner, lam, beta, a_mean, t).map_err(err)
    }

    /// Spine weight factors eta1, eta2, eta3 and their product.
    fn eta(&self, py: Python<'_>, spine: &PySpine, t: f64) -> PyResult<PyObject> {
        let e = functionals::eta_components(&spine.inner, &self.model, self.eigen_ref()?, t)
            .map_err(err)?;
        let dict = PyDict::new(py);
        dict.set_item("eta1", e.eta1)?;
        dict.set_item("eta2", e.eta2)?;
        dict.set_item("eta3", e.eta3)?;
        dict.set_item("eta_tilde", e.eta_tilde)?;
        Ok(dict.into_any().unbind())
    }

    /// Deterministic spine-side value of the decomposition at time t.
    fn spine_rhs(&self, spine: &PySpine, t: f64) -> PyResult<f64> {
        functionals::spine_rhs(&spine.inner, self.eigen_ref()?, t).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Simulator(model={:?}, horizon={}, seed={})",
            self.model.spec.name, self.cfg.horizon, self.cfg.seed
        )
    }
}

/// Run a full experiment config (the CLI's TOML dialect) and return the
/// report as a dict; nothing is written to disk.
#[pyfunction]
#[pyo3(signature = (config_toml, *, seed=None, replicates=None, workers=None))]
fn run(
    py: Python<'_>,
    config_toml: &str,
    seed: Option<u64>,
    replicates: Option<u64>,
    workers: Option<usize>,
) -> PyResult<PyObject> {
    let mut cfg = ExperimentConfig::from_str(config_toml).map_err(err)?;
    cfg.apply(&Overrides { seed, replicates, out: None, workers });
    let artifacts = experiments::run(&cfg).map_err(err)?;
    let report = Report {
        experiment: cfg.name.clone(),
        model: cfg.model.clone(),
        seed: cfg.experiment.seed,
        replicates: cfg.experiment.replicates,
        items: artifacts.items,
    };
    let value = serde_json::to_value(&report)
        .map_err(|e| PyValueError::new_err(format!("report serialization: {e}")))?;
    Ok(json_to_py(py, &value))
}

/// Parse and validate an experiment config; returns its name.
#[pyfunction]
fn validate(config_toml: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_str(config_toml).map_err(err)?;
    cfg.validate().map_err(err)?;
    Ok(cfg.name)
}

/// Principal eigenpair for a bare model snippet.
#[pyfunction]
#[pyo3(signature = (model_toml, *, lam=None))]
fn eigen(py: Python<'_>, model_toml: &str, lam: Option<f64>) -> PyResult<PyObject> {
    let model = parse_model(model_toml)?;
    let data = eigen_for_model(&model, lam).map_err(err)?;
    eigen_dict(py, &model, &data)
}

/// Extinction probabilities v_t per start type on [0, horizon], from the
/// adaptive ODE solver; returns {"times": [...], "values": [[...], ...]}.
#[pyfunction]
#[pyo3(signature = (model_toml, *, horizon, tol=1e-9))]
fn extinction_curve(
    py: Python<'_>,
    model_toml: &str,
    horizon: f64,
    tol: f64,
) -> PyResult<PyObject> {
    let model = parse_model(model_toml)?;
    let curve = oracle::solve_extinction(&model, horizon, tol).map_err(err)?;
    let dict = PyDict::new(py);
    dict.set_item("times", curve.times.clone())?;
    dict.set_item("values", curve.values.clone())?;
    Ok(dict.into_any().unbind())
}

/// The built-in experiment catalog as a list of dicts.
#[pyfunction]
fn catalog(py: Python<'_>) -> PyResult<PyObject> {
    let list = PyList::empty(py);
    for e in CATALOG {
        let dict = PyDict::new(py);
        dict.set_item("name", e.name)?;
        dict.set_item("criteria", e.criteria)?;
        dict.set_item("runtime", e.runtime)?;
        dict.set_item("config", e.config)?;
        dict.set_item("description", e.description)?;
        list.append(dict)?;
    }
    Ok(list.into_any().unbind())
}

#[pymodule]
fn spinesim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySimulator>()?;
    m.add_class::<PyTree>()?;
    m.add_class::<PySpine>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(eigen, m)?)?;
    m.add_function(wrap_pyfunction!(extinction_curve, m)?)?;
    m.add_function(wrap_pyfunction!(catalog, m)?)?;
    Ok(())
}
