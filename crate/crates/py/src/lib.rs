//! Python bindings for the mnldesign toolkit: instance handling, the core
//! model quantities, design computation, and the identification loop.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList};

use mnldesign::assortment::{best_assortment as core_best, RevenueQuery};
use mnldesign::bsi::{run_bsi as core_run_bsi, BsiConfig, KappaMode};
use mnldesign::design::{frank_wolfe as core_fw, FwConfig};
use mnldesign::estimator::beta as core_beta;
use mnldesign::lmo::LmoBackend;
use mnldesign::mnl::{
    choice_probs as core_probs, fisher_info as core_fisher, kappa as core_kappa,
    lifted_info as core_lifted, Assortment, Instance as CoreInstance,
};
use mnldesign::sim::{gen_instance, Environment, GenParams};
use nalgebra::{DMatrix, DVector};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_backend(name: &str) -> PyResult<LmoBackend> {
    match name {
        "brute" => Ok(LmoBackend::Brute),
        "milp" => Ok(LmoBackend::Milp),
        "lifted" => Ok(LmoBackend::Lifted),
        other => Err(PyValueError::new_err(format!("unknown backend '{other}'"))),
    }
}

fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    Ok(match value {
        serde_json::Value::Null => py.None(),
        serde_json::Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any().unbind(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any().unbind()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind()
            }
        }
        serde_json::Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

/// An MNL arm set with revenues and model flags.
#[pyclass(name = "Instance", from_py_object)]
#[derive(Clone)]
struct PyInstance {
    inner: CoreInstance,
}

#[pymethods]
impl PyInstance {
    #[new]
    #[pyo3(signature = (features, revenues, k, b, theta_star=None, outside_option=true))]
    fn new(
        features: Vec<Vec<f64>>,
        revenues: Vec<f64>,
        k: usize,
        b: f64,
        theta_star: Option<Vec<f64>>,
        outside_option: bool,
    ) -> PyResult<Self> {
        let n = features.len();
        let d = features.first().map(|r| r.len()).unwrap_or(0);
        if features.iter().any(|r| r.len() != d) {
            return Err(PyValueError::new_err("ragged feature rows"));
        }
        let mat = DMatrix::from_fn(n, d, |i, j| features[i][j]);
        let inner = CoreInstance::new(
            mat,
            revenues,
            k,
            b,
            theta_star.map(DVector::from_vec),
            outside_option,
        )
        .map_err(err)?;
        Ok(Self { inner })
    }

    /// Draw an instance from the standard experimental protocol.
    #[staticmethod]
    #[pyo3(signature = (n, k, d, b, seed, gap_margin=1e-6, outside_option=true))]
    fn generate(
        n: usize,
        k: usize,
        d: usize,
        b: f64,
        seed: u64,
        gap_margin: f64,
        outside_option: bool,
    ) -> PyResult<Self> {
        let params = GenParams { gap_margin, outside_option, ..GenParams::new(n, k, d, b, seed) };
        Ok(Self { inner: gen_instance(&params).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: CoreInstance::load(std::path::Path::new(path)).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(std::path::Path::new(path)).map_err(err)
    }

    #[getter]
    fn n_arms(&self) -> usize {
        self.inner.n_arms()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn capacity(&self) -> usize {
        self.inner.capacity()
    }

    #[getter]
    fn outside_option(&self) -> bool {
        self.inner.outside_option()
    }

    #[getter]
    fn revenues(&self) -> Vec<f64> {
        self.inner.revenues().to_vec()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        (0..self.inner.n_arms())
            .map(|i| self.inner.features().row(i).iter().copied().collect())
            .collect()
    }

    #[getter]
    fn theta_star(&self) -> Option<Vec<f64>> {
        self.inner.theta_star().map(|t| t.iter().copied().collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(N={}, K={}, d={}, outside_option={})",
            self.inner.n_arms(),
            self.inner.capacity(),
            self.inner.dim(),
            self.inner.outside_option()
        )
    }
}

/// Choice probabilities of an offered set; the outside mass (or None) comes
/// second.
#[pyfunction]
fn choice_probs(
    inst: &PyInstance,
    items: Vec<usize>,
    theta: Vec<f64>,
) -> PyResult<(Vec<f64>, Option<f64>)> {
    let s = Assortment::new(items).map_err(err)?;
    let p = core_probs(&inst.inner, &s, &DVector::from_vec(theta)).map_err(err)?;
    Ok((p.probs, p.outside))
}

#[pyfunction]
fn fisher_info(inst: &PyInstance, items: Vec<usize>, theta: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let s = Assortment::new(items).map_err(err)?;
    let m = core_fisher(&inst.inner, &s, &DVector::from_vec(theta)).map_err(err)?;
    Ok((0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
}

#[pyfunction]
fn lifted_info(inst: &PyInstance, items: Vec<usize>, theta: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let s = Assortment::new(items).map_err(err)?;
    let m = core_lifted(&inst.inner, &s, &DVector::from_vec(theta)).map_err(err)?;
    Ok((0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
}

#[pyfunction]
fn kappa(inst: &PyInstance, theta: Vec<f64>) -> PyResult<f64> {
    core_kappa(&inst.inner, &DVector::from_vec(theta)).map_err(err)
}

/// Confidence-radius multiplier.
#[pyfunction]
#[pyo3(signature = (delta, lam, b, n, scale=1.0))]
fn beta(delta: f64, lam: f64, b: f64, n: usize, scale: f64) -> f64 {
    core_beta(delta, lam, b, n, scale)
}

/// (items, revenue) of the constrained revenue maximizer.
#[pyfunction]
#[pyo3(signature = (utilities, revenues, k, forced_in=None, forced_out=None))]
fn best_assortment(
    utilities: Vec<f64>,
    revenues: Vec<f64>,
    k: usize,
    forced_in: Option<Vec<usize>>,
    forced_out: Option<Vec<usize>>,
) -> PyResult<(Vec<usize>, f64)> {
    let q = RevenueQuery {
        utilities,
        revenues,
        k,
        forced_in: forced_in.unwrap_or_default(),
        forced_out: forced_out.unwrap_or_default(),
    };
    let (s, v) = core_best(&q).map_err(err)?;
    Ok((s.items().to_vec(), v))
}

/// (optimal items, revenue gap to the best alternative) at the true
/// parameter.
#[pyfunction]
fn true_gap(inst: &PyInstance) -> PyResult<(Vec<usize>, f64)> {
    let (s, gap) = mnldesign::assortment::true_gap(&inst.inner).map_err(err)?;
    Ok((s.items().to_vec(), gap))
}

/// Runs the design loop and returns the report (atoms, weights, per-iteration
/// log, certificates) as a dict.
#[pyfunction]
#[pyo3(signature = (inst, theta0, epsilon=0.1, eps_lmo=0.1, backend="brute", seed=0))]
fn frank_wolfe(
    py: Python<'_>,
    inst: &PyInstance,
    theta0: Vec<f64>,
    epsilon: f64,
    eps_lmo: f64,
    backend: &str,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let cfg = FwConfig {
        epsilon,
        eps_lmo,
        backend: parse_backend(backend)?,
        seed,
        ..FwConfig::default()
    };
    let report = core_fw(&inst.inner, &DVector::from_vec(theta0), &cfg).map_err(err)?;
    json_to_py(py, &report.to_json())
}

/// Full identification run against a simulated environment; returns the
/// summary dict (tau, warmup_len, s_hat, correct, certificates).
#[pyfunction]
#[pyo3(signature = (
    inst, seed, delta=0.05, epsilon=0.1, eps_lmo=0.1, backend="brute",
    kappa_mode="oracle", const_scale=0.1, stop_check_every=1,
    round_cap=2_000_000, zeta_override=None, beta_override=None
))]
#[allow(clippy::too_many_arguments)]
fn run_bsi(
    py: Python<'_>,
    inst: &PyInstance,
    seed: u64,
    delta: f64,
    epsilon: f64,
    eps_lmo: f64,
    backend: &str,
    kappa_mode: &str,
    const_scale: f64,
    stop_check_every: usize,
    round_cap: usize,
    zeta_override: Option<f64>,
    beta_override: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let kappa_mode = match kappa_mode {
        "oracle" => KappaMode::Oracle,
        "bound" => KappaMode::Bound,
        other => return Err(PyValueError::new_err(format!("unknown kappa mode '{other}'"))),
    };
    let cfg = BsiConfig {
        delta,
        epsilon,
        eps_lmo,
        backend: parse_backend(backend)?,
        kappa_mode,
        const_scale,
        stop_check_every,
        round_cap,
        seed,
        zeta_override,
        beta_override,
        ..BsiConfig::default()
    };
    let mut env = Environment::new(inst.inner.clone(), seed).map_err(err)?;
    let trace = core_run_bsi(&mut env, &cfg).map_err(err)?;
    let summary = serde_json::json!({
        "seed": seed,
        "tau": trace.tau,
        "warmup_len": trace.warmup_len,
        "stopped": trace.stopped,
        "s_hat": trace.s_hat.items(),
        "correct": trace.correct,
        "kappa": trace.kappa_used,
        "zeta_w": trace.zeta_used,
        "beta": trace.beta_used,
        "design_support": trace.design_support,
        "fw_final_g": trace.fw_final_g,
        "eps_lift": trace.eps_lift,
    });
    json_to_py(py, &summary)
}

#[pymodule]
fn mnldesign_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_function(wrap_pyfunction!(choice_probs, m)?)?;
    m.add_function(wrap_pyfunction!(fisher_info, m)?)?;
    m.add_function(wrap_pyfunction!(lifted_info, m)?)?;
    m.add_function(wrap_pyfunction!(kappa, m)?)?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(best_assortment, m)?)?;
    m.add_function(wrap_pyfunction!(true_gap, m)?)?;
    m.add_function(wrap_pyfunction!(frank_wolfe, m)?)?;
    m.add_function(wrap_pyfunction!(run_bsi, m)?)?;
    Ok(())
}
