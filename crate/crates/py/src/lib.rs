//! Python bindings: configuration, micro runs, sweeps and operator checks.

use std::collections::HashMap;

use perfhom::config::RunConfig;
use perfhom::geometry::build_perforated_mesh;
use perfhom::micro::{MicroSolution, MicroSolver};
use perfhom::unfolding::verify_operators as verify_ops;
use perfhom::verify::{convergence_sweep, ErrorReport, SweepChecks};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(perfhom_py, PerfhomError, PyException);

fn py_err<E: std::fmt::Display>(e: E) -> PyErr {
    PerfhomError::new_err(e.to_string())
}

/// Validated run configuration.
#[pyclass(name = "Config", module = "perfhom_py", frozen)]
pub struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    /// Built-in defaults, or parsed from TOML text.
    #[new]
    #[pyo3(signature = (toml=None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(t) => RunConfig::from_toml(t).map_err(py_err)?,
            None => RunConfig::default(),
        };
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        let inner = RunConfig::load(&path).map_err(py_err)?;
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    fn to_toml(&self) -> String {
        self.inner.echo()
    }

    #[getter]
    fn run_id(&self) -> String {
        self.inner.run_id.clone()
    }

    #[getter]
    fn sweep_eps(&self) -> Vec<f64> {
        self.inner.sweep.eps.clone()
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.inner.discretization.t_final
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.discretization.tau
    }

    fn __repr__(&self) -> String {
        format!("Config(run_id={:?}, eps={:?})", self.inner.run_id, self.inner.sweep.eps)
    }
}

/// Micro solution on the perforated domain.
#[pyclass(name = "MicroRun", module = "perfhom_py", frozen)]
pub struct PyMicroRun {
    inner: MicroSolution,
}

#[pymethods]
impl PyMicroRun {
    #[getter]
    fn eps(&self) -> f64 {
        self.inner.eps
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.trajectory.times.clone()
    }

    #[getter]
    fn nodes(&self) -> Vec<[f64; 2]> {
        self.inner.mesh.mesh.nodes.clone()
    }

    #[getter]
    fn triangles(&self) -> Vec<[usize; 3]> {
        self.inner.mesh.mesh.triangles.clone()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.inner.fingerprint.clone()
    }

    /// Nodal values at time index `m`.
    fn field(&self, m: usize) -> PyResult<Vec<f64>> {
        self.inner.trajectory.fields.get(m).cloned().ok_or_else(|| py_err(format!("time index {m} out of range")))
    }

    fn jacobian(&self, m: usize) -> PyResult<Vec<f64>> {
        self.inner.trajectory.jacobians.get(m).cloned().ok_or_else(|| py_err(format!("time index {m} out of range")))
    }

    /// Rows of `(t, L2, epsH1, Jmass)`.
    fn norms(&self) -> Vec<(f64, f64, f64, f64)> {
        self.inner.trajectory.norms.iter().map(|n| (n.t, n.l2, n.eps_h1, n.jmass)).collect()
    }

    fn max_balance_residual(&self) -> f64 {
        self.inner.trajectory.balance.iter().copied().fold(0.0, f64::max)
    }
}

/// Result of a convergence sweep.
#[pyclass(name = "SweepReport", module = "perfhom_py", frozen)]
pub struct PySweepReport {
    inner: ErrorReport,
}

#[pymethods]
impl PySweepReport {
    fn sweep_csv(&self) -> String {
        self.inner.sweep_csv()
    }

    fn errors_csv(&self) -> String {
        self.inner.errors_csv()
    }

    fn shifts_csv(&self) -> String {
        self.inner.shifts_csv()
    }

    fn summary(&self) -> String {
        self.inner.summary()
    }

    /// `(passed, description)` for each sweep check.
    fn checks(&self) -> Vec<(bool, String)> {
        SweepChecks::new(&self.inner).lines()
    }

    fn all_ok(&self) -> bool {
        self.inner.all_ok()
    }
}

fn pool(cfg: &RunConfig) -> PyResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build().map_err(py_err)
}

#[pyfunction]
fn run_micro(py: Python<'_>, config: &PyConfig, eps: f64) -> PyResult<PyMicroRun> {
    let cfg = config.inner.clone();
    let pool = pool(&cfg)?;
    let sol = py
        .detach(|| {
            pool.install(|| {
                let scen = cfg.scenario();
                let cell = scen.build_cell().map_err(|e| e.to_string())?;
                MicroSolver::new(&scen, cell, eps).and_then(|s| s.run()).map_err(|e| e.to_string())
            })
        })
        .map_err(py_err)?;
    Ok(PyMicroRun { inner: sol })
}

#[pyfunction]
fn sweep(py: Python<'_>, config: &PyConfig) -> PyResult<PySweepReport> {
    let cfg = config.inner.clone();
    let report = py.detach(|| convergence_sweep(&cfg.scenario(), &cfg.sweep_config())).map_err(py_err)?;
    Ok(PySweepReport { inner: report })
}

/// Unfolding identity residuals at `eps`, keyed by name.
#[pyfunction]
#[pyo3(signature = (config, eps, seed=1))]
fn verify_operators(config: &PyConfig, eps: f64, seed: u64) -> PyResult<HashMap<&'static str, f64>> {
    let cell = config.inner.scenario().build_cell().map_err(py_err)?;
    let mesh = build_perforated_mesh(eps, &cell, config.inner.domain()).map_err(py_err)?;
    let r = verify_ops(&mesh, &cell, seed).map_err(py_err)?;
    Ok(HashMap::from([
        ("adjointness", r.adjointness),
        ("isometry", r.isometry),
        ("boundary_isometry", r.boundary_isometry),
        ("gradient", r.gradient),
        ("left_inverse", r.left_inverse),
        ("time_difference", r.time_difference),
    ]))
}

/// Runs the command-line front end; returns its exit status.
#[pyfunction]
fn cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("perfhom".to_string()).chain(args).collect();
    py.detach(|| perfhom::cli::run(argv))
}

#[pymodule]
fn perfhom_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PerfhomError", m.py().get_type::<PerfhomError>())?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyMicroRun>()?;
    m.add_class::<PySweepReport>()?;
    m.add_function(wrap_pyfunction!(run_micro, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(verify_operators, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    Ok(())
}
