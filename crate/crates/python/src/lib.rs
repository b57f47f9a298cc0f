//! Python bindings: config, field timeline, Finsler scalars and the full run.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use qgeo_core::experiment::{self, ExperimentConfig, Sampling, Stages};
use qgeo_core::finsler;
use qgeo_core::timeline::FieldTimeline;
use qgeo_core::{init_packet, Error, SplitOperator};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidGrid(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Run configuration in its `key=value` form.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (text = None))]
    fn new(text: Option<&str>) -> PyResult<Self> {
        let inner = match text {
            Some(t) => ExperimentConfig::parse(t).map_err(py_err)?,
            None => ExperimentConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: ExperimentConfig::from_file(&path).map_err(py_err)? })
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(py_err)?;
        self.inner.validate().map_err(py_err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.inner.mass
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.inner.t_final
    }

    #[getter]
    fn n_traj(&self) -> usize {
        self.inner.n_traj
    }

    fn __repr__(&self) -> String {
        format!("Config(n_traj={}, t_final={}, dt={})", self.inner.n_traj, self.inner.t_final, self.inner.dt)
    }
}

/// Split-operator propagation of the configured packet over the Eckart barrier.
#[pyclass(name = "Field", unsendable)]
struct PyField {
    timeline: FieldTimeline,
}

#[pymethods]
impl PyField {
    #[new]
    fn new(config: &PyConfig) -> PyResult<Self> {
        let c = &config.inner;
        let grid = c.grid();
        let v = c.potential().on_grid(&grid, c.mass);
        let psi = init_packet(&grid, c.beta, c.k, c.q_c).map_err(py_err)?;
        let solver = SplitOperator::new(grid, &v, c.dt, c.mass).map_err(py_err)?;
        let timeline = FieldTimeline::new(psi, solver, c.node_threshold).map_err(py_err)?;
        Ok(Self { timeline })
    }

    #[getter]
    fn time(&self) -> f64 {
        self.timeline.time()
    }

    fn norm(&self) -> f64 {
        self.timeline.state().norm()
    }

    /// Advances until `time >= t`.
    fn advance_to(&mut self, t: f64) -> PyResult<f64> {
        while self.timeline.time() < t - 1e-9 {
            self.timeline.step().map_err(py_err)?;
        }
        Ok(self.timeline.time())
    }

    fn x(&self) -> Vec<f64> {
        let g = self.timeline.state().grid;
        (0..g.len()).map(|i| g.x(i)).collect()
    }

    /// `(re ψ, im ψ)` on the grid.
    fn psi(&self) -> (Vec<f64>, Vec<f64>) {
        self.timeline.state().values.iter().map(|z| (z.re, z.im)).unzip()
    }

    /// `(A, S, node_mask)` of the current polar decomposition.
    fn polar(&self) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
        let p = self.timeline.polar();
        (p.amplitude.clone(), p.action.clone(), p.node_mask.clone())
    }
}

/// `Λ = 𝒯/q̇⁰ − Q q̇⁰` with `𝒯 = ½ m Σ (q̇ⁱ)²`.
#[pyfunction]
fn lambda_value(q: f64, qdot: Vec<f64>, mass: f64) -> PyResult<f64> {
    if qdot.len() < 2 {
        return Err(PyValueError::new_err("qdot needs q̇⁰ and at least one spatial component"));
    }
    Ok(finsler::lambda_for(q, &qdot, mass))
}

/// Closed-form metric from `Q`, `∂Q/∂q̇⁰`, `∂²Q/∂(q̇⁰)²` and the velocity.
#[pyfunction]
#[pyo3(signature = (q, qdot, mass, q0 = 0.0, q00 = 0.0))]
fn metric(q: f64, qdot: Vec<f64>, mass: f64, q0: f64, q00: f64) -> PyResult<Vec<Vec<f64>>> {
    if qdot.len() < 2 {
        return Err(PyValueError::new_err("qdot needs q̇⁰ and at least one spatial component"));
    }
    let g = finsler::metric_components(q, q0, q00, &qdot, mass);
    Ok((0..g.nrows()).map(|i| (0..g.ncols()).map(|j| g[(i, j)]).collect()).collect())
}

#[pyfunction]
#[pyo3(signature = (beta, q_c, n_traj, mode = "quantile", seed = 0))]
fn sample_initial_positions(beta: f64, q_c: f64, n_traj: usize, mode: &str, seed: u64) -> PyResult<Vec<f64>> {
    let mode = match mode {
        "quantile" => Sampling::Quantile,
        "seeded_random" => Sampling::SeededRandom,
        other => return Err(PyValueError::new_err(format!("unknown sampling mode '{other}'"))),
    };
    experiment::sample_initial_positions(beta, q_c, n_traj, mode, seed).map_err(py_err)
}

/// Runs the selected stages, writes the bundle to `out_dir` and returns the manifest as JSON text.
#[pyfunction]
#[pyo3(signature = (config, out_dir, stages = "all"))]
fn run_experiment(py: Python<'_>, config: &PyConfig, out_dir: PathBuf, stages: &str) -> PyResult<String> {
    let stages = match stages {
        "field" => Stages::FIELD,
        "trajectories" => Stages::TRAJECTORIES,
        "geodesics" => Stages::GEODESICS,
        "curvature" => Stages::CURVATURE,
        "all" => Stages::ALL,
        other => return Err(PyValueError::new_err(format!("unknown stages '{other}'"))),
    };
    let cfg = config.inner.clone();
    py.detach(|| experiment::run_experiment(&cfg, stages, &out_dir)).map_err(py_err)?;
    std::fs::read_to_string(out_dir.join("manifest.json")).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn qgeo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyField>()?;
    m.add_function(wrap_pyfunction!(lambda_value, m)?)?;
    m.add_function(wrap_pyfunction!(metric, m)?)?;
    m.add_function(wrap_pyfunction!(sample_initial_positions, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
