//! Python bindings for `qspin`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use qspin::chaos::{self, DivergenceSeries};
use qspin::config::{load_config, RootConfig};
use qspin::ensemble::{self, AngleStat, SweepResult};
use qspin::model::{self, LatticeState, NeighborTable};
use qspin::trajectory::{self, TrajectoryRecord};
use qspin::validation::{check_sweep, Thresholds};

fn to_py(err: qspin::Error) -> PyErr {
    use qspin::Error as E;
    match err {
        E::InvalidConfig { .. }
        | E::SizeMismatch { .. }
        | E::DegenerateChord { .. }
        | E::EmptyFitWindow(_)
        | E::Saturated
        | E::ZeroPerturbation => PyValueError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

#[pyclass(name = "ModelParams", module = "pyqspin", skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyModelParams {
    #[pyo3(get, set)]
    mu: f64,
    #[pyo3(get, set)]
    field_b: f64,
    #[pyo3(get, set)]
    spring_k: f64,
    #[pyo3(get, set)]
    spring_a: f64,
    #[pyo3(get, set)]
    dissipation_b: f64,
    #[pyo3(get, set)]
    inertia: f64,
    #[pyo3(get, set)]
    rows: usize,
    #[pyo3(get, set)]
    cols: usize,
}

impl From<model::ModelParams> for PyModelParams {
    fn from(p: model::ModelParams) -> Self {
        Self {
            mu: p.mu,
            field_b: p.field_b,
            spring_k: p.spring_k,
            spring_a: p.spring_a,
            dissipation_b: p.dissipation_b,
            inertia: p.inertia,
            rows: p.rows,
            cols: p.cols,
        }
    }
}

impl From<PyModelParams> for model::ModelParams {
    fn from(p: PyModelParams) -> Self {
        Self {
            mu: p.mu,
            field_b: p.field_b,
            spring_k: p.spring_k,
            spring_a: p.spring_a,
            dissipation_b: p.dissipation_b,
            inertia: p.inertia,
            rows: p.rows,
            cols: p.cols,
        }
    }
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<Self> {
        let mut p = Self::from(model::ModelParams::default());
        if let Some(kw) = kwargs {
            let this = Bound::new(kw.py(), p)?;
            for (k, v) in kw.iter() {
                this.setattr(k.cast::<pyo3::types::PyString>()?, v)?;
            }
            p = *this.borrow();
        }
        model::ModelParams::from(p).validate().map_err(to_py)?;
        Ok(p)
    }

    fn n_sites(&self) -> usize {
        self.rows * self.cols
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelParams(mu={}, field_b={}, spring_k={}, spring_a={}, dissipation_b={}, inertia={}, rows={}, cols={})",
            self.mu, self.field_b, self.spring_k, self.spring_a, self.dissipation_b, self.inertia, self.rows, self.cols
        )
    }
}

fn params_or_default(params: Option<PyRef<'_, PyModelParams>>) -> PyResult<model::ModelParams> {
    let p = params.map_or_else(model::ModelParams::default, |p| (*p).into());
    p.validate().map_err(to_py)?;
    Ok(p)
}

/// Full configuration: model, run, sweep, chaos and integrator blocks.
#[pyclass(name = "Config", module = "pyqspin", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: RootConfig,
}

#[pymethods]
impl PyConfig {
    /// Parses a JSON document; omitted blocks and fields take defaults.
    #[new]
    #[pyo3(signature = (json = None))]
    fn new(json: Option<&str>) -> PyResult<Self> {
        let inner = match json {
            Some(text) => RootConfig::from_json_str(text).map_err(to_py)?,
            None => RootConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_config(&path).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json_pretty()
    }

    #[getter]
    fn model(&self) -> PyModelParams {
        self.inner.model.into()
    }

    #[setter]
    fn set_model(&mut self, params: PyRef<'_, PyModelParams>) -> PyResult<()> {
        let p: model::ModelParams = (*params).into();
        p.validate().map_err(to_py)?;
        self.inner.model = p;
        Ok(())
    }

    fn __repr__(&self) -> String {
        format!("Config({})", compact_json(&self.inner))
    }
}

fn compact_json(cfg: &RootConfig) -> String {
    cfg.to_json_pretty()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn config_or_default(config: Option<PyRef<'_, PyConfig>>) -> RootConfig {
    config.map_or_else(RootConfig::default, |c| c.inner)
}

#[pyclass(name = "Trajectory", module = "pyqspin", frozen)]
struct PyTrajectory {
    record: TrajectoryRecord,
}

#[pymethods]
impl PyTrajectory {
    /// "Up", "Down" or "Unsettled".
    #[getter]
    fn outcome(&self) -> &'static str {
        self.record.outcome.as_str()
    }

    #[getter]
    fn settle_time(&self) -> Option<f64> {
        self.record.settle_time
    }

    #[getter]
    fn final_time(&self) -> f64 {
        self.record.final_time
    }

    #[getter]
    fn final_theta(&self) -> Vec<f64> {
        self.record.final_state.theta.clone()
    }

    #[getter]
    fn final_omega(&self) -> Vec<f64> {
        self.record.final_state.omega.clone()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.record.samples.iter().map(|s| s.t).collect()
    }

    #[getter]
    fn energies(&self) -> Vec<f64> {
        self.record.samples.iter().map(|s| s.energy).collect()
    }

    /// Sampled angles, one list per sample.
    #[getter]
    fn thetas(&self) -> Vec<Vec<f64>> {
        self.record
            .samples
            .iter()
            .map(|s| s.theta.clone())
            .collect()
    }

    #[getter]
    fn accepted_steps(&self) -> u64 {
        self.record.stats.accepted_steps
    }

    fn __repr__(&self) -> String {
        format!(
            "Trajectory(outcome={}, settle_time={:?}, samples={})",
            self.record.outcome,
            self.record.settle_time,
            self.record.samples.len()
        )
    }
}

#[pyclass(name = "AngleStat", module = "pyqspin", frozen)]
struct PyAngleStat {
    #[pyo3(get)]
    mean_theta: f64,
    #[pyo3(get)]
    n_up: usize,
    #[pyo3(get)]
    n_down: usize,
    #[pyo3(get)]
    n_unsettled: usize,
    #[pyo3(get)]
    fraction_up: Option<f64>,
    #[pyo3(get)]
    predicted: f64,
    #[pyo3(get)]
    residual: Option<f64>,
}

impl From<&AngleStat> for PyAngleStat {
    fn from(s: &AngleStat) -> Self {
        Self {
            mean_theta: s.mean_theta,
            n_up: s.n_up,
            n_down: s.n_down,
            n_unsettled: s.n_unsettled,
            fraction_up: s.fraction_up,
            predicted: s.predicted,
            residual: s.residual,
        }
    }
}

#[pyclass(name = "SweepResult", module = "pyqspin", frozen)]
struct PySweepResult {
    result: SweepResult,
}

#[pymethods]
impl PySweepResult {
    #[getter]
    fn rms_residual(&self) -> Option<f64> {
        self.result.rms_residual
    }

    #[getter]
    fn stats(&self) -> Vec<PyAngleStat> {
        self.result.stats.iter().map(PyAngleStat::from).collect()
    }

    #[getter]
    fn total_unsettled(&self) -> usize {
        self.result.total_unsettled()
    }

    /// Same content as the `ensemble` command's sweep CSV.
    fn to_csv(&self) -> String {
        qspin::cli::sweep_csv(&self.result)
    }

    /// `(name, passed, detail)` for every validation check.
    #[pyo3(signature = (threshold = 0.07))]
    fn checks(&self, threshold: f64) -> Vec<(String, bool, String)> {
        let t = Thresholds {
            max_rms_residual: threshold,
            ..Thresholds::default()
        };
        check_sweep(&self.result, &t)
            .into_iter()
            .map(|c| (c.name, c.passed, c.detail))
            .collect()
    }
}

#[pyclass(name = "LyapunovEstimate", module = "pyqspin", frozen)]
struct PyLyapunov {
    /// `lambda` is reserved in Python.
    #[pyo3(get, name = "lambda_")]
    lambda: f64,
    #[pyo3(get)]
    r_squared: f64,
    #[pyo3(get)]
    intercept: f64,
    #[pyo3(get)]
    n_points: usize,
    #[pyo3(get)]
    saturated_at: Option<f64>,
    #[pyo3(get)]
    series: Vec<(f64, f64)>,
}

impl From<chaos::LyapunovEstimate> for PyLyapunov {
    fn from(e: chaos::LyapunovEstimate) -> Self {
        Self {
            lambda: e.lambda,
            r_squared: e.r_squared,
            intercept: e.intercept,
            n_points: e.n_points,
            saturated_at: e.saturated_at,
            series: e.series,
        }
    }
}

#[pymethods]
impl PyLyapunov {
    fn __repr__(&self) -> String {
        format!(
            "LyapunovEstimate(lambda_={}, r_squared={}, n_points={})",
            self.lambda, self.r_squared, self.n_points
        )
    }
}

#[pyfunction]
#[pyo3(signature = (theta, params = None))]
fn torque_sc(theta: f64, params: Option<PyRef<'_, PyModelParams>>) -> PyResult<f64> {
    Ok(model::torque_sc(theta, &params_or_default(params)?))
}

#[pyfunction]
#[pyo3(signature = (theta_j, theta_i, params = None))]
fn pair_coupling_torque(
    theta_j: f64,
    theta_i: f64,
    params: Option<PyRef<'_, PyModelParams>>,
) -> PyResult<f64> {
    Ok(model::pair_coupling_torque(
        theta_j,
        theta_i,
        &params_or_default(params)?,
    ))
}

#[pyfunction]
#[pyo3(signature = (theta_j, neighbor_thetas, params = None))]
fn torque_nn_vector_oracle(
    theta_j: f64,
    neighbor_thetas: Vec<f64>,
    params: Option<PyRef<'_, PyModelParams>>,
) -> PyResult<f64> {
    model::torque_nn_vector_oracle(theta_j, &neighbor_thetas, &params_or_default(params)?)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (theta, omega, params = None))]
fn total_energy(
    theta: Vec<f64>,
    omega: Vec<f64>,
    params: Option<PyRef<'_, PyModelParams>>,
) -> PyResult<f64> {
    let p = params_or_default(params)?;
    let table = NeighborTable::for_params(&p).map_err(to_py)?;
    let state = LatticeState::new(theta, omega).map_err(to_py)?;
    state.check_len(table.n_sites()).map_err(to_py)?;
    Ok(model::total_energy(&state, &p, &table))
}

#[pyfunction]
fn predicted_up(mean_theta: f64) -> f64 {
    ensemble::predicted_up(mean_theta)
}

#[pyfunction]
fn derive_trial_seed(base_seed: u64, angle_index: u64, trial_index: u64) -> u64 {
    ensemble::derive_trial_seed(base_seed, angle_index, trial_index)
}

/// One collapse run from a noisy start around `mean_theta`.
#[pyfunction]
#[pyo3(signature = (mean_theta, seed = 0, config = None, record = false))]
fn simulate(
    py: Python<'_>,
    mean_theta: f64,
    seed: u64,
    config: Option<PyRef<'_, PyConfig>>,
    record: bool,
) -> PyResult<PyTrajectory> {
    let cfg = config_or_default(config);
    let record = py
        .detach(|| {
            trajectory::simulate(
                mean_theta,
                seed,
                &cfg.model,
                &cfg.run,
                &cfg.integrator,
                record,
            )
        })
        .map_err(to_py)?;
    Ok(PyTrajectory { record })
}

/// Angle sweep with the configuration's `sweep` block.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn run_sweep(py: Python<'_>, config: Option<PyRef<'_, PyConfig>>) -> PyResult<PySweepResult> {
    let cfg = config_or_default(config);
    let result = py
        .detach(|| ensemble::run_sweep(&cfg.sweep, &cfg.model, &cfg.run, &cfg.integrator))
        .map_err(to_py)?;
    Ok(PySweepResult { result })
}

#[pyfunction]
#[pyo3(signature = (config = None))]
fn measure_lyapunov(py: Python<'_>, config: Option<PyRef<'_, PyConfig>>) -> PyResult<PyLyapunov> {
    let cfg = config_or_default(config);
    let est = py
        .detach(|| chaos::measure_lyapunov(&cfg.model, &cfg.chaos, &cfg.run, &cfg.integrator))
        .map_err(to_py)?;
    Ok(est.into())
}

/// Fits `(t, ln separation)` points over the configured window.
#[pyfunction]
#[pyo3(signature = (points, config = None))]
fn fit_lyapunov(
    points: Vec<(f64, f64)>,
    config: Option<PyRef<'_, PyConfig>>,
) -> PyResult<PyLyapunov> {
    let cfg = config_or_default(config);
    let series = DivergenceSeries::from_points(points).map_err(to_py)?;
    Ok(chaos::fit_lyapunov(&series, &cfg.chaos)
        .map_err(to_py)?
        .into())
}

#[pymodule]
fn pyqspin(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyAngleStat>()?;
    m.add_class::<PySweepResult>()?;
    m.add_class::<PyLyapunov>()?;
    m.add_function(wrap_pyfunction!(torque_sc, m)?)?;
    m.add_function(wrap_pyfunction!(pair_coupling_torque, m)?)?;
    m.add_function(wrap_pyfunction!(torque_nn_vector_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(total_energy, m)?)?;
    m.add_function(wrap_pyfunction!(predicted_up, m)?)?;
    m.add_function(wrap_pyfunction!(derive_trial_seed, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(measure_lyapunov, m)?)?;
    m.add_function(wrap_pyfunction!(fit_lyapunov, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn module_round_trip() {
        Python::initialize();
        Python::attach(|py| {
            let m = PyModule::new(py, "pyqspin").unwrap();
            pyqspin(&m).unwrap();
            let f = m.getattr("predicted_up").unwrap();
            let v: f64 = f.call1((0.0,)).unwrap().extract().unwrap();
            assert_eq!(v, 1.0);
            let cfg = m
                .getattr("Config")
                .unwrap()
                .call1((r#"{"run":{"noise_amp":0}}"#,))
                .unwrap();
            let traj = m
                .getattr("simulate")
                .unwrap()
                .call1((std::f64::consts::PI, 0u64, cfg))
                .unwrap();
            let outcome: String = traj.getattr("outcome").unwrap().extract().unwrap();
            assert_eq!(outcome, "Down");
            let err = m
                .getattr("Config")
                .unwrap()
                .call1((r#"{"model":{"rows":0}}"#,));
            assert!(err.unwrap_err().is_instance_of::<PyValueError>(py));
        });
    }

    #[test]
    fn error_mapping() {
        Python::initialize();
        Python::attach(|py| {
            assert!(to_py(qspin::Error::EmptyFitWindow(1)).is_instance_of::<PyValueError>(py));
            assert!(to_py(qspin::Error::NonFinite { t: 1.0 }).is_instance_of::<PyRuntimeError>(py));
        });
    }
}
