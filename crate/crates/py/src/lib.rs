//! Python bindings: model fitting, APC monitoring, and shift diagnosis.
//!
//! Matrices cross the boundary as lists of rows (lists of floats), vectors
//! as flat lists. Results that bundle several fields come back as dicts.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use streamspc::diagnosis::{self, DiagnosisResult, PathConfig};
use streamspc::monitoring::{
    self, AlarmTarget, CalibrationMode, CalibrationReport, EwmaVarianceMode, MonitorConfig,
    MonitorState, Observation,
};
use streamspc::pca::PCModel;

fn err(e: streamspc::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("matrix must have at least one row"));
    }
    let p = rows[0].len();
    if p == 0 {
        return Err(PyValueError::new_err("matrix rows must be non-empty"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != p) {
        return Err(PyValueError::new_err(format!(
            "row {i} has {} entries, expected {p}",
            rows[i].len()
        )));
    }
    let mut m = DMatrix::zeros(rows.len(), p);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn parse_variance_mode(name: &str) -> PyResult<EwmaVarianceMode> {
    match name {
        "paper" => Ok(EwmaVarianceMode::Paper),
        "asymptotic" => Ok(EwmaVarianceMode::Asymptotic),
        "exact_time_varying" => Ok(EwmaVarianceMode::ExactTimeVarying),
        other => Err(PyValueError::new_err(format!(
            "unknown variance mode {other:?}; expected paper, asymptotic, or exact_time_varying"
        ))),
    }
}

fn variance_mode_name(mode: EwmaVarianceMode) -> &'static str {
    match mode {
        EwmaVarianceMode::Paper => "paper",
        EwmaVarianceMode::Asymptotic => "asymptotic",
        EwmaVarianceMode::ExactTimeVarying => "exact_time_varying",
    }
}

fn parse_calibration_mode(name: &str) -> PyResult<CalibrationMode> {
    match name {
        "analytic" => Ok(CalibrationMode::Analytic),
        "monte_carlo" => Ok(CalibrationMode::MonteCarlo),
        "auto" => Ok(CalibrationMode::Auto),
        other => Err(PyValueError::new_err(format!(
            "unknown calibration mode {other:?}; expected analytic, monte_carlo, or auto"
        ))),
    }
}

fn calibration_mode_name(mode: CalibrationMode) -> &'static str {
    match mode {
        CalibrationMode::Analytic => "analytic",
        CalibrationMode::MonteCarlo => "monte_carlo",
        CalibrationMode::Auto => "auto",
    }
}

/// Principal component model of the in-control stream covariance.
#[pyclass(name = "PCModel", frozen)]
struct PyPcModel {
    inner: PCModel,
}

#[pymethods]
impl PyPcModel {
    /// Fit from an n x p sample matrix (rows are observations).
    #[staticmethod]
    #[pyo3(signature = (samples, eig_floor=None))]
    fn fit(samples: Vec<Vec<f64>>, eig_floor: Option<f64>) -> PyResult<Self> {
        let m = matrix_from_rows(&samples)?;
        let inner = match eig_floor {
            Some(f) => PCModel::fit(&m, f),
            None => PCModel::fit_default_floor(&m),
        }
        .map_err(err)?;
        Ok(PyPcModel { inner })
    }

    /// Build from a known mean vector and covariance matrix.
    #[staticmethod]
    #[pyo3(signature = (mean, cov, eig_floor=None))]
    fn from_known(mean: Vec<f64>, cov: Vec<Vec<f64>>, eig_floor: Option<f64>) -> PyResult<Self> {
        let c = matrix_from_rows(&cov)?;
        let mu = DVector::from_vec(mean);
        let inner = match eig_floor {
            Some(f) => PCModel::from_known(mu, &c, f),
            None => PCModel::from_known_default_floor(mu, &c),
        }
        .map_err(err)?;
        Ok(PyPcModel { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyPcModel { inner: PCModel::load(std::path::Path::new(path)).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(std::path::Path::new(path)).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyPcModel { inner: PCModel::from_json(text).map_err(err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        vec_of(self.inner.mean())
    }

    #[getter]
    fn eigvals(&self) -> Vec<f64> {
        vec_of(self.inner.eigvals())
    }

    #[getter]
    fn eig_floor(&self) -> f64 {
        self.inner.eig_floor()
    }

    /// Project one observation; returns {"raw": ..., "standardized": ...}.
    fn project<'py>(&self, py: Python<'py>, x: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let scores = self.inner.project(&DVector::from_vec(x)).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("raw", vec_of(&scores.raw))?;
        d.set_item("standardized", vec_of(&scores.standardized))?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("PCModel(dim={})", self.inner.dim())
    }
}

/// Calibrated control limit plus the settings that produced it.
#[pyclass(name = "Calibration", frozen)]
struct PyCalibration {
    inner: CalibrationReport,
}

#[pymethods]
impl PyCalibration {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyCalibration { inner: CalibrationReport::from_json(text).map_err(err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn nu(&self) -> f64 {
        self.inner.nu
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn r0(&self) -> f64 {
        self.inner.r0
    }

    #[getter]
    fn mode(&self) -> &'static str {
        calibration_mode_name(self.inner.mode)
    }

    #[getter]
    fn variance_mode(&self) -> &'static str {
        variance_mode_name(self.inner.variance_mode)
    }

    #[getter]
    fn reps(&self) -> usize {
        self.inner.reps
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn empirical_arl(&self) -> Option<f64> {
        self.inner.empirical_arl
    }

    #[getter]
    fn target_arl(&self) -> f64 {
        self.inner.target_arl
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    fn __repr__(&self) -> String {
        format!(
            "Calibration(r0={}, nu={}, gamma={}, mode={})",
            self.inner.r0,
            self.inner.nu,
            self.inner.gamma,
            calibration_mode_name(self.inner.mode)
        )
    }
}

/// Stateful control chart: feed observations, read alarms.
#[pyclass(name = "Monitor")]
struct PyMonitor {
    model: PCModel,
    cfg: MonitorConfig,
    state: MonitorState,
    with_contributions: bool,
}

#[pymethods]
impl PyMonitor {
    #[new]
    #[pyo3(signature = (model, calibration, with_contributions=false))]
    fn new(
        model: &PyPcModel,
        calibration: &PyCalibration,
        with_contributions: bool,
    ) -> PyResult<Self> {
        let rep = &calibration.inner;
        let cfg = MonitorConfig::new(rep.gamma, rep.nu, AlarmTarget::Alpha(rep.alpha))
            .map_err(err)?
            .with_variance_mode(rep.variance_mode);
        let state = MonitorState::new(model.inner.dim(), rep.r0).map_err(err)?;
        Ok(PyMonitor { model: model.inner.clone(), cfg, state, with_contributions })
    }

    /// Advance one observation; returns {"t", "r", "r0", "alarm"[, "contributions"]}.
    fn step<'py>(&mut self, py: Python<'py>, values: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let obs = Observation { values: DVector::from_vec(values), t: self.state.t() + 1 };
        let pt = monitoring::monitor_step(
            &mut self.state,
            &self.model,
            &obs,
            &self.cfg,
            self.with_contributions,
        )
        .map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("t", pt.t)?;
        d.set_item("r", pt.r)?;
        d.set_item("r0", pt.r0)?;
        d.set_item("alarm", pt.alarm)?;
        if let Some(c) = pt.contributions {
            d.set_item("contributions", c)?;
        }
        Ok(d)
    }

    /// Drop accumulated state, keeping the model and limit.
    fn reset(&mut self) -> PyResult<()> {
        self.state = MonitorState::new(self.model.dim(), self.state.r0()).map_err(err)?;
        Ok(())
    }

    #[getter]
    fn t(&self) -> u64 {
        self.state.t()
    }

    #[getter]
    fn r0(&self) -> f64 {
        self.state.r0()
    }

    #[getter]
    fn tripped(&self) -> bool {
        self.state.tripped()
    }

    #[getter]
    fn first_alarm(&self) -> Option<u64> {
        self.state.first_alarm()
    }
}

/// Choose the control limit for a model; exactly one of alpha / target_arl.
#[pyfunction]
#[pyo3(signature = (model, gamma, nu, alpha=None, target_arl=None, mode="auto",
                    variance_mode="paper", reps=1000, seed=42))]
#[allow(clippy::too_many_arguments)]
fn calibrate(
    model: &PyPcModel,
    gamma: f64,
    nu: f64,
    alpha: Option<f64>,
    target_arl: Option<f64>,
    mode: &str,
    variance_mode: &str,
    reps: usize,
    seed: u64,
) -> PyResult<PyCalibration> {
    let target = match (alpha, target_arl) {
        (Some(a), None) => AlarmTarget::Alpha(a),
        (None, Some(l)) => AlarmTarget::TargetArl(l),
        _ => {
            return Err(PyValueError::new_err(
                "exactly one of alpha and target_arl must be given",
            ))
        }
    };
    let cfg = MonitorConfig::new(gamma, nu, target)
        .map_err(err)?
        .with_variance_mode(parse_variance_mode(variance_mode)?)
        .with_calibration(parse_calibration_mode(mode)?);
    let report = monitoring::calibrate(&model.inner, &cfg, reps, seed).map_err(err)?;
    Ok(PyCalibration { inner: report })
}

/// Moments of max(0, X - nu) for X ~ chi-square(1):
/// {"mean", "second_moment", "variance"}.
#[pyfunction]
fn threshold_moments<'py>(py: Python<'py>, nu: f64) -> PyResult<Bound<'py, PyDict>> {
    let m = monitoring::threshold_moments(nu).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("mean", m.mean)?;
    d.set_item("second_moment", m.second_moment)?;
    d.set_item("variance", m.variance)?;
    Ok(d)
}

/// Asymptotic control limit R0 = p mu(nu) + sqrt(p) sigma(nu) z_(1-alpha).
#[pyfunction]
fn control_limit_analytic(p: usize, nu: f64, alpha: f64) -> PyResult<f64> {
    monitoring::control_limit_analytic(p, nu, alpha).map_err(err)
}

/// Threshold nu with tail probability `significance` under chi-square(1).
#[pyfunction]
fn nu_from_significance(significance: f64) -> PyResult<f64> {
    monitoring::nu_from_significance(significance).map_err(err)
}

fn diagnosis_dict<'py>(py: Python<'py>, res: &DiagnosisResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("support", res.best.support.clone())?;
    d.set_item("mu_hat", vec_of(&res.best.mu_hat))?;
    d.set_item("r", res.best.r)?;
    d.set_item("bic", res.best_bic)?;
    d.set_item("iterations", res.best.iterations)?;
    d.set_item("converged", res.best.converged)?;
    d.set_item("objective", res.best.objective)?;
    let trace: Vec<(f64, f64, usize)> =
        res.bic_trace.iter().map(|pt| (pt.r, pt.bic, pt.support_size)).collect();
    d.set_item("bic_trace", trace)?;
    d.set_item("pilot", vec_of(&res.pilot))?;
    d.set_item("degenerate_pilot", res.degenerate_pilot)?;
    d.set_item("n_unconverged", res.n_unconverged)?;
    Ok(d)
}

fn path_config(
    n_points: usize,
    decades: f64,
    tol: f64,
    max_iter: usize,
    bic_penalty_factor: Option<f64>,
) -> PathConfig {
    PathConfig {
        n_points,
        decades,
        tol,
        max_iter,
        bic_penalty_factor: bic_penalty_factor
            .unwrap_or(diagnosis::DEFAULT_BIC_PENALTY_FACTOR),
    }
}

/// Locate shifted variables from an out-of-control window (rows are
/// observations). Works in the whitened score domain.
#[pyfunction]
#[pyo3(signature = (model, window, n_points=50, decades=4.0, tol=1e-6, max_iter=10_000,
                    bic_penalty_factor=None))]
#[allow(clippy::too_many_arguments)]
fn diagnose<'py>(
    py: Python<'py>,
    model: &PyPcModel,
    window: Vec<Vec<f64>>,
    n_points: usize,
    decades: f64,
    tol: f64,
    max_iter: usize,
    bic_penalty_factor: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let w = matrix_from_rows(&window)?;
    let cfg = path_config(n_points, decades, tol, max_iter, bic_penalty_factor);
    let res = diagnosis::diagnose(&model.inner, &w, &cfg).map_err(err)?;
    diagnosis_dict(py, &res)
}

/// Same selection machinery run on marginally standardized deviations.
#[pyfunction]
#[pyo3(signature = (model, window, n_points=50, decades=4.0, tol=1e-6, max_iter=10_000,
                    bic_penalty_factor=None))]
#[allow(clippy::too_many_arguments)]
fn diagnose_leb<'py>(
    py: Python<'py>,
    model: &PyPcModel,
    window: Vec<Vec<f64>>,
    n_points: usize,
    decades: f64,
    tol: f64,
    max_iter: usize,
    bic_penalty_factor: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let w = matrix_from_rows(&window)?;
    let cfg = path_config(n_points, decades, tol, max_iter, bic_penalty_factor);
    let res = diagnosis::diagnose_leb(&model.inner, &w, &cfg).map_err(err)?;
    diagnosis_dict(py, &res)
}

#[pymodule]
fn streamspc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPcModel>()?;
    m.add_class::<PyCalibration>()?;
    m.add_class::<PyMonitor>()?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_moments, m)?)?;
    m.add_function(wrap_pyfunction!(control_limit_analytic, m)?)?;
    m.add_function(wrap_pyfunction!(nu_from_significance, m)?)?;
    m.add_function(wrap_pyfunction!(diagnose, m)?)?;
    m.add_function(wrap_pyfunction!(diagnose_leb, m)?)?;
    m.add("DEFAULT_EIG_FLOOR_REL", streamspc::pca::DEFAULT_EIG_FLOOR_REL)?;
    m.add("DEFAULT_BIC_PENALTY_FACTOR", diagnosis::DEFAULT_BIC_PENALTY_FACTOR)?;
    Ok(())
}
