//! Python bindings: configuration handling, the end-to-end optimizer, the
//! rectenna model and the CSV experiment runners.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use bdris_wpt::beamforming::alternating_optimize;
use bdris_wpt::channel::generate_channel_set;
use bdris_wpt::config::{BeamformerKind, SystemConfig};
use bdris_wpt::error::Error;
use bdris_wpt::experiments;
use bdris_wpt::rectenna::{idc, CascadeChannel, Waveform};

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Config(_) | Error::Contract(_) | Error::Domain(_) => {
            PyValueError::new_err(err.to_string())
        }
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

/// Full experiment configuration; build from a preset or a TOML string.
#[pyclass(name = "Config", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: SystemConfig,
}

#[pymethods]
impl PyConfig {
    /// Named preset: "paper-wifi" or "desk".
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        Ok(Self { inner: SystemConfig::preset(name).map_err(to_py_err)? })
    }

    /// Parse a TOML configuration string.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self { inner: SystemConfig::from_toml(text).map_err(to_py_err)? })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn elements(&self) -> usize {
        self.inner.geometry.m
    }

    #[setter]
    fn set_elements(&mut self, m: usize) {
        self.inner.geometry.m = m;
    }

    #[getter]
    fn subcarriers(&self) -> usize {
        self.inner.carrier.n
    }

    #[setter]
    fn set_subcarriers(&mut self, n: usize) {
        self.inner.carrier.n = n;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }

    #[setter]
    fn set_kappa(&mut self, kappa: f64) {
        self.inner.kappa = kappa;
    }

    #[getter]
    fn p_t(&self) -> f64 {
        self.inner.p_t
    }

    #[setter]
    fn set_p_t(&mut self, watts: f64) {
        self.inner.p_t = watts;
    }

    #[getter]
    fn realizations(&self) -> usize {
        self.inner.realizations
    }

    #[setter]
    fn set_realizations(&mut self, r: usize) {
        self.inner.realizations = r;
    }

    #[getter]
    fn algorithm(&self) -> &'static str {
        self.inner.beamformer.kind.label()
    }

    #[setter]
    fn set_algorithm(&mut self, name: &str) -> PyResult<()> {
        self.inner.beamformer.kind = BeamformerKind::parse(name).map_err(to_py_err)?;
        Ok(())
    }

    /// Raises ValueError when any field is out of range.
    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(elements={}, subcarriers={}, algorithm='{}', seed={})",
            self.inner.geometry.m,
            self.inner.carrier.n,
            self.inner.beamformer.kind.label(),
            self.inner.seed
        )
    }
}

/// Outcome of one end-to-end optimization.
#[pyclass(name = "Report")]
struct PyReport {
    /// DC current of the returned feasible surface.
    #[pyo3(get)]
    idc: f64,
    /// Exact DC current after each outer iteration (non-decreasing).
    #[pyo3(get)]
    trace: Vec<f64>,
    /// Dominant-eigenvalue share of the final relaxation solution, when the
    /// algorithm solves one.
    #[pyo3(get)]
    dr: Option<f64>,
    #[pyo3(get)]
    unitarity_residual: f64,
    #[pyo3(get)]
    symmetry_residual: f64,
    #[pyo3(get)]
    converged: bool,
    /// Final scattering matrix, row-major nested lists of complex numbers.
    #[pyo3(get)]
    scattering: Vec<Vec<Complex64>>,
    /// Optimized transmit waveform, one complex weight per subcarrier.
    #[pyo3(get)]
    waveform: Vec<Complex64>,
}

#[pymethods]
impl PyReport {
    fn __repr__(&self) -> String {
        format!("Report(idc={:.6e}, converged={})", self.idc, self.converged)
    }
}

/// Run the alternating waveform/surface optimizer on one channel realization.
#[pyfunction]
#[pyo3(signature = (config, realization = 0))]
fn optimize(config: &PyConfig, realization: u64) -> PyResult<PyReport> {
    let ch = generate_channel_set(&config.inner, realization).map_err(to_py_err)?;
    let report = alternating_optimize(&ch, &config.inner).map_err(to_py_err)?;
    let m = report.scattering.theta.nrows();
    let scattering = (0..m)
        .map(|i| (0..m).map(|j| report.scattering.theta[(i, j)]).collect())
        .collect();
    Ok(PyReport {
        idc: report.idc,
        trace: report.trace,
        dr: report.dr,
        unitarity_residual: report.unitarity_residual,
        symmetry_residual: report.symmetry_residual,
        converged: report.converged,
        scattering,
        waveform: report.waveform.s,
    })
}

/// Monte-Carlo batch over `config.realizations` seeds; returns
/// `(mean_idc, std_idc, per_realization_idc)`.
#[pyfunction]
fn run_batch(config: &PyConfig) -> PyResult<(f64, f64, Vec<f64>)> {
    let result = experiments::run_batch(&config.inner).map_err(to_py_err)?;
    let per = result.reports.iter().map(|r| r.idc).collect();
    Ok((result.mean_idc, result.std_idc, per))
}

/// Closed-form DC current of a waveform `s` through a cascade channel `h`.
#[pyfunction]
#[pyo3(signature = (s, h, k2 = 0.17, k4 = 957.25))]
fn dc_current(s: Vec<Complex64>, h: Vec<Complex64>, k2: f64, k4: f64) -> PyResult<f64> {
    let params = bdris_wpt::config::RectifierParams { k2, k4 };
    idc(&Waveform::new(s), &CascadeChannel::new(h), &params).map_err(to_py_err)
}

fn artifacts_to_py(artifacts: Vec<experiments::CsvArtifact>) -> Vec<(String, String)> {
    artifacts.into_iter().map(|a| (a.name, a.text)).collect()
}

fn parse_kinds(names: Vec<String>) -> PyResult<Vec<BeamformerKind>> {
    names
        .iter()
        .map(|n| BeamformerKind::parse(n).map_err(to_py_err))
        .collect()
}

/// Convergence traces on one pinned realization; returns `[(name, csv)]`.
#[pyfunction]
fn run_convergence(config: &PyConfig, algorithms: Vec<String>) -> PyResult<Vec<(String, String)>> {
    let kinds = parse_kinds(algorithms)?;
    experiments::run_convergence(&config.inner, &kinds)
        .map(artifacts_to_py)
        .map_err(to_py_err)
}

/// Mean DC current versus element count; returns `[(name, csv)]`.
#[pyfunction]
fn sweep_m(
    config: &PyConfig,
    values: Vec<usize>,
    algorithms: Vec<String>,
) -> PyResult<Vec<(String, String)>> {
    let kinds = parse_kinds(algorithms)?;
    experiments::sweep_m(&config.inner, &values, &kinds)
        .map(artifacts_to_py)
        .map_err(to_py_err)
}

/// dBm to linear watts.
#[pyfunction]
fn dbm_to_watts(dbm: f64) -> f64 {
    bdris_wpt::config::dbm_to_watts(dbm)
}

/// Linear watts to dBm.
#[pyfunction]
fn watts_to_dbm(watts: f64) -> f64 {
    bdris_wpt::config::watts_to_dbm(watts)
}

#[pymodule]
fn bdris_wpt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(run_batch, m)?)?;
    m.add_function(wrap_pyfunction!(dc_current, m)?)?;
    m.add_function(wrap_pyfunction!(run_convergence, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_m, m)?)?;
    m.add_function(wrap_pyfunction!(dbm_to_watts, m)?)?;
    m.add_function(wrap_pyfunction!(watts_to_dbm, m)?)?;
    Ok(())
}
