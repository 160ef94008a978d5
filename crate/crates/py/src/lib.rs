//! Python bindings: configs, synthesis, simulation and verification.

use std::path::PathBuf;

use dynalloc::benchmark::Example;
use dynalloc::cli::bench;
use dynalloc::config::Config;
use dynalloc::error::Error;
use dynalloc::result::{Mode, SynthesisResult};
use dynalloc::sim::{self, DisturbanceSignal, Metrics, Trajectory};
use dynalloc::synthesis;
use dynalloc::verify::{self as checks, Check, Report};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Solver(_) | Error::Divergence(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn example(name: &str) -> PyResult<Example> {
    match name {
        "satellite-disturbed" => Ok(Example::Disturbed),
        "satellite-robust" => Ok(Example::Robust),
        other => Err(PyValueError::new_err(format!(
            "unknown example '{other}' (expected satellite-disturbed or satellite-robust)"
        ))),
    }
}

/// Validated problem configuration.
#[pyclass(name = "Config", module = "dynalloc")]
#[derive(Clone)]
struct PyConfig {
    inner: Config,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Config::from_json(text, "<string>").map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: Config::load(&path).map_err(py_err)?,
        })
    }

    /// Embedded benchmark: `satellite-disturbed` or `satellite-robust`.
    #[staticmethod]
    fn satellite(name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Config::satellite(example(name)?).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| py_err(e.into()))
    }

    #[getter]
    fn name(&self) -> Option<String> {
        self.inner.name.clone()
    }

    /// Closed-loop order `n = n_p + n_c + n_f`.
    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.synthesis.mode.to_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(name={:?}, n={}, mode={})",
            self.inner.name,
            self.inner.n(),
            self.inner.synthesis.mode
        )
    }
}

/// Gains with their optional certificate.
#[pyclass(name = "SynthesisResult", module = "dynalloc")]
#[derive(Clone)]
struct PySynthesisResult {
    inner: SynthesisResult,
}

#[pymethods]
impl PySynthesisResult {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: dynalloc::io::parse_json(text, "<string>").map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: dynalloc::io::read_json(&path).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| py_err(e.into()))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        dynalloc::io::write_json(&path, &self.inner).map_err(py_err)
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.mode.to_string()
    }

    #[getter]
    fn status(&self) -> Option<String> {
        self.inner.diagnostics.status.map(|s| s.to_string())
    }

    #[getter]
    fn k_f(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.k_f)
    }

    #[getter]
    fn e_c(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.e_c)
    }

    #[getter]
    fn e_f(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.e_f)
    }

    #[getter]
    fn gamma(&self) -> Option<f64> {
        self.inner.certificate.as_ref().map(|c| c.gamma)
    }

    #[getter]
    fn mu(&self) -> Option<f64> {
        self.inner.certificate.as_ref().and_then(|c| c.mu)
    }

    #[getter]
    fn lambda_(&self) -> Option<f64> {
        self.inner.certificate.as_ref().and_then(|c| c.lambda)
    }

    /// `P`, or one `P_i` per vertex.
    #[getter]
    fn p(&self) -> Option<Vec<Vec<Vec<f64>>>> {
        self.inner.certificate.as_ref().map(|c| c.p.iter().map(rows).collect())
    }

    #[getter]
    fn worst_residual(&self) -> f64 {
        self.inner.diagnostics.worst_residual
    }

    #[getter]
    fn solve_time(&self) -> f64 {
        self.inner.diagnostics.solve_time
    }

    fn __repr__(&self) -> String {
        format!(
            "SynthesisResult(mode={}, status={}, gamma={})",
            self.inner.mode,
            self.status().unwrap_or_else(|| "None".into()),
            self.gamma().map_or("None".into(), |g| g.to_string())
        )
    }
}

/// Sampled closed-loop trajectory.
#[pyclass(name = "Trajectory", module = "dynalloc")]
struct PyTrajectory {
    inner: Trajectory,
    metrics: Metrics,
}

fn columns(v: &[DVector<f64>]) -> Vec<Vec<f64>> {
    v.iter().map(|x| x.iter().copied().collect()).collect()
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn t(&self) -> Vec<f64> {
        self.inner.t.clone()
    }

    /// State samples, one list per time.
    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        columns(&self.inner.x)
    }

    #[getter]
    fn y_f(&self) -> Vec<Vec<f64>> {
        columns(&self.inner.y_f)
    }

    #[getter]
    fn sat(&self) -> Vec<Vec<f64>> {
        columns(&self.inner.sat)
    }

    #[getter]
    fn v(&self) -> Option<Vec<f64>> {
        self.inner.v.clone()
    }

    #[getter]
    fn energy(&self) -> f64 {
        self.metrics.energy
    }

    #[getter]
    fn actuator_usage(&self) -> Vec<f64> {
        self.metrics.actuator_usage.clone()
    }

    #[getter]
    fn terminal_state_norm(&self) -> f64 {
        self.metrics.terminal_state_norm
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_csv(&mut buf).map_err(|e| py_err(e.into()))?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

fn check_tuple(c: &Check) -> (String, String, f64, String) {
    (c.name.clone(), c.status.to_string(), c.margin, c.detail.clone())
}

/// Verification report: `(name, status, margin, detail)` per check.
#[pyclass(name = "Report", module = "dynalloc")]
struct PyReport {
    inner: Report,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn passed(&self) -> bool {
        self.inner.passed()
    }

    #[getter]
    fn checks(&self) -> Vec<(String, String, f64, String)> {
        self.inner.checks.iter().map(check_tuple).collect()
    }

    fn failures(&self) -> Vec<(String, String, f64, String)> {
        self.inner.failures().map(check_tuple).collect()
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }
}

/// Synthesize gains for `config`, optionally overriding the mode.
#[pyfunction]
#[pyo3(signature = (config, mode=None))]
fn synthesize(py: Python<'_>, config: &PyConfig, mode: Option<&str>) -> PyResult<PySynthesisResult> {
    let cfg = &config.inner;
    let cl = cfg.closed_loop().map_err(py_err)?;
    let dist = cfg.disturbance_class().map_err(py_err)?;
    let mut options = cfg.options().map_err(py_err)?;
    if let Some(mode) = mode {
        options.mode = mode.parse::<Mode>().map_err(py_err)?;
    }
    let result = py
        .allow_threads(|| synthesis::synthesize(&cl, dist.as_ref(), &options))
        .map_err(py_err)?;
    Ok(PySynthesisResult { inner: result })
}

/// Simulate the config scenario with the given gains.
#[pyfunction]
#[pyo3(signature = (config, gains, theta=None, x0=None, t_final=None, dt=None, disturbance=true, baseline=false))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    config: &PyConfig,
    gains: &PySynthesisResult,
    theta: Option<f64>,
    x0: Option<Vec<f64>>,
    t_final: Option<f64>,
    dt: Option<f64>,
    disturbance: bool,
    baseline: bool,
) -> PyResult<PyTrajectory> {
    let cfg = &config.inner;
    let cl = cfg.closed_loop().map_err(py_err)?;
    let x0 = x0.map_or_else(|| cfg.x0(), DVector::from_vec);
    let signal = if disturbance {
        cfg.signal().map_err(py_err)?
    } else {
        DisturbanceSignal::Zero { n_w: cl.n_w() }
    };
    let alpha = theta.map(|t| cfg.theta_weights(t)).transpose().map_err(py_err)?;
    let t_final = t_final.unwrap_or(cfg.scenario.t_final);
    let dt = dt.unwrap_or(cfg.scenario.dt);
    let gains = &gains.inner;
    let traj = py
        .allow_threads(|| {
            if baseline {
                sim::static_baseline_at(&cl, &gains.e_c, alpha.as_deref(), &x0, &signal, t_final, dt)
            } else {
                sim::simulate(&cl, gains, alpha.as_deref(), &x0, &signal, t_final, dt)
            }
        })
        .map_err(py_err)?;
    let r = cfg.disturbance_class().map_err(py_err)?.map(|d| d.r);
    let metrics = Metrics::compute(&traj, &cl.w(), r.as_ref());
    Ok(PyTrajectory { inner: traj, metrics })
}

/// Vertex stability plus, when the gains carry one, the certificate checks.
#[pyfunction]
#[pyo3(signature = (config, gains, abscissa_threshold=None))]
fn verify(config: &PyConfig, gains: &PySynthesisResult, abscissa_threshold: Option<f64>) -> PyResult<PyReport> {
    let cfg = &config.inner;
    let cl = cfg.closed_loop().map_err(py_err)?;
    let dist = cfg.disturbance_class().map_err(py_err)?;
    let gains = &gains.inner;
    let threshold = abscissa_threshold.unwrap_or(if gains.certificate.is_some() {
        0.0
    } else {
        checks::PRINTED_GAIN_ABSCISSA
    });
    let mut report = Report::default();
    report.extend_prefixed(
        "closed loop",
        checks::check_vertex_stability(&cl, &gains.k_f, threshold).map_err(py_err)?,
    );
    if gains.certificate.is_some() {
        let cert = checks::check_lmi_certificate(&cl, gains, gains.mode, dist.as_ref()).map_err(py_err)?;
        report.extend_prefixed("certificate", cert);
    }
    Ok(PyReport { inner: report })
}

/// Run a satellite benchmark; writes the report directory when `out` is given.
#[pyfunction]
#[pyo3(signature = (name, out=None))]
fn run_bench(py: Python<'_>, name: &str, out: Option<PathBuf>) -> PyResult<(PySynthesisResult, PyReport)> {
    let ex = example(name)?;
    let run = py.allow_threads(|| bench::run(ex, None)).map_err(py_err)?;
    if let Some(dir) = out {
        bench::write(&run, &dir).map_err(py_err)?;
    }
    Ok((PySynthesisResult { inner: run.result }, PyReport { inner: run.report }))
}

/// Published gains of a satellite example, without certificate.
#[pyfunction]
fn paper_gains(name: &str) -> PyResult<PySynthesisResult> {
    let ex = example(name)?;
    let (e_c, e_f, k_f) = dynalloc::benchmark::paper_gains(ex);
    let mode = match ex {
        Example::Disturbed => Mode::Disturbed,
        Example::Robust => Mode::Robust,
    };
    Ok(PySynthesisResult {
        inner: SynthesisResult::from_gains(mode, k_f, e_c, e_f),
    })
}

#[pymodule]
#[pyo3(name = "dynalloc")]
fn dynalloc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PySynthesisResult>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    m.add_function(wrap_pyfunction!(paper_gains, m)?)?;
    Ok(())
}
