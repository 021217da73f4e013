//! Python module `cmat`: parameters, evolution, adiabatic thresholds, the
//! loss model, sweeps and the self-check suite.

use cmat_core::adiabatic::{self, AdiabaticFactors as CoreFactors};
use cmat_core::dynamics::{self, SimConfig as CoreSimConfig, SimResult as CoreSimResult};
use cmat_core::{eigensystem, lossmodel, model, sweep, validate};
use cmat_core::{Binding, CmatError, CqedParams as CoreParams, Objective, PulseSchedule as CoreSchedule};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: CmatError) -> PyErr {
    match e {
        CmatError::InvalidParameter { .. } | CmatError::UndefinedCooperativity { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

#[pyclass(frozen, skip_from_py_object, name = "CqedParams", module = "cmat")]
#[derive(Clone, Copy)]
struct CqedParams(CoreParams);

#[pymethods]
impl CqedParams {
    #[new]
    fn new(g: f64, kappa: f64, gamma: f64) -> PyResult<Self> {
        CoreParams::new(g, kappa, gamma).map(CqedParams).map_err(to_py)
    }

    /// Rates with `gamma = 1` and `kappa = g^2 / (2 C)`.
    #[staticmethod]
    fn from_cooperativity(g: f64, cooperativity: f64) -> PyResult<Self> {
        CoreParams::from_cooperativity(g, cooperativity).map(CqedParams).map_err(to_py)
    }

    #[getter]
    fn g(&self) -> f64 {
        self.0.g()
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.0.kappa()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.0.gamma()
    }

    fn cooperativity(&self) -> PyResult<f64> {
        self.0.cooperativity().map_err(to_py)
    }

    fn upper_bound(&self) -> PyResult<f64> {
        self.0.upper_bound().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("CqedParams(g={}, kappa={}, gamma={})", self.0.g(), self.0.kappa(), self.0.gamma())
    }
}

#[pyclass(frozen, skip_from_py_object, name = "PulseSchedule", module = "cmat")]
#[derive(Clone, Copy)]
struct PulseSchedule(CoreSchedule);

#[pymethods]
impl PulseSchedule {
    #[new]
    #[pyo3(signature = (omega0, tau, halfwidth = model::DEFAULT_HALFWIDTH))]
    fn new(omega0: f64, tau: f64, halfwidth: f64) -> PyResult<Self> {
        CoreSchedule::with_halfwidth(omega0, tau, halfwidth).map(PulseSchedule).map_err(to_py)
    }

    #[getter]
    fn omega0(&self) -> f64 {
        self.0.omega0()
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.0.tau()
    }

    #[getter]
    fn halfwidth(&self) -> f64 {
        self.0.halfwidth()
    }

    /// `(Omega_1(t), Omega_2(t))`.
    fn rabi(&self, t: f64) -> (f64, f64) {
        self.0.rabi(t)
    }

    fn __repr__(&self) -> String {
        format!("PulseSchedule(omega0={}, tau={}, halfwidth={})", self.0.omega0(), self.0.tau(), self.0.halfwidth())
    }
}

#[pyclass(frozen, skip_from_py_object, name = "SimConfig", module = "cmat")]
#[derive(Clone, Copy)]
struct SimConfig(CoreSimConfig);

#[pymethods]
impl SimConfig {
    #[new]
    #[pyo3(signature = (rel_tol = 1e-9, abs_tol = 1e-12, max_step = None, sample_count = 1000))]
    fn new(rel_tol: f64, abs_tol: f64, max_step: Option<f64>, sample_count: usize) -> PyResult<Self> {
        let cfg = CoreSimConfig { rel_tol, abs_tol, max_step, sample_count };
        cfg.validate().map_err(to_py)?;
        Ok(SimConfig(cfg))
    }

    #[getter]
    fn rel_tol(&self) -> f64 {
        self.0.rel_tol
    }

    #[getter]
    fn sample_count(&self) -> usize {
        self.0.sample_count
    }
}

#[pyclass(frozen, name = "SimResult", module = "cmat")]
struct SimResult(CoreSimResult);

#[pymethods]
impl SimResult {
    #[getter]
    fn fidelity(&self) -> f64 {
        self.0.fidelity
    }

    #[getter]
    fn norm_final(&self) -> f64 {
        self.0.norm_final
    }

    #[getter]
    fn success_probability(&self) -> f64 {
        self.0.success_probability
    }

    #[getter]
    fn i_a(&self) -> f64 {
        self.0.i_a
    }

    #[getter]
    fn i_cav(&self) -> f64 {
        self.0.i_cav
    }

    #[getter]
    fn steps(&self) -> usize {
        self.0.steps
    }

    fn budget_error(&self) -> f64 {
        self.0.budget_error()
    }

    /// Final unnormalized amplitudes in the order ug0, gu0, eg0, ge0, gg1.
    fn final_state(&self) -> Vec<Complex64> {
        self.0.final_state.amps.to_vec()
    }

    fn times(&self) -> Vec<f64> {
        self.0.samples.iter().map(|s| s.t).collect()
    }

    /// Populations per sample, one row of five per time.
    fn populations(&self) -> Vec<[f64; 5]> {
        self.0.samples.iter().map(|s| s.amps.map(|a| a.norm_sqr())).collect()
    }

    fn norms(&self) -> Vec<f64> {
        self.0.samples.iter().map(|s| s.norm).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "SimResult(fidelity={}, success_probability={}, norm_final={})",
            self.0.fidelity, self.0.success_probability, self.0.norm_final
        )
    }
}

fn config(cfg: Option<PyRef<'_, SimConfig>>) -> CoreSimConfig {
    cfg.map(|c| c.0).unwrap_or_default()
}

/// Evolves from `|u,g,0>` across the pulse window.
#[pyfunction]
#[pyo3(signature = (params, schedule, cfg = None))]
fn evolve(
    py: Python<'_>,
    params: PyRef<'_, CqedParams>,
    schedule: PyRef<'_, PulseSchedule>,
    cfg: Option<PyRef<'_, SimConfig>>,
) -> PyResult<SimResult> {
    let (p, s, c) = (params.0, schedule.0, config(cfg));
    py.detach(|| dynamics::evolve(&p, &s, &c)).map(SimResult).map_err(to_py)
}

#[pyfunction]
fn tau0(params: PyRef<'_, CqedParams>, omega0: f64) -> PyResult<f64> {
    adiabatic::tau0(&params.0, omega0).map_err(to_py)
}

#[pyfunction]
fn omega0_from_balancing(params: PyRef<'_, CqedParams>, tau: f64) -> PyResult<f64> {
    adiabatic::omega0_from_balancing(&params.0, tau).map_err(to_py)
}

/// Speed limits as a dict with `tau_a`, `tau_c`, `kappa_star`, `g_star`,
/// `binding` and `max_speed`.
#[pyfunction]
#[pyo3(signature = (params, f_adi = 8.0, f_cp = 0.5))]
fn thresholds<'py>(py: Python<'py>, params: PyRef<'_, CqedParams>, f_adi: f64, f_cp: f64) -> PyResult<Bound<'py, PyDict>> {
    let f = CoreFactors::new(f_adi, f_cp).map_err(to_py)?;
    let rep = adiabatic::thresholds(&params.0, &f).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("cooperativity", rep.cooperativity)?;
    d.set_item("tau_a", rep.tau_a)?;
    d.set_item("tau_c", rep.tau_c)?;
    d.set_item("kappa_star", rep.kappa_star)?;
    d.set_item("g_star", rep.g_star)?;
    d.set_item(
        "binding",
        match rep.binding {
            Binding::AdiabaticLimited => "adiabatic",
            Binding::CavitySuppressionLimited => "cavity_suppression",
        },
    )?;
    d.set_item("max_speed", rep.max_speed())?;
    Ok(d)
}

/// Loss exponent `beta` and the predicted loss probability `1 - exp(-beta)`.
#[pyfunction]
fn beta(params: PyRef<'_, CqedParams>, tau: f64, omega0: f64) -> PyResult<(f64, f64)> {
    lossmodel::beta(&params.0, tau, omega0).map(|b| (b.beta, b.p_pl)).map_err(to_py)
}

/// Maximizes the success probability (or fidelity) over `omega0`.
#[pyfunction]
#[pyo3(signature = (params, tau, objective = "success_probability", cfg = None))]
fn optimize_omega0(
    py: Python<'_>,
    params: PyRef<'_, CqedParams>,
    tau: f64,
    objective: &str,
    cfg: Option<PyRef<'_, SimConfig>>,
) -> PyResult<(f64, SimResult)> {
    let objective = match objective {
        "success_probability" => Objective::SuccessProbability,
        "fidelity" => Objective::Fidelity,
        other => return Err(PyValueError::new_err(format!("unknown objective {other:?}"))),
    };
    let (p, c) = (params.0, config(cfg));
    let opt = py.detach(|| lossmodel::optimize_omega0(&p, tau, objective, &c)).map_err(to_py)?;
    Ok((opt.omega0, SimResult(opt.result)))
}

/// Instantaneous eigenvalues `[0, w1, -w1, w2, -w2]`.
#[pyfunction]
fn eigenvalues(omega1: f64, omega2: f64, g: f64) -> [f64; 5] {
    eigensystem::eigenvalues_from_rabi(omega1, omega2, g)
}

#[pyfunction]
fn darkstate(omega1: f64, omega2: f64, g: f64) -> PyResult<Vec<Complex64>> {
    model::darkstate_from_rabi(omega1, omega2, g).map(|s| s.amps.to_vec()).map_err(to_py)
}

/// Runs a sweep given as a JSON spec and returns the result as JSON.
#[pyfunction]
fn run_sweep(py: Python<'_>, spec_json: &str) -> PyResult<String> {
    let spec: sweep::SweepSpec = serde_json::from_str(spec_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let result = py.detach(|| sweep::run(&spec)).map_err(to_py)?;
    serde_json::to_string(&result).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Runs the self-check suite; returns `(all_passed, [(name, passed, detail)])`.
#[pyfunction]
#[pyo3(signature = (seed = None))]
fn self_check(py: Python<'_>, seed: Option<u64>) -> (bool, Vec<(String, bool, String)>) {
    let mut opts = validate::SuiteOptions::default();
    if let Some(seed) = seed {
        opts.seed = seed;
    }
    let report = py.detach(|| validate::run_suite(&opts));
    let rows = report.checks.iter().map(|c| (c.name.to_string(), c.passed, c.detail.clone())).collect();
    (report.all_passed(), rows)
}

#[pymodule]
fn cmat(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<CqedParams>()?;
    m.add_class::<PulseSchedule>()?;
    m.add_class::<SimConfig>()?;
    m.add_class::<SimResult>()?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(tau0, m)?)?;
    m.add_function(wrap_pyfunction!(omega0_from_balancing, m)?)?;
    m.add_function(wrap_pyfunction!(thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_omega0, m)?)?;
    m.add_function(wrap_pyfunction!(eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(darkstate, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(self_check, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
