use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use cellfree_core::config::CsiMode;
use cellfree_core::eval::{self, LayoutContext};
use cellfree_core::experiment::{run_experiment as run_plan, ExperimentPlan, PlanOverrides, RunOptions};
use cellfree_core::netgeom::{self, Point};
use cellfree_core::power::{self, ThetaMatrix};
use cellfree_core::{Error, Scheme, SimConfig};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidConfig { .. } | Error::ConfigParse(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Simulation configuration.
#[pyclass(name = "Config", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: SimConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self {
            inner: SimConfig::default(),
        }
    }

    #[staticmethod]
    fn desk() -> Self {
        Self {
            inner: SimConfig::desk_scale(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        SimConfig::from_toml_str(text)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    #[getter]
    fn num_rrh(&self) -> usize {
        self.inner.scenario.num_rrh
    }
    #[setter]
    fn set_num_rrh(&mut self, v: usize) {
        self.inner.scenario.num_rrh = v;
    }
    #[getter]
    fn antennas_per_rrh(&self) -> usize {
        self.inner.scenario.antennas_per_rrh
    }
    #[setter]
    fn set_antennas_per_rrh(&mut self, v: usize) {
        self.inner.scenario.antennas_per_rrh = v;
    }
    #[getter]
    fn num_ue(&self) -> usize {
        self.inner.scenario.num_ue
    }
    #[setter]
    fn set_num_ue(&mut self, v: usize) {
        self.inner.scenario.num_ue = v;
    }
    #[getter]
    fn pilot_dim(&self) -> usize {
        self.inner.scenario.pilot_dim
    }
    #[setter]
    fn set_pilot_dim(&mut self, v: usize) {
        self.inner.scenario.pilot_dim = v;
    }
    #[getter]
    fn n_layouts(&self) -> usize {
        self.inner.scenario.n_layouts
    }
    #[setter]
    fn set_n_layouts(&mut self, v: usize) {
        self.inner.scenario.n_layouts = v;
    }
    #[getter]
    fn n_fading(&self) -> usize {
        self.inner.scenario.n_fading
    }
    #[setter]
    fn set_n_fading(&mut self, v: usize) {
        self.inner.scenario.n_fading = v;
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.scenario.seed
    }
    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.scenario.seed = v;
    }
    /// "ideal" or "estimated".
    #[getter]
    fn csi(&self) -> &'static str {
        match self.inner.scenario.csi {
            CsiMode::Ideal => "ideal",
            CsiMode::Estimated => "estimated",
        }
    }
    #[setter]
    fn set_csi(&mut self, v: &str) -> PyResult<()> {
        self.inner.scenario.csi = match v {
            "ideal" => CsiMode::Ideal,
            "estimated" => CsiMode::Estimated,
            _ => return Err(PyValueError::new_err(format!("unknown csi mode `{v}`"))),
        };
        Ok(())
    }

    /// Scheme names selected by this configuration.
    fn schemes(&self) -> Vec<String> {
        self.inner
            .schemes
            .schemes()
            .iter()
            .map(|s| s.name().to_string())
            .collect()
    }

    /// Calibrated system SNR (linear).
    fn snr(&self) -> f64 {
        netgeom::calibrate_snr(&self.inner)
    }

    fn __repr__(&self) -> String {
        let s = &self.inner.scenario;
        format!(
            "Config(L={}, M={}, K={}, tau_p={}, layouts={}, draws={})",
            s.num_rrh, s.antennas_per_rrh, s.num_ue, s.pilot_dim, s.n_layouts, s.n_fading
        )
    }
}

/// One generated layout: positions, LSFCs and clusters.
#[pyclass(name = "Layout")]
struct PyLayout {
    ctx: LayoutContext,
}

#[pymethods]
impl PyLayout {
    #[getter]
    fn snr(&self) -> f64 {
        self.ctx.lsfc.snr
    }

    /// `beta[k][l]`.
    #[getter]
    fn beta(&self) -> Vec<Vec<f64>> {
        let l = &self.ctx.lsfc;
        (0..l.num_ue())
            .map(|k| (0..l.num_rrh()).map(|r| l.beta(r, k)).collect())
            .collect()
    }

    #[getter]
    fn clusters(&self) -> Vec<Vec<usize>> {
        (0..self.ctx.graph.num_ue())
            .map(|k| self.ctx.graph.cluster(k).to_vec())
            .collect()
    }

    #[getter]
    fn user_sets(&self) -> Vec<Vec<usize>> {
        self.ctx.graph.user_sets().to_vec()
    }

    #[getter]
    fn pilots(&self) -> Vec<Option<usize>> {
        (0..self.ctx.graph.num_ue()).map(|k| self.ctx.graph.pilot(k)).collect()
    }

    #[getter]
    fn rrh_positions(&self) -> Vec<(f64, f64)> {
        self.ctx
            .layout
            .as_ref()
            .map_or_else(Vec::new, |l| l.rrh_pos.iter().map(|p| (p.x, p.y)).collect())
    }

    #[getter]
    fn ue_positions(&self) -> Vec<(f64, f64)> {
        self.ctx
            .layout
            .as_ref()
            .map_or_else(Vec::new, |l| l.ue_pos.iter().map(|p| (p.x, p.y)).collect())
    }

    fn graph_json(&self) -> PyResult<String> {
        self.ctx.graph.to_json().map_err(to_py)
    }

    /// Ergodic rates of the configured (or given) schemes on this layout.
    #[pyo3(signature = (config, schemes=None))]
    fn ergodic_rates(
        &self,
        py: Python<'_>,
        config: &PyConfig,
        schemes: Option<Vec<String>>,
    ) -> PyResult<Vec<PyRateReport>> {
        let schemes = resolve_schemes(&config.inner, schemes)?;
        let cfg = config.inner.clone();
        let reports = py
            .detach(|| eval::ergodic_rates(&cfg, &self.ctx, &schemes))
            .map_err(to_py)?;
        Ok(reports.into_iter().map(PyRateReport::from).collect())
    }
}

/// Per-UE ergodic rates of one scheme on one layout.
#[pyclass(name = "RateReport")]
struct PyRateReport {
    #[pyo3(get)]
    scheme: String,
    #[pyo3(get)]
    layout: usize,
    #[pyo3(get)]
    n_draws: usize,
    #[pyo3(get)]
    served: Vec<bool>,
    #[pyo3(get)]
    ul_rate: Option<Vec<f64>>,
    #[pyo3(get)]
    dl_rate: Vec<f64>,
    #[pyo3(get)]
    ul_se: Option<Vec<f64>>,
    #[pyo3(get)]
    dl_se: Vec<f64>,
    #[pyo3(get)]
    duality_infeasible: usize,
    #[pyo3(get)]
    mean_dl_power: f64,
}

impl From<eval::RateReport> for PyRateReport {
    fn from(r: eval::RateReport) -> Self {
        Self {
            ul_se: r.ul_se(),
            dl_se: r.dl_se(),
            duality_infeasible: r.counters.duality_infeasible,
            scheme: r.scheme,
            layout: r.layout,
            n_draws: r.n_draws,
            served: r.served,
            ul_rate: r.ul_rate,
            dl_rate: r.dl_rate,
            mean_dl_power: r.mean_dl_power,
        }
    }
}

#[pymethods]
impl PyRateReport {
    #[getter]
    fn sum_dl_se(&self) -> f64 {
        self.dl_se.iter().sum()
    }

    #[getter]
    fn sum_ul_se(&self) -> Option<f64> {
        self.ul_se.as_ref().map(|v| v.iter().sum())
    }

    fn __repr__(&self) -> String {
        format!(
            "RateReport(scheme={}, layout={}, sum_dl_se={:.3})",
            self.scheme,
            self.layout,
            self.sum_dl_se()
        )
    }
}

fn resolve_schemes(cfg: &SimConfig, names: Option<Vec<String>>) -> PyResult<Vec<Scheme>> {
    match names {
        None => Ok(cfg.schemes.schemes()),
        Some(n) => n.iter().map(|s| s.parse::<Scheme>().map_err(to_py)).collect(),
    }
}

/// Layout `index` of `config`.
#[pyfunction]
#[pyo3(signature = (config, index=0))]
fn generate_layout(config: &PyConfig, index: usize) -> PyResult<PyLayout> {
    config.inner.validate().map_err(to_py)?;
    Ok(PyLayout {
        ctx: LayoutContext::generate(&config.inner, index),
    })
}

/// Reports for every layout of `config`.
#[pyfunction]
#[pyo3(signature = (config, schemes=None))]
fn simulate(py: Python<'_>, config: &PyConfig, schemes: Option<Vec<String>>) -> PyResult<Vec<PyRateReport>> {
    let schemes = resolve_schemes(&config.inner, schemes)?;
    let cfg = config.inner.clone();
    let reports = py.detach(|| eval::simulate(&cfg, &schemes)).map_err(to_py)?;
    Ok(reports.into_iter().map(PyRateReport::from).collect())
}

fn theta_from_rows(theta: Vec<Vec<f64>>) -> PyResult<ThetaMatrix> {
    let k = theta.len();
    if theta.iter().any(|r| r.len() != k) {
        return Err(PyValueError::new_err("theta must be square"));
    }
    if theta.iter().flatten().any(|&x| x.is_nan() || x < 0.0) {
        return Err(PyValueError::new_err("theta entries must be non-negative"));
    }
    Ok(ThetaMatrix {
        theta: nalgebra_from_rows(&theta),
        served: (0..k).map(|i| theta[i][i] > 0.0).collect(),
    })
}

fn nalgebra_from_rows(rows: &[Vec<f64>]) -> cellfree_core::linalg::RMat {
    let k = rows.len();
    cellfree_core::linalg::RMat::from_fn(k, k, |r, c| rows[r][c])
}

/// Nominal UL SINRs from `theta[k][j]` (channel `k`, beamformer `j`).
#[pyfunction]
fn nominal_ul_sinr(theta: Vec<Vec<f64>>, snr: f64) -> PyResult<Vec<f64>> {
    Ok(power::nominal_ul_sinr(&theta_from_rows(theta)?, snr))
}

/// Nominal DL SINRs at powers `q`.
#[pyfunction]
fn nominal_dl_sinr(theta: Vec<Vec<f64>>, q: Vec<f64>, snr: f64) -> PyResult<Vec<f64>> {
    let t = theta_from_rows(theta)?;
    if q.len() != t.num_ue() {
        return Err(PyValueError::new_err("q has the wrong length"));
    }
    Ok(power::nominal_dl_sinr(&t, &q, snr))
}

/// DL powers reaching the targets `gamma`; returns `(q, feasible)`.
#[pyfunction]
fn duality_power_allocation(theta: Vec<Vec<f64>>, gamma: Vec<f64>, snr: f64) -> PyResult<(Vec<f64>, bool)> {
    let t = theta_from_rows(theta)?;
    if gamma.len() != t.num_ue() {
        return Err(PyValueError::new_err("gamma has the wrong length"));
    }
    let out = power::duality_power_allocation(&t, &gamma, snr);
    Ok((out.power.q, out.power.feasible))
}

#[pyfunction]
fn torus_distance(a: (f64, f64), b: (f64, f64), side: f64) -> f64 {
    netgeom::torus_distance(Point::new(a.0, a.1), Point::new(b.0, b.1), side)
}

#[pyfunction]
fn spectral_efficiency(rate: f64, config: &PyConfig) -> f64 {
    eval::spectral_efficiency(rate, &config.inner)
}

/// Runs a plan file's text into `out_dir`; returns the cell ids.
#[pyfunction]
#[pyo3(signature = (plan, out_dir, seed=None, jobs=0))]
fn run_experiment(py: Python<'_>, plan: &str, out_dir: &str, seed: Option<u64>, jobs: usize) -> PyResult<Vec<String>> {
    let overrides = PlanOverrides { seed, schemes: None };
    let mut p = ExperimentPlan::from_toml_str(plan, out_dir, &overrides).map_err(to_py)?;
    p.jobs = jobs;
    let report = py.detach(|| run_plan(&p, &RunOptions::default())).map_err(to_py)?;
    if let Some(f) = report.failures().next() {
        return Err(PyRuntimeError::new_err(format!(
            "cell_{} failed: {}",
            f.id,
            f.error.as_deref().unwrap_or("")
        )));
    }
    Ok(report.cells.into_iter().map(|c| c.id).collect())
}

#[pyfunction]
fn scheme_names() -> Vec<String> {
    Scheme::all().iter().map(|s| s.name().to_string()).collect()
}

#[pymodule]
fn cellfree(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyLayout>()?;
    m.add_class::<PyRateReport>()?;
    m.add_function(wrap_pyfunction!(generate_layout, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(nominal_ul_sinr, m)?)?;
    m.add_function(wrap_pyfunction!(nominal_dl_sinr, m)?)?;
    m.add_function(wrap_pyfunction!(duality_power_allocation, m)?)?;
    m.add_function(wrap_pyfunction!(torus_distance, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(scheme_names, m)?)?;
    Ok(())
}
