//! Python bindings for `scaling_lab_core`.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use scaling_lab_core::diagnostics::{self, RunSummary};
use scaling_lab_core::experiments::ExperimentSpec;
use scaling_lab_core::fbm::{self, GridSpec, HurstExponent};
use scaling_lab_core::gauss_moments::{isserlis_moment as core_isserlis, CovMatrix, MomentQuery};
use scaling_lab_core::mh::{self, Algorithm, ChainConfig, InitMode};
use scaling_lab_core::scaling;
use scaling_lab_core::seeding;
use scaling_lab_core::targets::{self, LocalisationParams, MarginalTarget, OscParams, TargetKind};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn hurst(h: f64) -> PyResult<HurstExponent> {
    HurstExponent::new(h).map_err(value_err)
}

fn algorithm(s: &str) -> PyResult<Algorithm> {
    Algorithm::parse(s).ok_or_else(|| value_err(format!("unknown algorithm '{s}'")))
}

/// A sampled fractional Brownian path on a uniform grid through 0.
#[pyclass(frozen, name = "FbmPath")]
struct PyFbmPath(Arc<fbm::FbmPath>);

#[pymethods]
impl PyFbmPath {
    /// Circulant-embedding sample on `[-half_width, half_width]`.
    #[staticmethod]
    #[pyo3(signature = (hurst_exponent, half_width=10.0, points=20001, seed=0))]
    fn circulant(hurst_exponent: f64, half_width: f64, points: usize, seed: u64) -> PyResult<Self> {
        let grid = GridSpec::symmetric(half_width, points).map_err(value_err)?;
        let path = fbm::sample_fbm_circulant(&grid, hurst(hurst_exponent)?, seed).map_err(value_err)?;
        Ok(Self(Arc::new(path)))
    }

    #[staticmethod]
    #[pyo3(signature = (hurst_exponent, half_width=10.0, points=501, seed=0))]
    fn cholesky(hurst_exponent: f64, half_width: f64, points: usize, seed: u64) -> PyResult<Self> {
        let grid = GridSpec::symmetric(half_width, points).map_err(value_err)?;
        let path = fbm::sample_fbm_cholesky(&grid, hurst(hurst_exponent)?, seed).map_err(value_err)?;
        Ok(Self(Arc::new(path)))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self(Arc::new(fbm::FbmPath::load_csv(path.as_ref()).map_err(value_err)?)))
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save_csv(path.as_ref()).map_err(runtime_err)
    }

    fn eval(&self, x: f64) -> PyResult<f64> {
        self.0.eval(x).map_err(value_err)
    }

    #[getter]
    fn hurst(&self) -> f64 {
        self.0.hurst().value()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed()
    }

    #[getter]
    fn nodes(&self) -> Vec<f64> {
        self.0.grid().nodes().collect()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.values().len()
    }
}

/// A one-dimensional marginal `pi`, normalized and tabulated for exact sampling.
#[pyclass(frozen, name = "Target")]
struct PyTarget(MarginalTarget);

fn finish(t: MarginalTarget, resolution: usize) -> PyResult<PyTarget> {
    Ok(PyTarget(t.normalize_and_tabulate(resolution).map_err(value_err)?))
}

#[pymethods]
impl PyTarget {
    #[staticmethod]
    #[pyo3(signature = (resolution=20001))]
    fn gaussian(resolution: usize) -> PyResult<Self> {
        finish(MarginalTarget::gaussian(), resolution)
    }

    #[staticmethod]
    #[pyo3(signature = (path, resolution=20001))]
    fn rwm_rough(path: &PyFbmPath, resolution: usize) -> PyResult<Self> {
        finish(targets::build_rwm_rough(path.0.clone()), resolution)
    }

    #[staticmethod]
    #[pyo3(signature = (path, c, resolution=20001))]
    fn mala_rough(path: &PyFbmPath, c: f64, resolution: usize) -> PyResult<Self> {
        let params = LocalisationParams::new(c, path.0.hurst()).map_err(value_err)?;
        finish(targets::build_mala_rough(path.0.clone(), params), resolution)
    }

    /// `kind` is `"rwm_osc"` or `"mala_osc"`.
    #[staticmethod]
    #[pyo3(signature = (kind, a, b, resolution=20001))]
    fn oscillatory(kind: &str, a: f64, b: f64, resolution: usize) -> PyResult<Self> {
        let kind = TargetKind::parse(kind).ok_or_else(|| value_err(format!("unknown target kind '{kind}'")))?;
        let params = OscParams::new(a, b).map_err(value_err)?;
        finish(targets::build_oscillatory(kind, params).map_err(value_err)?, resolution)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind().as_str()
    }

    #[getter]
    fn domain(&self) -> (f64, f64) {
        self.0.domain()
    }

    fn log_pi(&self, x: f64) -> PyResult<f64> {
        self.0.log_pi(x).map_err(value_err)
    }

    fn log_xi(&self, x: f64) -> PyResult<f64> {
        self.0.log_xi(x).map_err(value_err)
    }

    fn v_prime(&self, x: f64) -> PyResult<f64> {
        self.0.v_prime(x).map_err(value_err)
    }

    fn phi_sq_integral(&self) -> PyResult<f64> {
        self.0.phi_sq_integral().map_err(value_err)
    }

    /// `count` exact draws from `pi`.
    #[pyo3(signature = (count, seed=0))]
    fn sample(&self, count: usize, seed: u64) -> PyResult<Vec<f64>> {
        let mut rng = seeding::rng_from_seed(seed);
        (0..count).map(|_| self.0.sample(&mut rng).map_err(runtime_err)).collect()
    }

    fn __repr__(&self) -> String {
        format!("Target({})", self.0.descriptor())
    }
}

fn summary_dict<'py>(py: Python<'py>, s: &RunSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("algo", s.algo.as_str())?;
    d.set_item("kind", s.kind.as_str())?;
    d.set_item("hurst", s.hurst)?;
    d.set_item("c", s.c)?;
    d.set_item("dim", s.dim)?;
    d.set_item("ell", s.ell)?;
    d.set_item("beta", s.beta)?;
    d.set_item("sigma", s.sigma)?;
    d.set_item("seed", s.seed)?;
    d.set_item("steps", s.steps)?;
    d.set_item("burn_in", s.burn_in)?;
    d.set_item("acceptance_rate", s.acceptance_rate)?;
    d.set_item("mean_alpha", s.mean_alpha)?;
    d.set_item("esjd_coord", s.esjd_coord)?;
    d.set_item("esjd_full", s.esjd_full)?;
    d.set_item("psi_mean", s.psi_mean)?;
    d.set_item("psi_var", s.psi_var)?;
    d.set_item("out_of_domain", s.out_of_domain)?;
    d.set_item("acf", s.acf.clone())?;
    Ok(d)
}

/// Runs one product chain and returns its summary; `trace` adds `coord1`.
#[pyfunction]
#[pyo3(signature = (target, algo, dim, ell, beta, steps=100_000, burn_in=0, seed=0, sigma=None, init="stationary_table", trace=false))]
#[allow(clippy::too_many_arguments)]
fn run_chain<'py>(
    py: Python<'py>,
    target: &PyTarget,
    algo: &str,
    dim: usize,
    ell: f64,
    beta: f64,
    steps: usize,
    burn_in: usize,
    seed: u64,
    sigma: Option<f64>,
    init: &str,
    trace: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = ChainConfig::new(algorithm(algo)?, dim, ell, beta);
    cfg.steps = steps;
    cfg.burn_in = burn_in;
    cfg.seed = seed;
    cfg.sigma_override = sigma;
    cfg.init = InitMode::parse(init).ok_or_else(|| value_err(format!("unknown init mode '{init}'")))?;
    let out = py
        .detach(|| mh::run_chain(&cfg, &target.0))
        .map_err(runtime_err)?;
    let d = summary_dict(py, &out.summary)?;
    if trace {
        d.set_item("coord1", out.coord1)?;
    }
    Ok(d)
}

/// Stationary draws of the log acceptance ratio for a `dim`-coordinate product.
#[pyfunction]
#[pyo3(signature = (target, algo, dim, sigma, count, seed=0))]
fn psi_samples(
    py: Python<'_>,
    target: &PyTarget,
    algo: &str,
    dim: usize,
    sigma: f64,
    count: usize,
    seed: u64,
) -> PyResult<Vec<f64>> {
    let algo = algorithm(algo)?;
    py.detach(|| mh::stationary_psi_samples(&target.0, algo, dim, sigma, count, seed))
        .map_err(runtime_err)
}

/// `(ratio, std_error)` of the detailed-balance correction relative to `Var(rho)`.
#[pyfunction]
#[pyo3(signature = (target, algo, sigma, samples=1_000_000, seed=0))]
fn psi_balance(
    py: Python<'_>,
    target: &PyTarget,
    algo: &str,
    sigma: f64,
    samples: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let algo = algorithm(algo)?;
    let b = py
        .detach(|| diagnostics::psi_balance(&target.0, algo, sigma, samples, seed))
        .map_err(runtime_err)?;
    Ok((b.ratio, b.std_error))
}

/// Sweep of a preset (`table1`, `table2`, `table3`) or a key=value spec text.
#[pyfunction]
#[pyo3(signature = (spec, steps=None))]
fn run_sweep<'py>(py: Python<'py>, spec: &str, steps: Option<usize>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut spec = match spec {
        "table1" => ExperimentSpec::preset(scaling_lab_core::experiments::Preset::Table1),
        "table2" => ExperimentSpec::preset(scaling_lab_core::experiments::Preset::Table2),
        "table3" => ExperimentSpec::preset(scaling_lab_core::experiments::Preset::Table3),
        text => ExperimentSpec::from_text(text).map_err(value_err)?,
    };
    if let Some(s) = steps {
        spec.chain.steps = s;
    }
    let result = py
        .detach(|| spec.target.build().and_then(|t| spec.run_sweep(&t)))
        .map_err(runtime_err)?;
    result.rows.iter().map(|r| summary_dict(py, r)).collect()
}

/// `(a_star, acceptance_star)` maximizing the limiting speed for exponent `beta`.
#[pyfunction]
fn solve_optimal_a(beta: f64) -> PyResult<(f64, f64)> {
    let t = scaling::solve_optimal_a(beta).map_err(value_err)?;
    Ok((t.a_star, t.acceptance_star))
}

#[pyfunction]
fn speed_w(ell: f64, beta: f64, theta: f64) -> f64 {
    scaling::speed_w(ell, beta, theta)
}

/// `(hurst, beta, acceptance_star)` rows for `algo` over `grid`.
#[pyfunction]
fn figure1_curve(algo: &str, grid: Vec<f64>) -> PyResult<Vec<(f64, f64, f64)>> {
    let rows = scaling::figure1_curve(algorithm(algo)?, &grid).map_err(value_err)?;
    Ok(rows.iter().map(|r| (r.hurst, r.beta, r.acceptance_star)).collect())
}

#[pyfunction]
fn sigma2_rwm(hurst_exponent: f64, ell: f64) -> PyResult<f64> {
    Ok(diagnostics::sigma2_rwm(hurst(hurst_exponent)?, ell))
}

#[pyfunction]
fn sigma2_mala(hurst_exponent: f64, ell: f64, phi_sq: f64) -> PyResult<f64> {
    Ok(diagnostics::sigma2_mala(hurst(hurst_exponent)?, ell, phi_sq))
}

#[pyfunction]
fn limiting_acceptance(sigma2: f64) -> f64 {
    diagnostics::limiting_acceptance(sigma2)
}

#[pyfunction]
fn fbm_covariance(x: f64, y: f64, hurst_exponent: f64) -> PyResult<f64> {
    Ok(fbm::fbm_covariance(x, y, hurst(hurst_exponent)?))
}

/// `E[prod_k X_{indices[k]}]` for a centered Gaussian vector with covariance `cov`.
#[pyfunction]
fn isserlis_moment(cov: Vec<Vec<f64>>, indices: Vec<usize>) -> PyResult<f64> {
    let r = CovMatrix::from_rows(&cov).map_err(value_err)?;
    let q = MomentQuery::new(indices).map_err(value_err)?;
    core_isserlis(&r, &q).map_err(value_err)
}

#[pyfunction]
fn derive_seed(master: u64, index: u64) -> u64 {
    seeding::derive_seed(master, index)
}

#[pymodule]
fn scaling_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", scaling_lab_core::experiments::VERSION)?;
    m.add_class::<PyFbmPath>()?;
    m.add_class::<PyTarget>()?;
    m.add_function(wrap_pyfunction!(run_chain, m)?)?;
    m.add_function(wrap_pyfunction!(psi_samples, m)?)?;
    m.add_function(wrap_pyfunction!(psi_balance, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(solve_optimal_a, m)?)?;
    m.add_function(wrap_pyfunction!(speed_w, m)?)?;
    m.add_function(wrap_pyfunction!(figure1_curve, m)?)?;
    m.add_function(wrap_pyfunction!(sigma2_rwm, m)?)?;
    m.add_function(wrap_pyfunction!(sigma2_mala, m)?)?;
    m.add_function(wrap_pyfunction!(limiting_acceptance, m)?)?;
    m.add_function(wrap_pyfunction!(fbm_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(isserlis_moment, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    Ok(())
}
