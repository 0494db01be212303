//! Python module `bosecycles`. Structured results come back as plain dicts and lists.

use bosecycles::cluster::{self, ClusterSampling};
use bosecycles::ideal_canonical::CanonicalEnsembleTable;
use bosecycles::pimc::{self, PairPotential, PimcConfig};
use bosecycles::{ideal_grand, series, SimulationBox};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn err(e: bosecycles::Error) -> PyErr {
    match e {
        bosecycles::Error::Io(_) | bosecycles::Error::Serde(_) | bosecycles::Error::Contract(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Rust value -> Python object, through JSON.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Python dict -> Rust value, through JSON.
fn from_py<T: DeserializeOwned>(py: Python<'_>, value: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (value,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn potential(py: Python<'_>, value: Option<&Bound<'_, PyDict>>) -> PyResult<PairPotential> {
    match value {
        Some(d) => {
            let p: PairPotential = from_py(py, d.as_any())?;
            p.validate().map_err(err)?;
            Ok(p)
        }
        None => Ok(PairPotential::Zero),
    }
}

/// Exact ideal gas of `n` particles in a periodic cube of side `side`.
#[pyclass(name = "CanonicalTable", module = "bosecycles", frozen)]
struct PyCanonicalTable {
    inner: CanonicalEnsembleTable,
}

#[pymethods]
impl PyCanonicalTable {
    #[new]
    fn new(dim: usize, side: f64, beta: f64, n: usize) -> PyResult<Self> {
        let bx = SimulationBox::new(dim, side).map_err(err)?;
        let inner = CanonicalEnsembleTable::build(bx, beta, n).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn density(&self) -> f64 {
        self.inner.density()
    }

    #[getter]
    fn volume(&self) -> f64 {
        self.inner.volume()
    }

    /// `ln Y(m)` with `Z_m = Y(m)`, for `0 <= m <= N`.
    fn log_y(&self, m: usize) -> PyResult<f64> {
        if m > self.inner.n_particles() {
            return Err(PyValueError::new_err(format!("m = {m} exceeds N")));
        }
        Ok(self.inner.log_y(m))
    }

    fn cycle_densities(&self) -> Vec<f64> {
        self.inner.cycle_densities()
    }

    fn cycle_density(&self, n: usize) -> PyResult<f64> {
        self.inner.cycle_density(n).map_err(err)
    }

    #[pyo3(signature = (c = 0.1))]
    fn cycle_spectrum(&self, py: Python<'_>, c: f64) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.cycle_spectrum(c).map_err(err)?)
    }

    fn odlro_correlation(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.odlro_correlation(&x).map_err(err)
    }

    #[pyo3(signature = (x, c = 0.1))]
    fn verify_decomposition(&self, py: Python<'_>, x: Vec<f64>, c: f64) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.verify_decomposition(&x, c).map_err(err)?)
    }

    fn condensate_density(&self) -> f64 {
        self.inner.condensate_density()
    }

    fn large_deviation_rate(&self, a: f64) -> PyResult<f64> {
        self.inner.large_deviation_rate(a).map_err(err)
    }

    fn __repr__(&self) -> String {
        let bx = self.inner.simulation_box();
        format!(
            "CanonicalTable(dim={}, side={}, beta={}, n={})",
            bx.dim(),
            bx.side(),
            self.inner.beta(),
            self.inner.n_particles()
        )
    }
}

#[pyfunction]
fn bose_series(s: f64, lam: f64) -> f64 {
    series::bose_series(s, lam)
}

#[pyfunction]
fn zeta(s: f64) -> f64 {
    series::zeta(s)
}

#[pyfunction]
fn pressure(beta: f64, mu: f64, dim: usize) -> PyResult<f64> {
    ideal_grand::pressure(beta, mu, dim).map_err(err)
}

#[pyfunction]
fn density(beta: f64, mu: f64, dim: usize) -> PyResult<f64> {
    ideal_grand::density(beta, mu, dim).map_err(err)
}

#[pyfunction]
fn critical_density(beta: f64, dim: usize) -> PyResult<f64> {
    ideal_grand::critical_density(beta, dim).map_err(err)
}

#[pyfunction]
fn solve_mu(beta: f64, rho: f64, dim: usize) -> PyResult<f64> {
    ideal_grand::solve_mu(beta, rho, dim).map_err(err)
}

#[pyfunction]
fn free_energy(beta: f64, rho: f64, dim: usize) -> PyResult<f64> {
    ideal_grand::free_energy(beta, rho, dim).map_err(err)
}

#[pyfunction]
fn grand_cycle_density(n: usize, beta: f64, mu: f64, dim: usize) -> PyResult<f64> {
    ideal_grand::grand_cycle_density(n, beta, mu, dim).map_err(err)
}

/// Runs the sampler. `config` has the fields of the Rust `PimcConfig`
/// (`dim`, `n_particles`, `side`, `beta`, `beads`, `schedule`, `seed`, optional
/// `potential`, `moves`, `open`). Returns densities, errors and acceptance counts;
/// `exact` and `chi_square` are present when the potential is zero.
#[pyfunction]
fn run_pimc(py: Python<'_>, config: &Bound<'_, PyDict>) -> PyResult<Py<PyAny>> {
    let config: PimcConfig = from_py(py, config.as_any())?;
    let bx = config.simulation_box().map_err(err)?;
    let exact = if config.potential.is_zero() {
        Some(bosecycles::ideal_canonical::build_table(bx, config.beta, config.n_particles).map_err(err)?.cycle_densities())
    } else {
        None
    };
    let result = py.detach(|| pimc::run_canonical_pimc(config)).map_err(err)?;
    let h = &result.histogram;
    let chi_square = match &exact {
        Some(e) => h.compare_with(e).ok(),
        None => None,
    };
    let out = serde_json::json!({
        "densities": h.densities(),
        "errors": h.density_errors(),
        "mean_cycle_length": h.mean_cycle_length(),
        "exact": exact,
        "chi_square": chi_square,
        "acceptance": result.acceptance,
        "equilibration_acceptance": result.equilibration_acceptance,
        "open": result.open,
        "warnings": result.warnings,
    });
    to_py(py, &out)
}

#[pyfunction]
#[pyo3(signature = (beta, mu, dim, potential = None))]
fn kp_condition(py: Python<'_>, beta: f64, mu: f64, dim: usize, potential: Option<&Bound<'_, PyDict>>) -> PyResult<Py<PyAny>> {
    let pot = self::potential(py, potential)?;
    to_py(py, &cluster::kp_condition(beta, mu, &pot, dim).map_err(err)?)
}

/// Bracket on the interacting-to-free ratio of winding-`n` loops, or `None` when
/// the convergence criterion fails.
#[pyfunction]
#[pyo3(signature = (beta, mu, dim, winding, potential = None))]
fn ratio_bound(
    py: Python<'_>,
    beta: f64,
    mu: f64,
    dim: usize,
    winding: usize,
    potential: Option<&Bound<'_, PyDict>>,
) -> PyResult<Py<PyAny>> {
    let pot = self::potential(py, potential)?;
    to_py(py, &cluster::ratio_bound(beta, mu, &pot, dim, winding).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (beta, mu, dim, potential = None, k_max = 2, samples = 4000, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn truncated_log_z(
    py: Python<'_>,
    beta: f64,
    mu: f64,
    dim: usize,
    potential: Option<&Bound<'_, PyDict>>,
    k_max: usize,
    samples: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let pot = self::potential(py, potential)?;
    let sampling = ClusterSampling::new(samples, seed);
    let r = py.detach(|| cluster::truncated_log_z(beta, mu, &pot, dim, k_max, sampling)).map_err(err)?;
    to_py(py, &r)
}

#[pymodule]
#[pyo3(name = "bosecycles")]
fn bosecycles_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyCanonicalTable>()?;
    m.add_function(wrap_pyfunction!(bose_series, m)?)?;
    m.add_function(wrap_pyfunction!(zeta, m)?)?;
    m.add_function(wrap_pyfunction!(pressure, m)?)?;
    m.add_function(wrap_pyfunction!(density, m)?)?;
    m.add_function(wrap_pyfunction!(critical_density, m)?)?;
    m.add_function(wrap_pyfunction!(solve_mu, m)?)?;
    m.add_function(wrap_pyfunction!(free_energy, m)?)?;
    m.add_function(wrap_pyfunction!(grand_cycle_density, m)?)?;
    m.add_function(wrap_pyfunction!(run_pimc, m)?)?;
    m.add_function(wrap_pyfunction!(kp_condition, m)?)?;
    m.add_function(wrap_pyfunction!(ratio_bound, m)?)?;
    m.add_function(wrap_pyfunction!(truncated_log_z, m)?)?;
    Ok(())
}
