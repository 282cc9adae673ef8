//! Python bindings for `orfem`.

use orfem::fit::FitResult;
use orfem::kernels::{bvn_cdf as bvn, Correlation, RngStream};
use orfem::mcem::{parse_schedule, McemConfig, MONITOR_QUAD_ORDER};
use orfem::model::{self, Dataset, ItemParams, PopulationParams};
use orfem::simulate::{simulate_dataset, table1_scenario, SimConfig};
use orfem::{io, mom, scoring, OrfError};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::PathBuf;

fn py_err(e: OrfError) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else if e.is_numeric() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyIOError::new_err(e.to_string())
    }
}

#[pyclass(name = "ItemParams", frozen, from_py_object)]
#[derive(Clone)]
struct PyItem(ItemParams);

#[pymethods]
impl PyItem {
    #[new]
    fn new(a: f64, b: f64, alpha: f64, beta: f64, n_words: u32) -> PyResult<Self> {
        ItemParams::new(a, b, alpha, beta, n_words).map(Self).map_err(py_err)
    }

    #[getter]
    fn a(&self) -> f64 {
        self.0.a
    }

    #[getter]
    fn b(&self) -> f64 {
        self.0.b
    }

    /// `inf` when the residual log-time variance is zero.
    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.0.beta
    }

    #[getter]
    fn n_words(&self) -> u32 {
        self.0.n_words
    }

    fn mean_count(&self) -> f64 {
        model::mean_count(&self.0)
    }

    fn var_count(&self) -> f64 {
        model::var_count(&self.0)
    }

    fn var_logtime(&self, pop: &PyPop) -> f64 {
        model::var_logtime(&self.0, &pop.0)
    }

    fn cov_count_logtime(&self, pop: &PyPop) -> f64 {
        model::cov_count_logtime(&self.0, &pop.0)
    }

    fn mean_time(&self, pop: &PyPop) -> f64 {
        model::mean_time(&self.0, &pop.0)
    }

    fn __repr__(&self) -> String {
        let i = &self.0;
        format!("ItemParams(a={}, b={}, alpha={}, beta={}, n_words={})", i.a, i.b, i.alpha, i.beta, i.n_words)
    }
}

#[pyclass(name = "PopulationParams", frozen, from_py_object)]
#[derive(Clone)]
struct PyPop(PopulationParams);

#[pymethods]
impl PyPop {
    #[new]
    fn new(sigma2_tau: f64, sigma_theta_tau: f64) -> PyResult<Self> {
        PopulationParams::new(sigma2_tau, sigma_theta_tau).map(Self).map_err(py_err)
    }

    #[getter]
    fn sigma2_tau(&self) -> f64 {
        self.0.sigma2_tau
    }

    #[getter]
    fn sigma_theta_tau(&self) -> f64 {
        self.0.sigma_theta_tau
    }

    #[getter]
    fn correlation(&self) -> f64 {
        self.0.correlation()
    }

    fn __repr__(&self) -> String {
        format!("PopulationParams(sigma2_tau={}, sigma_theta_tau={})", self.0.sigma2_tau, self.0.sigma_theta_tau)
    }
}

/// Counts and log-times for a set of individuals; a missing pair is an absent row.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset(Dataset);

#[pymethods]
impl PyDataset {
    /// Reads `item_id,n_words` and `individual_id,item_id,words_correct,time_seconds` files.
    #[staticmethod]
    fn from_csv(items: PathBuf, responses: PathBuf) -> PyResult<Self> {
        let specs = io::read_items(&items).map_err(py_err)?;
        io::read_responses(&responses, &specs).map(Self).map_err(py_err)
    }

    fn to_csv(&self, items: PathBuf, responses: PathBuf) -> PyResult<()> {
        io::write_items(&items, self.0.items()).map_err(py_err)?;
        io::write_responses(&responses, &self.0).map_err(py_err)
    }

    #[getter]
    fn n_individuals(&self) -> usize {
        self.0.n_individuals()
    }

    #[getter]
    fn n_items(&self) -> usize {
        self.0.n_items()
    }

    #[getter]
    fn item_ids(&self) -> Vec<String> {
        self.0.items().iter().map(|i| i.id.clone()).collect()
    }

    #[getter]
    fn individual_ids(&self) -> Vec<String> {
        self.0.individuals().iter().map(|r| r.id.clone()).collect()
    }

    fn missing_rates(&self) -> Vec<f64> {
        self.0.missing_rates()
    }

    /// `(individual_id, item_id, words_correct, time_seconds)` rows.
    fn records(&self) -> Vec<(String, String, u32, f64)> {
        let items = self.0.items();
        self.0
            .individuals()
            .iter()
            .flat_map(|r| {
                r.responses.iter().map(|x| (r.id.clone(), items[x.item].id.clone(), x.count, x.log_time.exp()))
            })
            .collect()
    }

    /// Per-item sample moments of counts and log-times.
    fn sample_moments<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let m = mom::compute_moments(&self.0).map_err(py_err)?;
        m.items
            .iter()
            .zip(self.0.items())
            .map(|(im, spec)| {
                let d = PyDict::new(py);
                d.set_item("item_id", &spec.id)?;
                d.set_item("n", im.n)?;
                d.set_item("ybar", im.ybar)?;
                d.set_item("s2_y", im.s2_y)?;
                d.set_item("tbar", im.tbar)?;
                d.set_item("s2_t", im.s2_t)?;
                d.set_item("s_yt", im.s_yt)?;
                Ok(d)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Dataset({} individuals, {} items)", self.0.n_individuals(), self.0.n_items())
    }
}

#[pyclass(name = "FitResult", frozen)]
struct PyFit(FitResult);

#[pymethods]
impl PyFit {
    #[getter]
    fn method(&self) -> &'static str {
        self.0.method.as_str()
    }

    #[getter]
    fn item_ids(&self) -> Vec<String> {
        self.0.item_ids.clone()
    }

    #[getter]
    fn items(&self) -> Vec<PyItem> {
        self.0.items.iter().copied().map(PyItem).collect()
    }

    #[getter]
    fn population(&self) -> PyPop {
        PyPop(self.0.pop)
    }

    #[getter]
    fn observed_loglik(&self) -> Option<f64> {
        self.0.diagnostics.observed_loglik
    }

    #[getter]
    fn converged(&self) -> bool {
        self.0.diagnostics.converged
    }

    #[getter]
    fn flags(&self) -> Vec<String> {
        self.0.diagnostics.flags.clone()
    }

    /// `(iteration, draws, observed_loglik, q_before, q_after)` per MCEM iteration.
    fn trace(&self) -> Vec<(usize, usize, f64, f64, f64)> {
        self.0
            .diagnostics
            .trace
            .iter()
            .map(|r| (r.iteration, r.draws, r.observed_loglik, r.q_before, r.q_after))
            .collect()
    }

    /// Writes `fit.csv`, `population.csv` and `diagnostics.txt` into `dir`.
    fn save(&self, dir: PathBuf) -> PyResult<()> {
        std::fs::create_dir_all(&dir).map_err(|e| PyIOError::new_err(e.to_string()))?;
        io::write_params(&dir, &self.0.item_ids, &self.0.items, &self.0.pop).map_err(py_err)?;
        io::write_diagnostics(&dir.join("diagnostics.txt"), &self.0).map_err(py_err)
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        io::read_fit(&dir).map(Self).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("FitResult(method={}, items={})", self.0.method.as_str(), self.0.items.len())
    }
}

/// Item and population parameters of reference scenario 1 or 2.
#[pyfunction]
fn scenario(which: u8) -> PyResult<(Vec<PyItem>, PyPop)> {
    let (items, pop) = table1_scenario(which).map_err(py_err)?;
    Ok((items.into_iter().map(PyItem).collect(), PyPop(pop)))
}

/// Simulates a dataset; returns it with the generating `(theta, tau)` pairs.
#[pyfunction]
#[pyo3(signature = (n, scenario=2, items=None, population=None, missing_rate=0.0, seed=0))]
fn simulate(
    py: Python<'_>,
    n: usize,
    scenario: u8,
    items: Option<Vec<PyItem>>,
    population: Option<PyPop>,
    missing_rate: f64,
    seed: u64,
) -> PyResult<(PyDataset, Vec<(f64, f64)>)> {
    let (mut it, mut pop) = table1_scenario(scenario).map_err(py_err)?;
    if let Some(items) = items {
        it = items.into_iter().map(|i| i.0).collect();
    }
    if let Some(p) = population {
        pop = p.0;
    }
    let cfg = SimConfig { items: it, pop, n, missing_rate, seed: RngStream::from_seed(seed) };
    let sim = py.detach(|| simulate_dataset(&cfg)).map_err(py_err)?;
    Ok((PyDataset(sim.dataset), sim.latents.iter().map(|l| (l.theta, l.tau)).collect()))
}

#[pyfunction]
fn fit_mom(py: Python<'_>, data: &PyDataset) -> PyResult<PyFit> {
    py.detach(|| mom::fit_mom(&data.0)).map(PyFit).map_err(py_err)
}

/// Monte Carlo EM from `init` (the method-of-moments fit when omitted).
#[pyfunction]
#[pyo3(signature = (data, init=None, schedule="10x20,3x200", rel_tol=1e-3, seed=0))]
fn fit_mcem(
    py: Python<'_>,
    data: &PyDataset,
    init: Option<&PyFit>,
    schedule: &str,
    rel_tol: f64,
    seed: u64,
) -> PyResult<PyFit> {
    let cfg = McemConfig {
        schedule: parse_schedule(schedule).map_err(py_err)?,
        rel_tol,
        seed: RngStream::from_seed(seed),
        ..McemConfig::default()
    };
    let start = init.map(|f| f.0.clone());
    py.detach(|| {
        let start = match start {
            Some(f) => f,
            None => mom::fit_mom(&data.0)?,
        };
        orfem::mcem::fit_mcem(&data.0, &start, &cfg)
    })
    .map(PyFit)
    .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (data, fit, quad_order=MONITOR_QUAD_ORDER))]
fn observed_loglik(data: &PyDataset, fit: &PyFit, quad_order: usize) -> PyResult<f64> {
    model::observed_loglik(&data.0, &fit.0.items, &fit.0.pop, quad_order).map_err(py_err)
}

/// EAP scores as `(individual_id, theta_hat, tau_hat)` tuples.
#[pyfunction]
#[pyo3(signature = (data, fit, m=20, seed=0))]
fn eap_scores(py: Python<'_>, data: &PyDataset, fit: &PyFit, m: usize, seed: u64) -> PyResult<Vec<(String, f64, f64)>> {
    let table = py.detach(|| scoring::eap_scores(&data.0, &fit.0, m, seed)).map_err(py_err)?;
    Ok(table.rows.into_iter().map(|r| (r.id, r.theta_hat, r.tau_hat)).collect())
}

/// Leave-item-out prediction errors, one dict per item.
#[pyfunction]
#[pyo3(signature = (data, fit, m=20, seed=0))]
fn predict_loo<'py>(
    py: Python<'py>,
    data: &PyDataset,
    fit: &PyFit,
    m: usize,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let report = py.detach(|| scoring::predict_all(&data.0, &fit.0, m, seed)).map_err(py_err)?;
    report
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("item_id", &r.item_id)?;
            d.set_item("n_eval", r.n_eval)?;
            d.set_item("rspe0_count", r.rspe0_count)?;
            d.set_item("rspe1_count", r.rspe1_count)?;
            d.set_item("rspe0_time", r.rspe0_time)?;
            d.set_item("rspe1_time", r.rspe1_time)?;
            Ok(d)
        })
        .collect()
}

/// Standard bivariate normal CDF with correlation `rho`.
#[pyfunction]
fn bvn_cdf(x: f64, y: f64, rho: f64) -> PyResult<f64> {
    Ok(bvn(x, y, Correlation::new(rho).map_err(py_err)?))
}

#[pymodule]
fn pyorfem(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyItem>()?;
    m.add_class::<PyPop>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(scenario, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_mom, m)?)?;
    m.add_function(wrap_pyfunction!(fit_mcem, m)?)?;
    m.add_function(wrap_pyfunction!(observed_loglik, m)?)?;
    m.add_function(wrap_pyfunction!(eap_scores, m)?)?;
    m.add_function(wrap_pyfunction!(predict_loo, m)?)?;
    m.add_function(wrap_pyfunction!(bvn_cdf, m)?)?;
    Ok(())
}
