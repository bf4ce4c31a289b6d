//! Python bindings. Matrices are passed as lists of rows and class labels are
//! zero-based, as in the Rust library.

use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use misclust::mcsimex::{bootstrap_simex as boot, BootstrapOptions, ExtrapolantKind};
use misclust::misclass::estimate_misclass_mc as mc_estimate;
use misclust::mixture::{classify_all, ClassifierRule, CovarianceStructure, EmConfig, GmmClassifier, KmeansConfig};
use misclust::regress::{self, Family, Outcome};
use misclust::rng::stream;

fn py_err(e: misclust::Error) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err("all rows must have the same length"));
    }
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn parse<T: std::str::FromStr<Err = misclust::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

fn outcome(family: Family, y: Option<Vec<u8>>, time: Option<Vec<f64>>, event: Option<Vec<bool>>) -> PyResult<Outcome> {
    match family {
        Family::Logistic => Outcome::binary(y.ok_or_else(|| PyValueError::new_err("logistic needs y"))?),
        Family::Cox => match (time, event) {
            (Some(t), Some(e)) => Outcome::survival(t, e),
            _ => return Err(PyValueError::new_err("cox needs time and event")),
        },
    }
    .map_err(py_err)
}

/// A fitted Gaussian mixture with its hard classification rule.
#[pyclass(frozen, module = "misclust_py")]
pub struct GmmModel {
    params: misclust::GmmParams,
    rule: ClassifierRule,
    #[pyo3(get)]
    loglik: f64,
    #[pyo3(get)]
    n_iter: usize,
    #[pyo3(get)]
    converged: bool,
}

#[pymethods]
impl GmmModel {
    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.params.weights().to_vec()
    }

    #[getter]
    fn means(&self) -> Vec<Vec<f64>> {
        self.params.means().to_vec()
    }

    #[getter]
    fn covariances(&self) -> Vec<Vec<Vec<f64>>> {
        self.params.covariances().iter().map(rows_of).collect()
    }

    /// Hard labels for each row of `data`.
    fn classify(&self, data: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        let cls = GmmClassifier::new(&self.params, self.rule);
        classify_all(&cls, &matrix(&data)?).map_err(py_err)
    }

    /// Monte Carlo estimate of the misclassification matrix implied by the model.
    #[pyo3(signature = (n_mc = 100_000, seed = 0))]
    fn misclassification(&self, n_mc: usize, seed: u64) -> PyResult<MisclassMatrix> {
        let cls = GmmClassifier::new(&self.params, self.rule);
        let pi = mc_estimate(&self.params.components(), &cls, n_mc, &mut stream(seed, &[])).map_err(py_err)?;
        Ok(MisclassMatrix { inner: pi })
    }

    fn __repr__(&self) -> String {
        format!("GmmModel(m={}, p={}, loglik={:.4})", self.params.m(), self.params.dim(), self.loglik)
    }
}

#[pyclass(frozen, module = "misclust_py")]
pub struct KmeansModel {
    fit: misclust::KmeansFit,
}

#[pymethods]
impl KmeansModel {
    #[getter]
    fn centroids(&self) -> Vec<Vec<f64>> {
        self.fit.centroids.clone()
    }

    #[getter]
    fn within_ss(&self) -> f64 {
        self.fit.within_ss
    }

    fn classify(&self, data: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        classify_all(&self.fit, &matrix(&data)?).map_err(py_err)
    }

    /// Misclassification matrix from Gaussians fitted to each cluster of `data`.
    #[pyo3(signature = (data, n_mc = 100_000, seed = 0))]
    fn misclassification(&self, data: Vec<Vec<f64>>, n_mc: usize, seed: u64) -> PyResult<MisclassMatrix> {
        let x = matrix(&data)?;
        let comps = misclust::mixture::cluster_gaussians(&self.fit, &x, EmConfig::default().reg_eps).map_err(py_err)?;
        let pi = mc_estimate(&comps, &self.fit, n_mc, &mut stream(seed, &[])).map_err(py_err)?;
        Ok(MisclassMatrix { inner: pi })
    }
}

/// Column-stochastic matrix: entry (i, j) is P(observed i | true j).
#[pyclass(frozen, module = "misclust_py")]
pub struct MisclassMatrix {
    inner: misclust::MisclassMatrix,
}

#[pymethods]
impl MisclassMatrix {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(MisclassMatrix {
            inner: misclust::MisclassMatrix::from_rows(&rows).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn symmetric_flip(rate: f64) -> PyResult<Self> {
        Ok(MisclassMatrix {
            inner: misclust::MisclassMatrix::symmetric_flip(rate).map_err(py_err)?,
        })
    }

    #[getter]
    fn entries(&self) -> Vec<Vec<f64>> {
        self.inner.to_rows()
    }

    fn power(&self, lam: f64) -> PyResult<MisclassMatrix> {
        Ok(MisclassMatrix {
            inner: misclust::matrix_power(&self.inner, lam).map_err(py_err)?,
        })
    }

    /// `(power_exists, eigenvalues as (re, im) pairs, reason)`.
    fn validity(&self) -> (bool, Vec<(f64, f64)>, Option<String>) {
        let v = misclust::check_power_validity(&self.inner);
        (v.power_exists, v.eigenvalues.iter().map(|z| (z.re, z.im)).collect(), v.reason)
    }

    fn __repr__(&self) -> String {
        format!("MisclassMatrix({:?})", self.inner.to_rows())
    }
}

#[pyclass(frozen, module = "misclust_py")]
pub struct RegressionFit {
    #[pyo3(get)]
    coefficients: Vec<f64>,
    #[pyo3(get)]
    std_errors: Vec<f64>,
    #[pyo3(get)]
    covariance: Vec<Vec<f64>>,
    #[pyo3(get)]
    loglik: f64,
    #[pyo3(get)]
    converged: bool,
}

impl From<&misclust::RegressionFit> for RegressionFit {
    fn from(f: &misclust::RegressionFit) -> Self {
        RegressionFit {
            coefficients: f.coefficients.clone(),
            std_errors: f.std_errors(),
            covariance: rows_of(&f.covariance),
            loglik: f.loglik,
            converged: f.converged,
        }
    }
}

#[pyclass(frozen, module = "misclust_py")]
pub struct SimexFit {
    #[pyo3(get)]
    naive: Py<RegressionFit>,
    #[pyo3(get)]
    corrected: Vec<f64>,
    #[pyo3(get)]
    std_errors: Option<Vec<f64>>,
    #[pyo3(get)]
    lambdas: Vec<f64>,
    #[pyo3(get)]
    per_lambda: Vec<Vec<f64>>,
    /// `(lambda, coefficient index, value)` triples including the naive point.
    #[pyo3(get)]
    curve: Vec<(f64, usize, f64)>,
}

#[pyclass(frozen, module = "misclust_py")]
pub struct BootstrapResult {
    #[pyo3(get)]
    naive: Py<RegressionFit>,
    #[pyo3(get)]
    point: Vec<f64>,
    #[pyo3(get)]
    median: Vec<f64>,
    #[pyo3(get)]
    ci_lower: Vec<f64>,
    #[pyo3(get)]
    ci_upper: Vec<f64>,
    #[pyo3(get)]
    replicates: Vec<Vec<f64>>,
    #[pyo3(get)]
    n_failed: usize,
    #[pyo3(get)]
    mean_misclassification: Vec<Vec<f64>>,
}

#[pyfunction]
#[pyo3(signature = (data, m, seed = 0, restarts = 10, covariance = "full", rule = "density"))]
fn fit_gmm(data: Vec<Vec<f64>>, m: usize, seed: u64, restarts: usize, covariance: &str, rule: &str) -> PyResult<GmmModel> {
    let config = EmConfig {
        restarts,
        covariance: parse::<CovarianceStructure>(covariance)?,
        ..EmConfig::default()
    };
    let fit = misclust::fit_gmm(&matrix(&data)?, m, &config, &mut stream(seed, &[])).map_err(py_err)?;
    Ok(GmmModel {
        params: fit.params,
        rule: parse(rule)?,
        loglik: fit.loglik,
        n_iter: fit.n_iter,
        converged: fit.converged,
    })
}

#[pyfunction]
#[pyo3(signature = (data, m, seed = 0, restarts = 10))]
fn fit_kmeans(data: Vec<Vec<f64>>, m: usize, seed: u64, restarts: usize) -> PyResult<KmeansModel> {
    let config = KmeansConfig {
        restarts,
        ..KmeansConfig::default()
    };
    let fit = misclust::fit_kmeans(&matrix(&data)?, m, &config, &mut stream(seed, &[])).map_err(py_err)?;
    Ok(KmeansModel { fit })
}

#[pyfunction]
fn fit_logistic(y: Vec<u8>, labels: Vec<usize>, m: usize) -> PyResult<RegressionFit> {
    Ok((&regress::fit_logistic(&y, &labels, m).map_err(py_err)?).into())
}

#[pyfunction]
fn fit_cox(time: Vec<f64>, event: Vec<bool>, labels: Vec<usize>, m: usize) -> PyResult<RegressionFit> {
    Ok((&regress::fit_cox(&time, &event, &labels, m).map_err(py_err)?).into())
}

fn simex_config(lambda_grid: Vec<f64>, b: usize, extrapolant: &str, seed: u64) -> PyResult<misclust::SimexConfig> {
    Ok(misclust::SimexConfig {
        lambda_grid,
        b,
        extrapolant: parse::<ExtrapolantKind>(extrapolant)?,
        seed,
    })
}

#[pyfunction]
#[pyo3(signature = (
    family, labels, m, pi, y = None, time = None, event = None,
    lambda_grid = vec![0.5, 1.0, 1.5, 2.0], b = 100, extrapolant = "quadratic", seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn run_mcsimex(
    py: Python<'_>,
    family: &str,
    labels: Vec<usize>,
    m: usize,
    pi: &MisclassMatrix,
    y: Option<Vec<u8>>,
    time: Option<Vec<f64>>,
    event: Option<Vec<bool>>,
    lambda_grid: Vec<f64>,
    b: usize,
    extrapolant: &str,
    seed: u64,
) -> PyResult<SimexFit> {
    let family: Family = parse(family)?;
    let out = outcome(family, y, time, event)?;
    let config = simex_config(lambda_grid, b, extrapolant, seed)?;
    let fit = py
        .detach(|| misclust::run_mcsimex(&out, &labels, m, &pi.inner, family, &config))
        .map_err(py_err)?;
    Ok(SimexFit {
        naive: Py::new(py, RegressionFit::from(&fit.naive))?,
        corrected: fit.corrected.clone(),
        std_errors: fit.std_errors(),
        lambdas: fit.lambdas.clone(),
        per_lambda: fit.per_lambda.clone(),
        curve: fit.curve(),
    })
}

#[pyfunction]
#[pyo3(signature = (
    family, covariates, m, y = None, time = None, event = None, n_boot = 1000,
    lambda_grid = vec![0.5, 1.0, 1.5, 2.0], b = 100, extrapolant = "quadratic", rule = "density", seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn bootstrap_simex(
    py: Python<'_>,
    family: &str,
    covariates: Vec<Vec<f64>>,
    m: usize,
    y: Option<Vec<u8>>,
    time: Option<Vec<f64>>,
    event: Option<Vec<bool>>,
    n_boot: usize,
    lambda_grid: Vec<f64>,
    b: usize,
    extrapolant: &str,
    rule: &str,
    seed: u64,
) -> PyResult<BootstrapResult> {
    let family: Family = parse(family)?;
    let out = outcome(family, y, time, event)?;
    let x = matrix(&covariates)?;
    let config = simex_config(lambda_grid, b, extrapolant, seed)?;
    let options = BootstrapOptions {
        n_boot,
        rule: parse(rule)?,
        ..BootstrapOptions::default()
    };
    let res = py.detach(|| boot(&out, &x, m, family, &config, &options)).map_err(py_err)?;
    Ok(BootstrapResult {
        naive: Py::new(py, RegressionFit::from(&res.naive))?,
        point: res.point,
        median: res.median,
        ci_lower: res.ci_lower,
        ci_upper: res.ci_upper,
        replicates: res.replicates,
        n_failed: res.n_failed,
        mean_misclassification: res.mean_misclass.to_rows(),
    })
}

#[pymodule]
fn misclust_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<GmmModel>()?;
    m.add_class::<KmeansModel>()?;
    m.add_class::<MisclassMatrix>()?;
    m.add_class::<RegressionFit>()?;
    m.add_class::<SimexFit>()?;
    m.add_class::<BootstrapResult>()?;
    m.add_function(wrap_pyfunction!(fit_gmm, m)?)?;
    m.add_function(wrap_pyfunction!(fit_kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(fit_logistic, m)?)?;
    m.add_function(wrap_pyfunction!(fit_cox, m)?)?;
    m.add_function(wrap_pyfunction!(run_mcsimex, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_simex, m)?)?;
    Ok(())
}
