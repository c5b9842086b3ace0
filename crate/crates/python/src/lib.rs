//! Python bindings. Matrices cross the boundary as lists of rows.

use lcda::classify::ModelParams;
use lcda::select::fit_k;
use lcda::sim::adjusted_rand_index as ari;
use lcda::{
    compute_class_stats, ClassStats, ClassifierModel, DfMode, EMConfig, Error, FitResult, Fitter,
    LabeledDataset, Variant,
};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Rows = Vec<Vec<f64>>;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidClass { .. } | Error::InvalidDataset(_) | Error::Domain(_) | Error::Rank { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyArithmeticError::new_err(e.to_string()),
    }
}

fn matrix(rows: &Rows) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn dataset(labels: Vec<String>, x: Rows) -> PyResult<LabeledDataset> {
    if labels.len() != x.len() {
        return Err(PyValueError::new_err(format!(
            "{} labels for {} rows",
            labels.len(),
            x.len()
        )));
    }
    let p = x.first().map_or(0, Vec::len);
    let pairs: Vec<(String, Vec<f64>)> = labels.into_iter().zip(x).collect();
    LabeledDataset::from_labeled_rows(p, &pairs).map_err(to_py)
}

fn stats(labels: Vec<String>, x: Rows) -> PyResult<Vec<ClassStats>> {
    compute_class_stats(&dataset(labels, x)?).map_err(to_py)
}

fn config(
    k: usize,
    variant: &str,
    df_mode: Option<&str>,
    epsilon: f64,
    max_iter: usize,
    ridge: f64,
    seed: u64,
) -> PyResult<EMConfig> {
    let cfg = EMConfig {
        k,
        epsilon,
        max_iter,
        variant: variant.parse::<Variant>().map_err(to_py)?,
        df_mode: df_mode.map(str::parse::<DfMode>).transpose().map_err(to_py)?,
        ridge,
        seed,
    };
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

/// Result of an EM fit over class scatter matrices.
#[pyclass(name = "EmFit", module = "lcda_py", frozen)]
struct PyEmFit {
    inner: FitResult,
}

#[pymethods]
impl PyEmFit {
    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.params.weights().to_vec()
    }

    #[getter]
    fn covariances(&self) -> Vec<Rows> {
        self.inner.params.covariances().iter().map(rows).collect()
    }

    #[getter]
    fn adjusted_covariances(&self) -> Vec<Rows> {
        self.inner.adjusted_covariances.iter().map(rows).collect()
    }

    /// Class-by-component responsibilities.
    #[getter]
    fn tau(&self) -> Rows {
        self.inner.tau.to_rows()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels()
    }

    #[getter]
    fn loglik(&self) -> f64 {
        self.inner.loglik()
    }

    #[getter]
    fn loglik_trace(&self) -> Vec<f64> {
        self.inner.loglik_trace.clone()
    }

    #[getter]
    fn n_iter(&self) -> usize {
        self.inner.n_iter
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn bic(&self) -> Option<f64> {
        self.inner.bic
    }

    fn __repr__(&self) -> String {
        format!(
            "EmFit(k={}, loglik={:.6}, n_iter={}, converged={})",
            self.inner.params.k(),
            self.inner.loglik(),
            self.inner.n_iter,
            if self.inner.converged { "True" } else { "False" }
        )
    }
}

/// A fitted LCDA, LDA or QDA classifier.
#[pyclass(name = "Classifier", module = "lcda_py", frozen)]
struct PyClassifier {
    inner: ClassifierModel,
}

impl PyClassifier {
    fn query(&self, x: Vec<f64>) -> DVector<f64> {
        DVector::from_vec(x)
    }
}

#[pymethods]
impl PyClassifier {
    #[staticmethod]
    #[pyo3(signature = (labels, x, k, *, variant="auto", df_mode=None, epsilon=1e-8, max_iter=500, ridge=0.0, seed=0, use_adjusted=false))]
    #[allow(clippy::too_many_arguments)]
    fn fit_lcda(
        py: Python<'_>,
        labels: Vec<String>,
        x: Rows,
        k: usize,
        variant: &str,
        df_mode: Option<&str>,
        epsilon: f64,
        max_iter: usize,
        ridge: f64,
        seed: u64,
        use_adjusted: bool,
    ) -> PyResult<Self> {
        let ds = dataset(labels, x)?;
        let cfg = config(k, variant, df_mode, epsilon, max_iter, ridge, seed)?;
        let inner = py
            .detach(|| lcda::fit_lcda(&ds, k, &cfg, use_adjusted))
            .map_err(to_py)?;
        Ok(PyClassifier { inner })
    }

    #[staticmethod]
    fn fit_lda(labels: Vec<String>, x: Rows) -> PyResult<Self> {
        let inner = lcda::fit_lda(&dataset(labels, x)?).map_err(to_py)?;
        Ok(PyClassifier { inner })
    }

    #[staticmethod]
    fn fit_qda(labels: Vec<String>, x: Rows) -> PyResult<Self> {
        let inner = lcda::fit_qda(&dataset(labels, x)?).map_err(to_py)?;
        Ok(PyClassifier { inner })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().as_str()
    }

    #[getter]
    fn class_ids(&self) -> Vec<String> {
        self.inner.class_ids().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn means(&self) -> Rows {
        self.inner.means().iter().map(|m| m.as_slice().to_vec()).collect()
    }

    /// Latent covariances for LCDA, the pooled covariance for LDA, one per
    /// class for QDA.
    #[getter]
    fn covariances(&self) -> Vec<Rows> {
        match self.inner.params() {
            ModelParams::Lcda(l) => l.params.covariances().iter().map(rows).collect(),
            ModelParams::Lda { pooled } => vec![rows(pooled)],
            ModelParams::Qda { covariances } => covariances.iter().map(rows).collect(),
        }
    }

    #[getter]
    fn weights(&self) -> Option<Vec<f64>> {
        match self.inner.params() {
            ModelParams::Lcda(l) => Some(l.params.weights().to_vec()),
            _ => None,
        }
    }

    /// Unnormalized log class scores.
    fn scores(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.scores(&self.query(x)).map_err(to_py)
    }

    /// Posterior class probabilities under equal priors.
    fn posterior(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.predict(&self.query(x)).map_err(to_py)?.posterior())
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<String> {
        Ok(self.inner.predict(&self.query(x)).map_err(to_py)?.class_id)
    }

    fn predict_many(&self, xs: Rows) -> PyResult<Vec<String>> {
        xs.into_iter().map(|x| self.predict(x)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Classifier(kind={:?}, classes={}, dim={})",
            self.kind(),
            self.inner.n_classes(),
            self.inner.dim()
        )
    }
}

/// Per-class mean, scatter matrix, count and rank.
#[pyfunction]
fn class_stats<'py>(py: Python<'py>, labels: Vec<String>, x: Rows) -> PyResult<Vec<Bound<'py, PyDict>>> {
    stats(labels, x)?
        .into_iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("class_id", &s.class_id)?;
            d.set_item("mean", s.mean.as_slice().to_vec())?;
            d.set_item("scatter", rows(&s.scatter))?;
            d.set_item("count", s.count)?;
            d.set_item("rank", s.rank)?;
            Ok(d)
        })
        .collect()
}

/// Hierarchical initialization plus EM over the class scatters.
#[pyfunction]
#[pyo3(signature = (labels, x, k, *, variant="auto", df_mode=None, epsilon=1e-8, max_iter=500, ridge=0.0, seed=0))]
#[allow(clippy::too_many_arguments)]
fn fit_em(
    py: Python<'_>,
    labels: Vec<String>,
    x: Rows,
    k: usize,
    variant: &str,
    df_mode: Option<&str>,
    epsilon: f64,
    max_iter: usize,
    ridge: f64,
    seed: u64,
) -> PyResult<PyEmFit> {
    let st = stats(labels, x)?;
    let cfg = config(k, variant, df_mode, epsilon, max_iter, ridge, seed)?;
    let inner = py.detach(|| fit_k(&st, k, &cfg)).map_err(to_py)?;
    Ok(PyEmFit { inner })
}

/// BIC over `k_min..=k_max`. Returns the chosen `k` and the BIC per `k`
/// (`inf` where the fit failed).
#[pyfunction]
#[pyo3(signature = (labels, x, k_min, k_max, *, variant="auto", df_mode=None, epsilon=1e-8, max_iter=500, ridge=0.0, seed=0))]
#[allow(clippy::too_many_arguments)]
fn select_k(
    py: Python<'_>,
    labels: Vec<String>,
    x: Rows,
    k_min: usize,
    k_max: usize,
    variant: &str,
    df_mode: Option<&str>,
    epsilon: f64,
    max_iter: usize,
    ridge: f64,
    seed: u64,
) -> PyResult<(usize, Vec<f64>)> {
    let st = stats(labels, x)?;
    let cfg = config(1, variant, df_mode, epsilon, max_iter, ridge, seed)?;
    let grid = py
        .detach(|| lcda::select_k(&st, k_min..=k_max, &cfg))
        .map_err(to_py)?;
    Ok((grid.selected_k, grid.records.iter().map(|r| r.bic).collect()))
}

/// Leave-one-out accuracy. `method` is lcda, lcda_adjusted, lda or qda.
#[pyfunction]
#[pyo3(signature = (labels, x, method, k=None))]
fn loocv_accuracy(py: Python<'_>, labels: Vec<String>, x: Rows, method: &str, k: Option<usize>) -> PyResult<f64> {
    let ds = dataset(labels, x)?;
    let need_k = || k.ok_or_else(|| PyValueError::new_err("lcda needs k"));
    let fitter = match method {
        "lcda" => Fitter::lcda(need_k()?, false),
        "lcda_adjusted" => Fitter::lcda(need_k()?, true),
        "lda" => Fitter::Lda,
        "qda" => Fitter::Qda,
        other => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
    };
    let r = py.detach(|| lcda::evaluate_loocv(&ds, &fitter)).map_err(to_py)?;
    Ok(r.overall)
}

#[pyfunction]
fn adjusted_rand_index(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    ari(&a, &b).map_err(to_py)
}

#[pyfunction]
fn wishart_log_density(s: Rows, sigma: Rows, nu: f64) -> PyResult<f64> {
    lcda::wishart_log_density(&matrix(&s)?, &matrix(&sigma)?, nu).map_err(to_py)
}

#[pyfunction]
fn singular_wishart_log_density(s: Rows, sigma: Rows, nu: f64) -> PyResult<f64> {
    lcda::singular_wishart_log_density(&matrix(&s)?, &matrix(&sigma)?, nu).map_err(to_py)
}

#[pyfunction]
fn log_multivariate_gamma(p: usize, x: f64) -> PyResult<f64> {
    lcda::log_multivariate_gamma(p, x).map_err(to_py)
}

#[pymodule]
fn lcda_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyClassifier>()?;
    m.add_class::<PyEmFit>()?;
    m.add_function(wrap_pyfunction!(class_stats, m)?)?;
    m.add_function(wrap_pyfunction!(fit_em, m)?)?;
    m.add_function(wrap_pyfunction!(select_k, m)?)?;
    m.add_function(wrap_pyfunction!(loocv_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_rand_index, m)?)?;
    m.add_function(wrap_pyfunction!(wishart_log_density, m)?)?;
    m.add_function(wrap_pyfunction!(singular_wishart_log_density, m)?)?;
    m.add_function(wrap_pyfunction!(log_multivariate_gamma, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
