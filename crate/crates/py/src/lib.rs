//! Python bindings: kernels, sample sets, neighbor queries, the synthetic
//! models, the adaptive estimators, and the laboratory entry points.

use knnlab::cli::{build_study, default_study_keys};
use knnlab::estimators::{
    density_at_with_k, g_at_with_k, regression_at_with_k, schedule_b, schedule_k, schedule_m,
    DegeneratePolicy, EstimateAtPoint, EstimatorConfig, Target,
};
use knnlab::kernels::{make_kernel_from_spec, Kernel};
use knnlab::neighbor_index::{build_index, NeighborIndex, SampleSet, DEFAULT_LEAF_SIZE};
use knnlab::rate_lab::{
    bias_oracle, default_grid_inset, make_eval_grid, run_rate_study as run_study,
    sandwich_diagnostic, sup_error as sup_error_impl, theory_rate as theory_rate_impl, BetaRule,
};
use knnlab::synthetic_models::{SyntheticModel, TruthKind};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::collections::BTreeMap;
use std::sync::Arc;

fn to_py_err(e: knnlab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn estimate_dict(py: Python<'_>, est: &EstimateAtPoint) -> PyResult<Py<PyDict>> {
    let d = PyDict::new(py);
    d.set_item("value", est.value)?;
    d.set_item("radius_used", est.radius_used)?;
    d.set_item("k_used", est.k_used)?;
    d.set_item("floored", est.floored)?;
    Ok(d.into())
}

/// A smoothing kernel built from a spec string such as `gaussian:p=2:r=1`.
#[pyclass(frozen, name = "Kernel")]
struct PyKernel {
    inner: Kernel,
}

#[pymethods]
impl PyKernel {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        Ok(Self {
            inner: make_kernel_from_spec(spec).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn spec(&self) -> String {
        self.inner.spec_string()
    }

    fn eval(&self, u: Vec<f64>) -> PyResult<f64> {
        knnlab::kernels::eval_kernel(&self.inner, &u).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("Kernel('{}')", self.inner.spec_string())
    }
}

/// An immutable sample of points, optionally with responses.
#[pyclass(frozen, name = "SampleSet")]
struct PySampleSet {
    inner: Arc<SampleSet>,
}

#[pymethods]
impl PySampleSet {
    #[new]
    #[pyo3(signature = (points, responses=None))]
    fn new(points: Vec<Vec<f64>>, responses: Option<Vec<f64>>) -> PyResult<Self> {
        let p = points.first().map_or(0, |row| row.len());
        let mut flat = Vec::with_capacity(points.len() * p);
        for row in &points {
            if row.len() != p {
                return Err(PyValueError::new_err(format!(
                    "ragged points: row with {} coordinates, expected {p}",
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        Ok(Self {
            inner: Arc::new(SampleSet::from_flat(flat, p, responses).map_err(to_py_err)?),
        })
    }

    #[staticmethod]
    fn load_csv(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(SampleSet::load_csv(path.as_ref()).map_err(to_py_err)?),
        })
    }

    fn save_csv(&self, path: &str) -> PyResult<()> {
        self.inner.save_csv(path.as_ref()).map_err(to_py_err)
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn row(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.len() {
            return Err(PyValueError::new_err(format!(
                "row {i} out of range for {} points",
                self.inner.len()
            )));
        }
        Ok(self.inner.row(i).to_vec())
    }

    #[getter]
    fn responses(&self) -> Option<Vec<f64>> {
        self.inner.responses().map(|ys| ys.to_vec())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "SampleSet(n={}, p={})",
            self.inner.len(),
            self.inner.dimension()
        )
    }
}

/// Exact k-nearest-neighbor queries over a sample set.
#[pyclass(frozen, name = "NeighborIndex")]
struct PyNeighborIndex {
    inner: NeighborIndex,
}

#[pymethods]
impl PyNeighborIndex {
    #[new]
    #[pyo3(signature = (sample_set, leaf_size=DEFAULT_LEAF_SIZE))]
    fn new(sample_set: &PySampleSet, leaf_size: usize) -> PyResult<Self> {
        Ok(Self {
            inner: build_index(Arc::clone(&sample_set.inner), leaf_size).map_err(to_py_err)?,
        })
    }

    /// Distance to the k-th nearest point and the ids of the k nearest.
    fn knn_radius(&self, x: Vec<f64>, k: usize) -> PyResult<(f64, Vec<usize>)> {
        let result = self.inner.knn_radius(&x, k).map_err(to_py_err)?;
        Ok((result.radius, result.neighbor_ids))
    }

    fn __len__(&self) -> usize {
        self.inner.sample_set().len()
    }
}

/// A ground-truth model built from a spec string such as `M2:p=2:sigma=0.4`.
#[pyclass(frozen, name = "Model")]
struct PyModel {
    inner: SyntheticModel,
}

fn parse_model_py(spec: &str) -> PyResult<SyntheticModel> {
    knnlab::cli::parse_model_spec(spec).map_err(to_py_err)
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        Ok(Self {
            inner: parse_model_py(spec)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    #[getter]
    fn density_floor(&self) -> f64 {
        self.inner.density_floor()
    }

    #[getter]
    fn eval_box(&self) -> (Vec<f64>, Vec<f64>) {
        let (lo, hi) = self.inner.eval_box();
        (lo.to_vec(), hi.to_vec())
    }

    fn true_density(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.true_density(&x).map_err(to_py_err)
    }

    fn true_regression(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.true_regression(&x).map_err(to_py_err)
    }

    /// Ground truth for `density`, `g`, `g1`, or `g2` at an interior point.
    fn truth(&self, kind: &str, x: Vec<f64>) -> PyResult<f64> {
        let kind = TruthKind::parse(kind).map_err(to_py_err)?;
        self.inner.truth(kind, &x).map_err(to_py_err)
    }

    /// Draws (X, Y) pairs; returns the sample set and the clip count.
    #[pyo3(signature = (n, seed, c_m=1.0))]
    fn sample(&self, n: usize, seed: u64, c_m: f64) -> PyResult<(PySampleSet, usize)> {
        let trial = self.inner.sample(n, seed, c_m).map_err(to_py_err)?;
        Ok((
            PySampleSet {
                inner: Arc::new(trial.sample),
            },
            trial.clip_count,
        ))
    }

    fn __repr__(&self) -> String {
        format!("Model('{}', p={})", self.inner.name(), self.inner.dimension())
    }
}

/// The adaptive estimator with its tuning schedules.
#[pyclass(frozen, name = "Estimator")]
struct PyEstimator {
    inner: EstimatorConfig,
}

#[pymethods]
impl PyEstimator {
    #[new]
    #[pyo3(signature = (kernel, c1=0.7, c2=0.05, c_m=1.0, policy="error"))]
    fn new(kernel: &PyKernel, c1: f64, c2: f64, c_m: f64, policy: &str) -> PyResult<Self> {
        let policy = DegeneratePolicy::parse(policy).map_err(to_py_err)?;
        Ok(Self {
            inner: EstimatorConfig::new(c1, c2, c_m, kernel.inner.clone(), policy)
                .map_err(to_py_err)?,
        })
    }

    fn density(
        &self,
        py: Python<'_>,
        index: &PyNeighborIndex,
        x: Vec<f64>,
    ) -> PyResult<Py<PyDict>> {
        let n = index.inner.sample_set().len();
        let k = schedule_k(n, self.inner.c1()).map_err(to_py_err)?;
        let est = density_at_with_k(&index.inner, &self.inner, &x, k).map_err(to_py_err)?;
        estimate_dict(py, &est)
    }

    fn g(&self, py: Python<'_>, index: &PyNeighborIndex, x: Vec<f64>) -> PyResult<Py<PyDict>> {
        let n = index.inner.sample_set().len();
        let k = schedule_k(n, self.inner.c1()).map_err(to_py_err)?;
        let est = g_at_with_k(&index.inner, &self.inner, &x, k).map_err(to_py_err)?;
        estimate_dict(py, &est)
    }

    fn regression(
        &self,
        py: Python<'_>,
        index: &PyNeighborIndex,
        x: Vec<f64>,
    ) -> PyResult<Py<PyDict>> {
        let n = index.inner.sample_set().len();
        let k = schedule_k(n, self.inner.c1()).map_err(to_py_err)?;
        let b_n = schedule_b(n, self.inner.c2()).map_err(to_py_err)?;
        let est =
            regression_at_with_k(&index.inner, &self.inner, &x, k, b_n).map_err(to_py_err)?;
        estimate_dict(py, &est)
    }
}

/// k = clamp(floor(n^c1), 1, n) with c1 in (1/2, 1).
#[pyfunction]
#[pyo3(name = "schedule_k")]
fn py_schedule_k(n: usize, c1: f64) -> PyResult<usize> {
    schedule_k(n, c1).map_err(to_py_err)
}

/// b = n^(-c2) with c2 in (0, 1/10).
#[pyfunction]
#[pyo3(name = "schedule_b")]
fn py_schedule_b(n: usize, c2: f64) -> PyResult<f64> {
    schedule_b(n, c2).map_err(to_py_err)
}

/// M = C_M * sqrt(ln n) for n >= 2.
#[pyfunction]
#[pyo3(name = "schedule_m")]
fn py_schedule_m(n: usize, c_m: f64) -> PyResult<f64> {
    schedule_m(n, c_m).map_err(to_py_err)
}

/// The predicted sup-norm error scale for a target at size n.
#[pyfunction]
#[pyo3(signature = (n, k, p, r, m_n=1.0, b_n=1.0, target="density"))]
#[allow(clippy::too_many_arguments)]
fn theory_rate(
    n: usize,
    k: usize,
    p: usize,
    r: usize,
    m_n: f64,
    b_n: f64,
    target: &str,
) -> PyResult<f64> {
    let target = Target::parse(target).map_err(to_py_err)?;
    theory_rate_impl(n, k, p, r, m_n, b_n, target).map_err(to_py_err)
}

/// Largest absolute difference between two equal-length vectors.
#[pyfunction]
fn sup_error(estimates: Vec<f64>, truths: Vec<f64>) -> PyResult<f64> {
    sup_error_impl(&estimates, &truths).map_err(to_py_err)
}

/// Runs a seeded scaling study; accepts the same keys as the CLI config.
#[pyfunction]
#[pyo3(signature = (**overrides))]
fn run_rate_study(py: Python<'_>, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Py<PyDict>> {
    let mut keys: BTreeMap<String, String> = default_study_keys();
    if let Some(dict) = overrides {
        for (key, value) in dict.iter() {
            let key: String = key.extract()?;
            if !keys.contains_key(&key) {
                return Err(PyValueError::new_err(format!(
                    "unknown config key '{key}'"
                )));
            }
            keys.insert(key, value.str()?.to_string());
        }
    }
    let (config, _) = build_study(&keys).map_err(to_py_err)?;
    let result = py.detach(|| run_study(&config)).map_err(to_py_err)?;
    let out = PyDict::new(py);
    let rows: Vec<Py<PyDict>> = result
        .per_n
        .iter()
        .map(|row| {
            let d = PyDict::new(py);
            d.set_item("n", row.n)?;
            d.set_item("k_n", row.k_n)?;
            d.set_item("b_n", row.b_n)?;
            d.set_item("M_n", row.m_n)?;
            d.set_item("mean_sup_error", row.mean_sup_error)?;
            d.set_item("median", row.median)?;
            d.set_item("q10", row.q10)?;
            d.set_item("q90", row.q90)?;
            d.set_item("clip_rate", row.clip_rate)?;
            d.set_item("theory_rate", row.theory_rate)?;
            Ok(d.into())
        })
        .collect::<PyResult<_>>()?;
    out.set_item("per_n", rows)?;
    out.set_item("fitted_slope", result.fitted_slope)?;
    out.set_item("fitted_intercept", result.fitted_intercept)?;
    out.set_item("theory_exponent_bias", result.theory_exponent_bias)?;
    out.set_item("theory_exponent_variance", result.theory_exponent_variance)?;
    out.set_item("degenerate_trials", result.degenerate_trials)?;
    out.set_item("total_trials", result.total_trials)?;
    Ok(out.into())
}

/// Brackets the adaptive density estimate between two fixed-bandwidth
/// estimates on a fresh sample; returns the summary rates.
#[pyfunction]
#[pyo3(signature = (model, kernel, n=10_000, seed=20260816, grid=200, c1=0.7, c2=0.05, c_m=1.0, beta="coverage"))]
#[allow(clippy::too_many_arguments)]
fn sandwich_check(
    py: Python<'_>,
    model: &PyModel,
    kernel: &PyKernel,
    n: usize,
    seed: u64,
    grid: usize,
    c1: f64,
    c2: f64,
    c_m: f64,
    beta: &str,
) -> PyResult<Py<PyDict>> {
    let beta_rule = BetaRule::parse(beta).map_err(to_py_err)?;
    let estimator = EstimatorConfig::new(c1, c2, c_m, kernel.inner.clone(), DegeneratePolicy::Error)
        .map_err(to_py_err)?;
    let model = model.inner.clone();
    let report = py
        .detach(|| {
            let trial = model.sample(n, seed, c_m)?;
            let inset = default_grid_inset(&model, n, c1)?;
            let eval_grid = make_eval_grid(&model, grid, inset)?;
            sandwich_diagnostic(&model, &trial.sample, &estimator, &eval_grid, beta_rule)
        })
        .map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("n", report.n)?;
    d.set_item("k", report.k)?;
    d.set_item("beta", report.beta)?;
    d.set_item("containment_rate", report.containment_rate)?;
    d.set_item("conditional_order_rate", report.conditional_order_rate)?;
    d.set_item("points", report.per_point.len())?;
    Ok(d.into())
}

/// Quadrature value of the smoothed truth at a point, with its bias.
#[pyfunction]
#[pyo3(signature = (model, kernel, target, x, d1, d2, budget=20_000))]
fn bias_check(
    py: Python<'_>,
    model: &PyModel,
    kernel: &PyKernel,
    target: &str,
    x: Vec<f64>,
    d1: f64,
    d2: f64,
    budget: usize,
) -> PyResult<Py<PyDict>> {
    let kind = TruthKind::parse(target).map_err(to_py_err)?;
    let report =
        bias_oracle(&model.inner, &kernel.inner, kind, d1, d2, &x, budget).map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("expected_value", report.expected_value)?;
    d.set_item("truth_at_x", report.truth_at_x)?;
    d.set_item("bias_abs", report.bias_abs)?;
    d.set_item("gamma", report.gamma)?;
    d.set_item("boundary_flagged", report.boundary_flagged)?;
    d.set_item("nodes_per_axis", report.nodes_per_axis)?;
    Ok(d.into())
}

#[pymodule]
fn knnlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernel>()?;
    m.add_class::<PySampleSet>()?;
    m.add_class::<PyNeighborIndex>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyEstimator>()?;
    m.add_function(wrap_pyfunction!(py_schedule_k, m)?)?;
    m.add_function(wrap_pyfunction!(py_schedule_b, m)?)?;
    m.add_function(wrap_pyfunction!(py_schedule_m, m)?)?;
    m.add_function(wrap_pyfunction!(theory_rate, m)?)?;
    m.add_function(wrap_pyfunction!(sup_error, m)?)?;
    m.add_function(wrap_pyfunction!(run_rate_study, m)?)?;
    m.add_function(wrap_pyfunction!(sandwich_check, m)?)?;
    m.add_function(wrap_pyfunction!(bias_check, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
