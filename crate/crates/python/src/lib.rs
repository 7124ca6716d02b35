//! Python bindings (`pygeomind`) for the geomind engine.
//!
//! Geometry failures (chart exits, failed shooting, singular points) raise
//! `pygeomind.GeometryError`; bad arguments and invalid fields raise `ValueError`.

use std::collections::BTreeMap;

use geomind::cognition::{Predictor, SampledEmbedding};
use geomind::geodesic::path_length_energy;
use geomind::io;
use geomind::manifold::conformal_factor;
use geomind::mind::{self, select_by_scores, GridSpec};
use geomind::{GeoError, GeodesicState, MetricSource, ShootingOptions, TokenEmbedding, ZeroForcing};
use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList, PyTuple};

create_exception!(pygeomind, GeometryError, PyException);

fn py_err(e: GeoError) -> PyErr {
    match e {
        GeoError::ChartExit { .. }
        | GeoError::NoGeodesic { .. }
        | GeoError::SingularChart { .. }
        | GeoError::SingularMetric { .. } => GeometryError::new_err(e.to_string()),
        GeoError::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn ok<T>(r: geomind::Result<T>) -> PyResult<T> {
    r.map_err(py_err)
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn rows_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    use pyo3::IntoPyObjectExt;
    use serde_json::Value;
    match v {
        Value::Null => Ok(py.None()),
        Value::Bool(b) => b.into_py_any(py),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_py_any(py),
            None => n.as_f64().unwrap_or(f64::NAN).into_py_any(py),
        },
        Value::String(s) => s.into_py_any(py),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_py_any(py)
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_py_any(py)
        }
    }
}

/// A weighted set of Gaussian token embeddings with kernel bandwidth and regularizer.
#[pyclass(name = "TokenField", module = "pygeomind", from_py_object)]
#[derive(Clone)]
pub struct PyTokenField {
    inner: geomind::TokenField,
}

#[pymethods]
impl PyTokenField {
    /// `tokens` is a list of `(id, mean[, diagonal_covariance[, weight]])` tuples;
    /// a `None` covariance means zero.
    #[new]
    fn new(dimension: usize, bandwidth: f64, epsilon: f64, tokens: Vec<Bound<'_, PyTuple>>) -> PyResult<Self> {
        let tokens = tokens
            .iter()
            .map(|t| {
                if !(2..=4).contains(&t.len()) {
                    return Err(PyValueError::new_err("token tuples are (id, mean[, covariance[, weight]])"));
                }
                let id: u64 = t.get_item(0)?.extract()?;
                let mean: Vec<f64> = t.get_item(1)?.extract()?;
                let cov: Option<Vec<f64>> = if t.len() > 2 { t.get_item(2)?.extract()? } else { None };
                let weight: f64 = if t.len() > 3 { t.get_item(3)?.extract()? } else { 1.0 };
                let mut token = TokenEmbedding::new(id, mean).with_weight(weight);
                if let Some(diag) = cov {
                    token = token.with_diagonal_covariance(&diag);
                }
                Ok(token)
            })
            .collect::<PyResult<Vec<_>>>()?;
        Ok(PyTokenField {
            inner: ok(geomind::TokenField::new(dimension, bandwidth, epsilon, tokens))?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyTokenField {
            inner: ok(io::parse_field(text, "<string>"))?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyTokenField {
            inner: ok(io::load_field(path))?,
        })
    }

    fn to_json(&self) -> String {
        io::field_to_json(&self.inner)
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    #[getter]
    fn bandwidth(&self) -> f64 {
        self.inner.bandwidth()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon()
    }

    #[getter]
    fn ids(&self) -> Vec<u64> {
        self.inner.tokens().iter().map(|t| t.id).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "TokenField(dimension={}, tokens={}, bandwidth={}, epsilon={})",
            self.inner.dimension(),
            self.inner.len(),
            self.inner.bandwidth(),
            self.inner.epsilon()
        )
    }

    fn mean(&self, id: u64) -> PyResult<Vec<f64>> {
        self.inner
            .token(id)
            .map(|t| t.mean.clone())
            .ok_or_else(|| PyValueError::new_err(format!("unknown token id {id}")))
    }

    fn weight(&self, id: u64) -> PyResult<f64> {
        self.inner
            .token(id)
            .map(|t| t.weight)
            .ok_or_else(|| PyValueError::new_err(format!("unknown token id {id}")))
    }

    fn density(&self, x: Vec<f64>) -> PyResult<f64> {
        ok(geomind::density_at(&self.inner, &x))
    }

    fn conformal_factor(&self, x: Vec<f64>) -> PyResult<f64> {
        ok(conformal_factor(&self.inner, &x))
    }

    fn nearest_token(&self, x: Vec<f64>) -> PyResult<u64> {
        ok(mind::nearest_token(&self.inner, &x))
    }

    fn feature_vector(&self, ids: Vec<u64>) -> PyResult<Vec<f64>> {
        ok(mind::feature_vector(&self.inner, &ids))
    }

    fn manipulate_feature(&self, ids: Vec<u64>, scale: f64) -> PyResult<Self> {
        Ok(PyTokenField {
            inner: ok(mind::manipulate_feature(&self.inner, &ids, scale))?,
        })
    }

    fn learn_update(&self, perceived: Vec<f64>, eta: f64) -> PyResult<Self> {
        Ok(PyTokenField {
            inner: ok(mind::learn_update(&self.inner, &perceived, eta))?,
        })
    }

    fn components(&self, rho_min: f64) -> PyResult<Vec<Vec<u64>>> {
        ok(mind::token_components(&self.inner, rho_min))
    }

    fn intrinsic_dimension(&self) -> usize {
        mind::intrinsic_dimension(&self.inner)
    }

    /// `[(id, x, y)]`: token means projected onto their first two principal axes.
    fn pca_projection(&self) -> Vec<(u64, f64, f64)> {
        mind::pca_projection(&self.inner)
            .into_iter()
            .map(|(id, [x, y])| (id, x, y))
            .collect()
    }
}

/// Source of the local geometry: a token field's conformal metric, flat space or a sphere chart.
#[pyclass(name = "Metric", module = "pygeomind", from_py_object)]
#[derive(Clone)]
pub struct PyMetric {
    inner: MetricSource,
}

#[pymethods]
impl PyMetric {
    #[staticmethod]
    fn field(field: &PyTokenField) -> Self {
        PyMetric {
            inner: MetricSource::conformal(field.inner.clone()),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (scale = 1.0))]
    fn flat(scale: f64) -> Self {
        PyMetric {
            inner: MetricSource::Flat { scale },
        }
    }

    #[staticmethod]
    #[pyo3(signature = (radius = 1.0))]
    fn sphere(radius: f64) -> Self {
        PyMetric {
            inner: MetricSource::sphere(radius),
        }
    }

    fn __repr__(&self) -> String {
        match &self.inner {
            MetricSource::FieldConformal(f) => format!("Metric.field(<{} tokens>)", f.len()),
            MetricSource::Flat { scale } => format!("Metric.flat({scale})"),
            MetricSource::Sphere { radius } => format!("Metric.sphere({radius})"),
        }
    }

    fn tensor(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(matrix_rows(ok(geomind::metric_at(&self.inner, &x))?.components()))
    }

    /// `gamma[mu][nu][lam]`; `numeric=True` uses finite differences of the metric.
    #[pyo3(signature = (x, numeric = false))]
    fn christoffel(&self, x: Vec<f64>, numeric: bool) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let g = if numeric {
            ok(geomind::christoffel_numeric(&self.inner, &x))?
        } else {
            ok(geomind::christoffel_at(&self.inner, &x))?
        };
        let d = g.dimension();
        Ok((0..d)
            .map(|m| (0..d).map(|n| (0..d).map(|l| g.get(m, n, l)).collect()).collect())
            .collect())
    }

    fn scalar_curvature(&self, x: Vec<f64>) -> PyResult<f64> {
        Ok(ok(geomind::curvature_at(&self.inner, &x))?.scalar)
    }

    fn ricci(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(matrix_rows(&ok(geomind::curvature_at(&self.inner, &x))?.ricci))
    }

    /// Unforced geodesic from `(position, velocity)`; leaving the chart truncates it.
    fn integrate(&self, position: Vec<f64>, velocity: Vec<f64>, horizon: f64, dt: f64) -> PyResult<PyTrajectory> {
        let start = GeodesicState::new(position, velocity);
        Ok(PyTrajectory {
            inner: ok(geomind::integrate_geodesic(&start, &self.inner, &ZeroForcing, horizon, dt))?,
        })
    }

    #[pyo3(signature = (a, b, tol = 1e-8, max_iters = 50, dt = 1e-2))]
    fn geodesic_between(&self, a: Vec<f64>, b: Vec<f64>, tol: f64, max_iters: usize, dt: f64) -> PyResult<PyTrajectory> {
        let opts = ShootingOptions { tol, max_iters, dt };
        Ok(PyTrajectory {
            inner: ok(geomind::geodesic_between(&a, &b, &self.inner, &opts))?,
        })
    }
}

/// Sampled states of a (possibly cognition-driven) geodesic with token activations.
#[pyclass(name = "Trajectory", module = "pygeomind", from_py_object)]
#[derive(Clone)]
pub struct PyTrajectory {
    inner: geomind::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyTrajectory {
            inner: ok(io::parse_trajectory_json(text, "<string>"))?,
        })
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(PyTrajectory {
            inner: ok(io::parse_trajectory_csv(text))?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn truncated(&self) -> bool {
        self.inner.truncated
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.time).collect()
    }

    #[getter]
    fn positions(&self) -> Vec<Vec<f64>> {
        self.inner.samples.iter().map(|s| s.position.clone()).collect()
    }

    #[getter]
    fn velocities(&self) -> Vec<Vec<f64>> {
        self.inner.samples.iter().map(|s| s.velocity.clone()).collect()
    }

    /// Activated token per sample, `None` where nothing was activated.
    #[getter]
    fn token_ids(&self) -> Vec<Option<u64>> {
        (0..self.inner.len()).map(|i| self.inner.token_at(i)).collect()
    }

    /// `(length, energy)` under `metric`.
    fn length_energy(&self, metric: &PyMetric) -> PyResult<(f64, f64)> {
        ok(path_length_energy(&self.inner, &metric.inner))
    }

    fn to_json(&self) -> String {
        io::trajectory_to_json(&self.inner)
    }

    fn to_csv(&self) -> String {
        io::trajectory_to_csv(&self.inner)
    }
}

/// Attention, prediction and feedback parameters of the consciousness cycle.
#[pyclass(name = "CognitionParams", module = "pygeomind", from_py_object)]
#[derive(Clone)]
pub struct PyCognitionParams {
    inner: geomind::CognitionParams,
}

#[pymethods]
impl PyCognitionParams {
    #[new]
    #[pyo3(signature = (dimension, beta = 0.0, kappa = 0.0, gain = 1.0, temperature = None, context_capacity = 16))]
    fn new(
        dimension: usize,
        beta: f64,
        kappa: f64,
        gain: f64,
        temperature: Option<f64>,
        context_capacity: usize,
    ) -> PyResult<Self> {
        let mut p = geomind::CognitionParams::identity(dimension);
        p.input_blend = beta;
        p.kappa = kappa;
        p.feedback_gain = gain;
        if let Some(t) = temperature {
            p.attention_temperature = t;
        }
        p.context_capacity = context_capacity;
        ok(p.validate())?;
        Ok(PyCognitionParams { inner: p })
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.input_blend
    }

    #[setter]
    fn set_beta(&mut self, v: f64) {
        self.inner.input_blend = v;
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }

    #[setter]
    fn set_kappa(&mut self, v: f64) {
        self.inner.kappa = v;
    }

    #[getter]
    fn gain(&self) -> f64 {
        self.inner.feedback_gain
    }

    #[setter]
    fn set_gain(&mut self, v: f64) {
        self.inner.feedback_gain = v;
    }

    #[getter]
    fn temperature(&self) -> f64 {
        self.inner.attention_temperature
    }

    #[setter]
    fn set_temperature(&mut self, v: f64) {
        self.inner.attention_temperature = v;
    }

    #[getter]
    fn value_matrix(&self) -> Vec<Vec<f64>> {
        matrix_rows(&self.inner.value_matrix)
    }

    #[setter]
    fn set_value_matrix(&mut self, rows: Vec<Vec<f64>>) -> PyResult<()> {
        self.inner.value_matrix = rows_matrix(&rows)?;
        Ok(())
    }

    #[getter]
    fn predictor_matrix(&self) -> Vec<Vec<f64>> {
        matrix_rows(&self.inner.predictor_matrix)
    }

    #[setter]
    fn set_predictor_matrix(&mut self, rows: Vec<Vec<f64>>) -> PyResult<()> {
        self.inner.predictor_matrix = rows_matrix(&rows)?;
        Ok(())
    }

    /// Switch to the geometric predictor with look-back `window` (a multiple of dt).
    fn use_geometric_predictor(&mut self, window: f64) {
        self.inner.predictor = Predictor::Geometric { window };
    }

    fn use_contextual_predictor(&mut self) {
        self.inner.predictor = Predictor::Contextual;
    }

    /// Attention weights of `query` over `sequence` (plain vectors).
    fn attention(&self, query: Vec<f64>, sequence: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let wrap = |(i, v): (usize, Vec<f64>)| SampledEmbedding {
            token_id: i as u64,
            value: v,
        };
        let seq: Vec<SampledEmbedding> = sequence.into_iter().enumerate().map(wrap).collect();
        ok(geomind::attention_weights(&wrap((0, query)), &seq, &self.inner))
    }
}

/// A completed thought flow: trajectory, per-cycle prediction errors and score.
#[pyclass(name = "ThoughtFlow", module = "pygeomind", from_py_object)]
#[derive(Clone)]
pub struct PyThoughtFlow {
    inner: geomind::ThoughtFlow,
}

#[pymethods]
impl PyThoughtFlow {
    #[getter]
    fn trajectory(&self) -> PyTrajectory {
        PyTrajectory {
            inner: self.inner.trajectory.clone(),
        }
    }

    #[getter]
    fn errors(&self) -> Vec<Vec<f64>> {
        self.inner.errors.clone()
    }

    #[getter]
    fn score(&self) -> f64 {
        self.inner.score
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
}

fn flow_config(start: Vec<f64>, velocity: Option<Vec<f64>>, steps: usize, dt: f64) -> geomind::FlowConfig {
    let d = start.len();
    geomind::FlowConfig {
        start,
        velocity: velocity.unwrap_or_else(|| vec![0.0; d]),
        steps,
        dt,
    }
}

/// Runs `steps` consciousness cycles from the token nearest to `start`.
/// `inputs` maps cycle index to an external input vector.
#[pyfunction]
#[pyo3(signature = (field, metric, params, start, steps, dt, seed, velocity = None, inputs = None))]
#[allow(clippy::too_many_arguments)]
fn run_thought_flow(
    field: &PyTokenField,
    metric: &PyMetric,
    params: &PyCognitionParams,
    start: Vec<f64>,
    steps: usize,
    dt: f64,
    seed: u64,
    velocity: Option<Vec<f64>>,
    inputs: Option<BTreeMap<usize, Vec<f64>>>,
) -> PyResult<PyThoughtFlow> {
    let schedule = geomind::InputSchedule(inputs.unwrap_or_default());
    Ok(PyThoughtFlow {
        inner: ok(geomind::run_thought_flow(
            &field.inner,
            &metric.inner,
            &params.inner,
            &schedule,
            &flow_config(start, velocity, steps, dt),
            seed,
        ))?,
    })
}

/// Index of the winning flow (strictly above `threshold`), or `None`.
#[pyfunction]
fn select_conscious(flows: Vec<PyRef<'_, PyThoughtFlow>>, threshold: f64) -> Option<usize> {
    let scores: Vec<f64> = flows.iter().map(|f| f.inner.score).collect();
    select_by_scores(&scores, threshold).winner
}

/// Learning flow on the field's own metric. Returns `(snapshots, error_norms, flow)`.
#[pyfunction]
#[pyo3(signature = (field, params, start, steps, dt, eta, seed, velocity = None, inputs = None))]
#[allow(clippy::too_many_arguments)]
fn run_learning(
    field: &PyTokenField,
    params: &PyCognitionParams,
    start: Vec<f64>,
    steps: usize,
    dt: f64,
    eta: f64,
    seed: u64,
    velocity: Option<Vec<f64>>,
    inputs: Option<BTreeMap<usize, Vec<f64>>>,
) -> PyResult<(Vec<PyTokenField>, Vec<f64>, PyThoughtFlow)> {
    let schedule = geomind::InputSchedule(inputs.unwrap_or_default());
    let run = ok(geomind::run_learning(
        &field.inner,
        geomind::MetricChoice::Field,
        &params.inner,
        &schedule,
        &flow_config(start, velocity, steps, dt),
        eta,
        seed,
    ))?;
    Ok((
        run.snapshots.into_iter().map(|inner| PyTokenField { inner }).collect(),
        run.error_norms,
        PyThoughtFlow { inner: run.flow },
    ))
}

/// Field analysis report as a dict: curvature samples, high-curvature points,
/// connected components and intrinsic dimension.
#[pyfunction]
#[pyo3(signature = (field, metric, points_per_axis = 9, rho_min = None, percentile = 0.9))]
fn analyze_field(
    py: Python<'_>,
    field: &PyTokenField,
    metric: &PyMetric,
    points_per_axis: usize,
    rho_min: Option<f64>,
    percentile: f64,
) -> PyResult<Py<PyAny>> {
    let grid = GridSpec {
        points_per_axis,
        rho_min,
        percentile,
        ..GridSpec::default()
    };
    let report = ok(geomind::analyze_field(&field.inner, &metric.inner, &grid))?;
    let value = serde_json::to_value(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &value)
}

#[pymodule]
fn pygeomind(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GeometryError", m.py().get_type::<GeometryError>())?;
    m.add_class::<PyTokenField>()?;
    m.add_class::<PyMetric>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyCognitionParams>()?;
    m.add_class::<PyThoughtFlow>()?;
    m.add_function(wrap_pyfunction!(run_thought_flow, m)?)?;
    m.add_function(wrap_pyfunction!(select_conscious, m)?)?;
    m.add_function(wrap_pyfunction!(run_learning, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_field, m)?)?;
    Ok(())
}
