//! Python bindings: bases, cocycles, spectra, certificates, the Green
//! solver and the experiment runner.

use cocycle_lab::admissibility::{self, OrbitFunction};
use cocycle_lab::base::{self, BasePoint, BaseSystem};
use cocycle_lab::cocycle::{self, Cocycle};
use cocycle_lab::config::RunConfig;
use cocycle_lab::degeneracy;
use cocycle_lab::dichotomy::{self, CertificateOptions, Classification, DichotomyCertificate};
use cocycle_lab::met::{self, LyapunovSpectrum};
use cocycle_lab::runner;
use cocycle_lab::LabError;
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn err(e: LabError) -> PyErr {
    match e {
        LabError::Config(_) | LabError::InvalidParameter(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(format!("{}: {e}", e.name())),
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn from_rows(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err(
            "matrix rows must be non-empty and equal length",
        ));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// A point of the base.
#[pyclass(name = "Point", frozen, eq, hash, from_py_object)]
#[derive(Clone, PartialEq, Eq, Hash)]
struct PyPoint(BasePoint);

#[pymethods]
impl PyPoint {
    #[staticmethod]
    fn rotation(theta: f64) -> Self {
        PyPoint(BasePoint::rotation(theta))
    }

    #[staticmethod]
    fn bernoulli(seed: u64) -> Self {
        PyPoint(BasePoint::bernoulli(seed))
    }

    #[staticmethod]
    fn periodic(state: usize) -> Self {
        PyPoint(BasePoint::periodic(state))
    }

    /// Angle in turns for rotation points, else None.
    fn angle(&self) -> Option<f64> {
        self.0.angle()
    }

    fn __repr__(&self) -> String {
        format!("Point({})", self.0)
    }
}

#[pyclass(name = "Base", frozen, from_py_object)]
#[derive(Clone)]
struct PyBase(BaseSystem);

#[pymethods]
impl PyBase {
    /// Rotation by `gamma` turns; the golden mean when omitted.
    #[staticmethod]
    #[pyo3(signature = (gamma=None))]
    fn rotation(gamma: Option<f64>) -> PyResult<Self> {
        match gamma {
            Some(g) => BaseSystem::rotation(g).map(PyBase).map_err(err),
            None => Ok(PyBase(BaseSystem::golden_rotation())),
        }
    }

    #[staticmethod]
    fn bernoulli(probabilities: Vec<f64>) -> PyResult<Self> {
        BaseSystem::bernoulli(probabilities)
            .map(PyBase)
            .map_err(err)
    }

    #[staticmethod]
    fn periodic(period: usize) -> PyResult<Self> {
        BaseSystem::periodic(period).map(PyBase).map_err(err)
    }

    fn step(&self, point: &PyPoint, k: i64) -> PyPoint {
        PyPoint(self.0.step(&point.0, k))
    }

    fn sample_points(&self, seed: u64, count: usize) -> Vec<PyPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.0
            .sample_points(&mut rng, count)
            .into_iter()
            .map(PyPoint)
            .collect()
    }

    fn is_aperiodic(&self) -> bool {
        self.0.is_aperiodic()
    }

    fn __repr__(&self) -> String {
        format!("Base({})", self.0.descriptor())
    }
}

#[pyclass(name = "Cocycle", frozen, from_py_object)]
#[derive(Clone)]
struct PyCocycle(Cocycle);

#[pymethods]
impl PyCocycle {
    /// One of `diagonal`, `shear`, `random_sl2`, `nonuniform_rotation`, `block_mixed`.
    #[staticmethod]
    #[pyo3(signature = (name, params=Vec::new()))]
    fn builtin(name: &str, params: Vec<f64>) -> PyResult<Self> {
        cocycle::builtin(name, &params).map(PyCocycle).map_err(err)
    }

    /// Generator table indexed by the base label (symbol or state).
    #[staticmethod]
    fn from_table(matrices: Vec<Vec<Vec<f64>>>) -> PyResult<Self> {
        let table = matrices
            .iter()
            .map(|m| from_rows(m))
            .collect::<PyResult<Vec<_>>>()?;
        Cocycle::from_table(table, "table")
            .map(PyCocycle)
            .map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn generator(&self, base: &PyBase, point: &PyPoint) -> Vec<Vec<f64>> {
        to_rows(&self.0.generator(&base.0, &point.0))
    }

    /// 𝒜(ω, n) as a list of rows.
    fn evolve(&self, base: &PyBase, point: &PyPoint, n: usize) -> Vec<Vec<f64>> {
        to_rows(&self.0.evolve(&base.0, &point.0, n).value)
    }

    fn __repr__(&self) -> String {
        format!("Cocycle({})", self.0.descriptor())
    }
}

#[pyclass(name = "Spectrum", frozen, skip_from_py_object)]
struct PySpectrum(LyapunovSpectrum);

#[pymethods]
impl PySpectrum {
    #[getter]
    fn exponents(&self) -> Vec<f64> {
        self.0.exponents.clone()
    }

    #[getter]
    fn multiplicities(&self) -> Vec<usize> {
        self.0.multiplicities.clone()
    }

    #[getter]
    fn stderr(&self) -> Vec<f64> {
        self.0.stderr.clone()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.0.steps
    }

    /// "hyperbolic" or "zero-exponent"; raises when inconclusive.
    #[pyo3(signature = (zero_tol=0.05))]
    fn classify(&self, zero_tol: f64) -> PyResult<&'static str> {
        match dichotomy::classify(&self.0, zero_tol).map_err(err)? {
            Classification::Hyperbolic => Ok("hyperbolic"),
            Classification::HasZeroExponent => Ok("zero-exponent"),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Spectrum({:?} x {:?})",
            self.0.exponents, self.0.multiplicities
        )
    }
}

#[pyfunction]
#[pyo3(signature = (cocycle, base, point, steps=10_000, reorth=10, gap_tol=0.02))]
fn lyapunov_exponents(
    cocycle: &PyCocycle,
    base: &PyBase,
    point: &PyPoint,
    steps: usize,
    reorth: usize,
    gap_tol: f64,
) -> PyResult<PySpectrum> {
    met::lyapunov_exponents(&cocycle.0, &base.0, &point.0, steps, reorth, gap_tol)
        .map(PySpectrum)
        .map_err(err)
}

#[pyclass(name = "Certificate", frozen, skip_from_py_object)]
struct PyCertificate(DichotomyCertificate);

#[pymethods]
impl PyCertificate {
    #[getter]
    fn rate(&self) -> f64 {
        self.0.lambda
    }

    #[getter]
    fn stable_dim(&self) -> usize {
        self.0.stable_dim
    }

    #[getter]
    fn green_constant(&self) -> f64 {
        self.0.green_constant()
    }

    fn k_at(&self, point: &PyPoint) -> PyResult<f64> {
        self.0.k_at(&point.0).map_err(err)
    }

    fn projection_at(&self, point: &PyPoint) -> PyResult<Vec<Vec<f64>>> {
        self.0
            .projection_at(&point.0)
            .map(|m| to_rows(&m))
            .map_err(err)
    }

    /// Largest ratio over the sampled points; raises on a violation.
    #[pyo3(signature = (points, n_max=200, slack=1.0 + 1e-8))]
    fn verify(&self, points: Vec<PyPoint>, n_max: usize, slack: f64) -> PyResult<f64> {
        let pts: Vec<BasePoint> = points.iter().map(|p| p.0).collect();
        dichotomy::verify_certificate(&self.0, &pts, n_max, slack)
            .map(|r| r.worst_ratio)
            .map_err(err)
    }

    /// Green series solution on [lo + n_tail, lo + len(g) − 1 − n_tail]
    /// for g given at offsets lo, lo + 1, … from `anchor`.
    #[pyo3(signature = (anchor, lo, g, n_tail=60))]
    fn green_solve(
        &self,
        anchor: &PyPoint,
        lo: i64,
        g: Vec<Vec<f64>>,
        n_tail: usize,
    ) -> PyResult<Vec<Vec<f64>>> {
        let d = self.0.dim;
        if g.iter().any(|v| v.len() != d) {
            return Err(PyValueError::new_err(format!(
                "every g value must have length {d}"
            )));
        }
        let base = self.0.base();
        let values: Vec<DVector<f64>> = g.iter().map(|v| DVector::from_column_slice(v)).collect();
        let f = OrbitFunction::from_parts(base, anchor.0, lo, values);
        let sol = admissibility::green_solve(&self.0, &f, n_tail, None).map_err(err)?;
        Ok(sol
            .f
            .values()
            .iter()
            .map(|v| v.iter().copied().collect())
            .collect())
    }
}

#[pyfunction]
#[pyo3(signature = (cocycle, base, spectrum, points, safety=0.25, n_max=200))]
fn build_certificate(
    cocycle: &PyCocycle,
    base: &PyBase,
    spectrum: &PySpectrum,
    points: Vec<PyPoint>,
    safety: f64,
    n_max: usize,
) -> PyResult<PyCertificate> {
    let pts: Vec<BasePoint> = points.iter().map(|p| p.0).collect();
    let opts = CertificateOptions {
        safety,
        n_max,
        ..CertificateOptions::default()
    };
    dichotomy::build_certificate(&cocycle.0, &base.0, &spectrum.0, &pts, &opts)
        .map(PyCertificate)
        .map_err(err)
}

/// (min, max) of the Birkhoff sums of cos 2πθ up to `horizon`.
#[pyfunction]
fn birkhoff_cosine_extrema(base: &PyBase, point: &PyPoint, horizon: usize) -> PyResult<(f64, f64)> {
    degeneracy::birkhoff_extrema(&base.0, &base::Observable::cosine(), &point.0, horizon)
        .map(|e| (e.min, e.max))
        .map_err(err)
}

/// Runs an experiment from TOML text. Returns (summary JSON, {name: CSV text}).
#[pyfunction]
fn run_config(text: &str) -> PyResult<(String, Vec<(String, String)>)> {
    let cfg = RunConfig::parse(text).map_err(err)?;
    let out = runner::run_experiment(&cfg).map_err(err)?;
    let summary =
        serde_json::to_string(&out.summary).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let mut csvs = Vec::new();
    for a in &out.artifacts {
        let bytes = a.to_csv().map_err(err)?;
        csvs.push((a.name.clone(), String::from_utf8_lossy(&bytes).into_owned()));
    }
    Ok((summary, csvs))
}

#[pymodule]
fn pycocycle(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPoint>()?;
    m.add_class::<PyBase>()?;
    m.add_class::<PyCocycle>()?;
    m.add_class::<PySpectrum>()?;
    m.add_class::<PyCertificate>()?;
    m.add_function(wrap_pyfunction!(lyapunov_exponents, m)?)?;
    m.add_function(wrap_pyfunction!(build_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(birkhoff_cosine_extrema, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add("BUILTIN_COCYCLES", cocycle::BUILTIN_NAMES.to_vec())?;
    Ok(())
}
