//! Python bindings: `import polyprop`.
//!
//! Potentials are given by name (`"zero"`, `"gauss_well"`, `"small_bump"`,
//! `"bump_resonant"`, `"kind_one_resonant"`) or as a dict such as
//! `{"form": "gauss_well", "amplitude": 0.1, "width": 1.0}`. Reports come back
//! as plain dicts.

use num_complex::Complex64;
use polyprop_core::free_propagator;
use polyprop_core::free_resolvent;
use polyprop_core::model::{self, rational_to_f64};
use polyprop_core::oscillatory::{dyadic, verify_lemma_bounds};
use polyprop_core::perturbed::{self, OracleConfig, RunSpec, ScatteringGrid, StoneConfig};
use polyprop_core::projections::classify_resonance;
use polyprop_core::{make_params, GridSpace, PotentialSpec, SampledPotential, SignBranch};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyString;
use serde::Serialize;

fn err(e: polyprop_core::Error) -> PyErr {
    match e {
        polyprop_core::Error::InvalidInput(_)
        | polyprop_core::Error::EvenDimension(_)
        | polyprop_core::Error::DimensionOutOfRange { .. }
        | polyprop_core::Error::NonPositiveOrder(_)
        | polyprop_core::Error::KindOutOfRange { .. }
        | polyprop_core::Error::ZeroTime
        | polyprop_core::Error::BackendUnsupported(_)
        | polyprop_core::Error::GridTooCoarse(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn potential(py: Python<'_>, spec: &Bound<'_, PyAny>) -> PyResult<PotentialSpec> {
    if let Ok(name) = spec.cast::<PyString>() {
        return match name.to_str()? {
            "zero" => Ok(PotentialSpec::Zero),
            "bump_resonant" | "paper_resonant" => Ok(PotentialSpec::BumpResonant),
            "kind_one_resonant" => Ok(PotentialSpec::KindOneResonant),
            "gauss_well" => Ok(PotentialSpec::GaussWell { amplitude: 1.0, width: 1.0 }),
            "small_bump" => Ok(PotentialSpec::GaussWell { amplitude: 0.1, width: 1.0 }),
            other => Err(PyValueError::new_err(format!("unknown potential '{other}'"))),
        };
    }
    let text: String = py.import("json")?.call_method1("dumps", (spec,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(format!("invalid potential spec: {e}")))
}

fn sign(s: &str) -> PyResult<SignBranch> {
    match s {
        "+" | "plus" => Ok(SignBranch::Plus),
        "-" | "minus" => Ok(SignBranch::Minus),
        _ => Err(PyValueError::new_err(format!("sign must be '+' or '-', got '{s}'"))),
    }
}

/// Order `m`, dimension `n` and the derived constants.
#[pyclass(name = "ModelParams", frozen)]
struct PyModelParams {
    inner: polyprop_core::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    fn new(m: i64, n: i64) -> PyResult<Self> {
        Ok(PyModelParams {
            inner: make_params(m, n).map_err(err)?,
        })
    }

    #[getter]
    fn m(&self) -> i64 {
        self.inner.m
    }

    #[getter]
    fn n(&self) -> i64 {
        self.inner.n
    }

    #[getter]
    fn m_n(&self) -> i64 {
        self.inner.m_n
    }

    #[getter]
    fn k_c(&self) -> i64 {
        self.inner.k_c
    }

    #[getter]
    fn max_kind(&self) -> i64 {
        self.inner.max_kind()
    }

    /// Long-time decay exponent `h` for resonance kind `k`.
    fn decay_exponent(&self, k: i64) -> PyResult<f64> {
        Ok(rational_to_f64(model::decay_exponent(&self.inner, k).map_err(err)?))
    }

    fn envelope(&self, k: i64, t: f64, r: f64) -> PyResult<f64> {
        model::envelope(&self.inner, k, t, r).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("ModelParams(m={}, n={})", self.inner.m, self.inner.n)
    }
}

/// The perturbed propagator kernel on a small set of sample points.
#[pyclass(name = "PerturbedKernel")]
struct PyPerturbedKernel {
    inner: perturbed::PerturbedKernel,
    points: Vec<f64>,
}

#[pymethods]
impl PyPerturbedKernel {
    #[new]
    #[pyo3(signature = (m, n, potential, half_width = 8.0, grid_points = 161, points = vec![-2.0, 0.0, 2.0]))]
    fn new(py: Python<'_>, m: i64, n: i64, potential: &Bound<'_, PyAny>, half_width: f64, grid_points: usize, points: Vec<f64>) -> PyResult<Self> {
        let params = make_params(m, n).map_err(err)?;
        let spec = self::potential(py, potential)?;
        let grid = ScatteringGrid::new(&params, &spec, half_width, grid_points, &points).map_err(err)?;
        let inner = py
            .detach(|| perturbed::PerturbedKernel::new(grid, StoneConfig::default()))
            .map_err(err)?;
        Ok(PyPerturbedKernel { inner, points })
    }

    /// Resonance kind used for the threshold solve.
    #[getter]
    fn k(&self) -> i64 {
        self.inner.k
    }

    #[getter]
    fn points(&self) -> Vec<f64> {
        self.points.clone()
    }

    /// `K(t, x_a, x_b)` as a nested list.
    fn evaluate(&self, py: Python<'_>, t: f64) -> PyResult<Vec<Vec<Complex64>>> {
        let kb = py.detach(|| self.inner.evaluate(t)).map_err(err)?;
        let d = &kb.direct;
        Ok((0..d.nrows()).map(|a| (0..d.ncols()).map(|b| d[(a, b)]).collect()).collect())
    }

    fn low(&self, t: f64, x: f64, y: f64) -> PyResult<Complex64> {
        self.inner.low_kernel(t, x, y).map_err(err)
    }

    fn high(&self, t: f64, x: f64, y: f64) -> PyResult<Complex64> {
        self.inner.high_kernel(t, x, y).map_err(err)
    }
}

/// Free propagator kernel `K_0(t, r)`.
#[pyfunction]
fn free_kernel(m: i64, n: i64, t: f64, r: f64) -> PyResult<Complex64> {
    let p = make_params(m, n).map_err(err)?;
    free_propagator::free_kernel(&p, t, r).map_err(err)
}

/// Boundary value of the free resolvent kernel at `λ^{2m} ± i0`.
#[pyfunction]
#[pyo3(signature = (m, n, lam, r, sign = "+"))]
fn resolvent_kernel(m: i64, n: i64, lam: f64, r: f64, sign: &str) -> PyResult<Complex64> {
    let p = make_params(m, n).map_err(err)?;
    free_resolvent::higher_kernel(&p, self::sign(sign)?, lam, r).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (m, n, theta = None))]
fn expansion_coefficients(py: Python<'_>, m: i64, n: i64, theta: Option<i64>) -> PyResult<Py<PyAny>> {
    let p = make_params(m, n).map_err(err)?;
    let c = free_resolvent::expansion_coefficients(&p, theta.unwrap_or(4 * m - n + 1)).map_err(err)?;
    to_py(py, &c)
}

/// Resonance report for zero energy on the line (n = 1) or radial (1, 3) grid.
#[pyfunction]
#[pyo3(signature = (m, n, potential, half_width = 20.0, grid_points = 401))]
fn classify(py: Python<'_>, m: i64, n: i64, potential: &Bound<'_, PyAny>, half_width: f64, grid_points: usize) -> PyResult<Py<PyAny>> {
    let p = make_params(m, n).map_err(err)?;
    let spec = self::potential(py, potential)?;
    let sp = if n == 1 {
        GridSpace::line(half_width, grid_points)
    } else {
        GridSpace::radial(half_width, grid_points)
    }
    .map_err(err)?;
    let report = py
        .detach(|| {
            let pot = SampledPotential::new(&sp, &p, &spec)?;
            classify_resonance(&sp, &p, &pot)
        })
        .map_err(err)?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (m, n, potential, times, oracle = false))]
fn propagate(py: Python<'_>, m: i64, n: i64, potential: &Bound<'_, PyAny>, times: Vec<f64>, oracle: bool) -> PyResult<Py<PyAny>> {
    let mut spec = RunSpec::new(m, n, self::potential(py, potential)?, times);
    if oracle {
        spec.oracle = Some(OracleConfig::default());
    }
    let run = py.detach(|| perturbed::propagate(&spec)).map_err(err)?;
    to_py(py, &run)
}

/// Fitted long-time decay exponent over `t = 2^{i/2} <= t_max`.
#[pyfunction]
#[pyo3(signature = (m, n, potential, t_max = 16.0))]
fn decay_fit(py: Python<'_>, m: i64, n: i64, potential: &Bound<'_, PyAny>, t_max: f64) -> PyResult<Py<PyAny>> {
    let spec = RunSpec::new(m, n, self::potential(py, potential)?, perturbed::dyadic_times(t_max));
    let fit = py
        .detach(|| perturbed::propagate(&spec).and_then(|run| perturbed::decay_fit(&run)))
        .map_err(err)?;
    to_py(py, &fit)
}

/// Fitted decay exponents of the model oscillatory integrals.
#[pyfunction]
#[pyo3(signature = (m, b, low_energy = true))]
fn lemma_check(py: Python<'_>, m: i64, b: f64, low_energy: bool) -> PyResult<Py<PyAny>> {
    let t_hi = if m == 1 { 16 } else { 14 };
    let check = py
        .detach(|| {
            if low_energy {
                verify_lemma_bounds(m, b, &dyadic(4, t_hi), &dyadic(0, 20), true)
            } else {
                verify_lemma_bounds(m, b, &dyadic(-3, 6), &dyadic(0, 14), false)
            }
        })
        .map_err(err)?;
    to_py(py, &check)
}

#[pymodule]
fn polyprop(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyPerturbedKernel>()?;
    m.add_function(wrap_pyfunction!(free_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(resolvent_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(expansion_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(propagate, m)?)?;
    m.add_function(wrap_pyfunction!(decay_fit, m)?)?;
    m.add_function(wrap_pyfunction!(lemma_check, m)?)?;
    Ok(())
}
