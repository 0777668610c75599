//! Python bindings. Structured options travel as dicts shaped like the TOML scenario tables.

use fpklab::cauchy::{evolve_nonlinear, Trajectory};
use fpklab::convergence::{contraction_constants, decay_rate_fit, w1_contraction_check};
use fpklab::drift::DriftModel;
use fpklab::functions::TestFunction;
use fpklab::invariants::{check_membership, track_functional, MembershipOptions};
use fpklab::linear_solver::SolveConfig;
use fpklab::measures::{self, DensityField, DiffusionSpec, GridSpec, WeightFunction};
use fpklab::particles::{self, cross_validate, ParticleEnsemble, ParticleOptions, Sampler, SeModel, ValidationFunctional};
use fpklab::stationary::{find_stationary, FixedPointOptions};
use fpklab::FpkError;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(fpklab, FpkException, PyException);

fn err(e: FpkError) -> PyErr {
    FpkException::new_err(e.to_string())
}

/// Python object -> JSON text -> serde type.
fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let json = PyModule::import(obj.py(), "json")?;
    let text: String = json.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn opt_from_py<T: DeserializeOwned + Default>(obj: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    match obj {
        Some(o) if !o.is_none() => from_py(o),
        _ => Ok(T::default()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

fn diffusion(diag: Option<Vec<f64>>, dim: usize) -> PyResult<DiffusionSpec> {
    match diag {
        Some(d) => DiffusionSpec::new(d).map_err(err),
        None => Ok(DiffusionSpec::identity(dim)),
    }
}

#[pyclass(name = "Grid", module = "fpklab", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid {
    inner: GridSpec,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(lower: Vec<f64>, upper: Vec<f64>, cells: Vec<usize>) -> PyResult<Self> {
        GridSpec::new(lower, upper, cells).map(|inner| PyGrid { inner }).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn cells(&self) -> Vec<usize> {
        self.inner.cells.clone()
    }

    #[getter]
    fn lower(&self) -> Vec<f64> {
        self.inner.lower.clone()
    }

    #[getter]
    fn upper(&self) -> Vec<f64> {
        self.inner.upper.clone()
    }

    fn centers(&self, axis: usize) -> PyResult<Vec<f64>> {
        if axis >= self.inner.dim() {
            return Err(PyValueError::new_err("axis out of range"));
        }
        Ok(self.inner.axis_centers(axis))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Grid(lower={:?}, upper={:?}, cells={:?})", self.inner.lower, self.inner.upper, self.inner.cells)
    }
}

/// Probability density on a grid, cell-centered values.
#[pyclass(name = "Density", module = "fpklab", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDensity {
    inner: DensityField,
}

#[pymethods]
impl PyDensity {
    #[new]
    fn new(grid: &PyGrid, values: Vec<f64>) -> PyResult<Self> {
        DensityField::new(grid.inner.clone(), values)
            .and_then(|f| measures::normalize(&f))
            .map(|inner| PyDensity { inner })
            .map_err(err)
    }

    #[staticmethod]
    fn gaussian(grid: &PyGrid, mean: Vec<f64>, variance: Vec<f64>) -> PyResult<Self> {
        measures::make_gaussian(&grid.inner, &mean, &variance)
            .map(|inner| PyDensity { inner })
            .map_err(err)
    }

    #[staticmethod]
    fn uniform(grid: &PyGrid, lower: Vec<f64>, upper: Vec<f64>) -> PyResult<Self> {
        measures::make_uniform(&grid.inner, &lower, &upper)
            .map(|inner| PyDensity { inner })
            .map_err(err)
    }

    /// Density of a sampler dict such as `{"kind": "gaussian", "mean": [0], "variance": [1]}`.
    #[staticmethod]
    fn from_sampler(grid: &PyGrid, sampler: &Bound<'_, PyAny>) -> PyResult<Self> {
        let s: Sampler = from_py(sampler)?;
        s.density(&grid.inner).map(|inner| PyDensity { inner }).map_err(err)
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid {
            inner: self.inner.grid().clone(),
        }
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn mass(&self) -> f64 {
        self.inner.mass()
    }

    fn mean(&self) -> Vec<f64> {
        self.inner.mean()
    }

    fn variance(&self) -> Vec<f64> {
        self.inner.variance()
    }

    /// `∫ψ dμ` for a test-function dict.
    fn integrate(&self, function: &Bound<'_, PyAny>) -> PyResult<f64> {
        let psi: TestFunction = from_py(function)?;
        Ok(psi.integrate(&self.inner))
    }

    fn tv(&self, other: &PyDensity) -> PyResult<f64> {
        measures::tv(&self.inner, &other.inner).map_err(err)
    }

    #[pyo3(signature = (other, m=1.0, gamma=0.5))]
    fn weighted_tv(&self, other: &PyDensity, m: f64, gamma: f64) -> PyResult<f64> {
        let w = WeightFunction::new(m, gamma).map_err(err)?;
        measures::weighted_tv(&self.inner, &other.inner, &w).map_err(err)
    }

    fn w1(&self, other: &PyDensity) -> PyResult<f64> {
        measures::w1_1d(&self.inner, &other.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Density(cells={:?}, mean={:?})", self.inner.grid().cells, self.inner.mean())
    }
}

#[pyclass(name = "DriftModel", module = "fpklab", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDriftModel {
    inner: DriftModel,
}

#[pymethods]
impl PyDriftModel {
    /// From a dict shaped like a scenario `[model]` table.
    #[new]
    fn new(spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        Ok(PyDriftModel { inner: from_py(spec)? })
    }

    #[staticmethod]
    #[pyo3(signature = (epsilon, shift=0.0))]
    fn mean_field(epsilon: f64, shift: f64) -> Self {
        PyDriftModel {
            inner: DriftModel::MeanFieldLinear { epsilon, shift },
        }
    }

    #[staticmethod]
    fn rvh_standard(epsilon: f64, amplitude: f64) -> Self {
        PyDriftModel {
            inner: DriftModel::Rvh(fpklab::drift::RvhModel::standard(epsilon, amplitude)),
        }
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon()
    }

    fn with_epsilon(&self, value: f64) -> Self {
        PyDriftModel {
            inner: self.inner.with_epsilon(value),
        }
    }

    /// `b(x, μ)`.
    fn eval(&self, x: Vec<f64>, mu: &PyDensity) -> PyResult<Vec<f64>> {
        if x.len() != mu.inner.dim() {
            return Err(PyValueError::new_err("point and density dimensions differ"));
        }
        let b = self.inner.eval(&x, &mu.inner);
        Ok(b[..x.len()].to_vec())
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!("DriftModel({:?})", self.inner)
    }
}

#[pyclass(name = "Trajectory", module = "fpklab", frozen)]
struct PyTrajectory {
    inner: Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    fn channel_names(&self) -> Vec<String> {
        self.inner.channels.iter().map(|s| s.name.clone()).collect()
    }

    /// Values of a recorded scalar channel such as `mean_0` or `moment_v`.
    fn channel(&self, name: &str) -> PyResult<Vec<f64>> {
        self.inner
            .channel(name)
            .map(|s| s.values.clone())
            .ok_or_else(|| PyValueError::new_err(format!("no channel {name}")))
    }

    fn snapshot(&self, index: isize) -> PyResult<PyDensity> {
        let n = self.inner.snapshots.len() as isize;
        let i = if index < 0 { n + index } else { index };
        if i < 0 || i >= n {
            return Err(PyValueError::new_err("snapshot index out of range"));
        }
        Ok(PyDensity {
            inner: self.inner.snapshots[i as usize].clone(),
        })
    }

    /// `μ_t(ψ)` with the better of a constant and an exponential fit.
    fn track<'py>(&self, py: Python<'py>, function: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
        let psi: TestFunction = from_py(function)?;
        let t = track_functional(&self.inner, &psi).map_err(err)?;
        to_py(py, &t)
    }

    fn __len__(&self) -> usize {
        self.inner.snapshots.len()
    }
}

/// Solves the nonlinear equation from `nu`. Returns the partial path on blow-up.
#[pyfunction]
#[pyo3(signature = (nu, model, config=None, diffusion=None))]
fn evolve(
    py: Python<'_>,
    nu: &PyDensity,
    model: &PyDriftModel,
    config: Option<&Bound<'_, PyAny>>,
    diffusion: Option<Vec<f64>>,
) -> PyResult<PyTrajectory> {
    let cfg: SolveConfig = opt_from_py(config)?;
    let a = self::diffusion(diffusion, nu.inner.dim())?;
    let (nu, model) = (nu.inner.clone(), model.inner.clone());
    let r = py.detach(move || evolve_nonlinear(&nu, &model, &a, &cfg));
    match r {
        Ok(inner) => Ok(PyTrajectory { inner }),
        Err(FpkError::BlowUp { partial, .. }) => {
            let mut inner = *partial;
            inner.warnings.push("moment blow-up; trajectory truncated".into());
            Ok(PyTrajectory { inner })
        }
        Err(e) => Err(err(e)),
    }
}

/// Damped fixed-point iteration; returns `(density, info)`.
#[pyfunction]
#[pyo3(signature = (model, guess, options=None, config=None, diffusion=None))]
fn stationary<'py>(
    py: Python<'py>,
    model: &PyDriftModel,
    guess: &PyDensity,
    options: Option<&Bound<'py, PyAny>>,
    config: Option<&Bound<'py, PyAny>>,
    diffusion: Option<Vec<f64>>,
) -> PyResult<(PyDensity, Bound<'py, PyAny>)> {
    let opts: FixedPointOptions = opt_from_py(options)?;
    let cfg: SolveConfig = opt_from_py(config)?;
    let a = self::diffusion(diffusion, guess.inner.dim())?;
    let (model, guess) = (model.inner.clone(), guess.inner.clone());
    let r = py
        .detach(move || find_stationary(&model, &a, &cfg, &opts, &guess))
        .map_err(err)?;
    let info = PyDict::new(py);
    info.set_item("converged", r.converged)?;
    info.set_item("iterations", r.iterations)?;
    info.set_item("residual", r.residual)?;
    info.set_item("residuals", r.residuals.clone())?;
    info.set_item("mean", r.mean.clone())?;
    info.set_item("moment_v", r.moment_v)?;
    Ok((PyDensity { inner: r.density }, info.into_any()))
}

/// `value ≈ alpha1 · exp(−alpha2 t)` on the window.
#[pyfunction]
#[pyo3(signature = (times, values, window=None))]
fn decay_fit<'py>(
    py: Python<'py>,
    times: Vec<f64>,
    values: Vec<f64>,
    window: Option<(f64, f64)>,
) -> PyResult<Bound<'py, PyAny>> {
    let fit = decay_rate_fit(&times, &values, window).map_err(err)?;
    to_py(py, &fit)
}

/// `e^{−(κ−C)t} W₁(ν, μ) − W₁(μ_t, μ)` along a 1D trajectory.
#[pyfunction]
fn w1_check<'py>(
    py: Python<'py>,
    trajectory: &PyTrajectory,
    target: &PyDensity,
    model: &PyDriftModel,
) -> PyResult<Bound<'py, PyAny>> {
    let (k, c) = contraction_constants(&model.inner)
        .ok_or_else(|| PyValueError::new_err("no contraction constants for this model"))?;
    let r = w1_contraction_check(&trajectory.inner, &target.inner, k, c).map_err(err)?;
    to_py(py, &r)
}

/// Classifies a test function for the model's interaction kernel.
#[pyfunction]
#[pyo3(signature = (function, model, dim, lambda_=None, options=None))]
fn classify<'py>(
    py: Python<'py>,
    function: &Bound<'py, PyAny>,
    model: &PyDriftModel,
    dim: usize,
    lambda_: Option<f64>,
    options: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let psi: TestFunction = from_py(function)?;
    let opts: MembershipOptions = opt_from_py(options)?;
    let kernel = model
        .inner
        .membership_kernel(dim)
        .ok_or_else(|| PyValueError::new_err("model has no kernel form"))?;
    let r = check_membership(
        &psi,
        &kernel,
        &DiffusionSpec::identity(dim),
        &WeightFunction::quadratic(),
        lambda_,
        &opts,
    )
    .map_err(err)?;
    to_py(py, &r)
}

#[pyclass(name = "Ensemble", module = "fpklab", frozen)]
struct PyEnsemble {
    inner: ParticleEnsemble,
}

#[pymethods]
impl PyEnsemble {
    #[getter]
    fn time(&self) -> f64 {
        self.inner.time
    }

    fn positions(&self) -> Vec<Vec<f64>> {
        self.inner.positions.iter().map(|p| p[..self.inner.dim].to_vec()).collect()
    }

    fn mean(&self, axis: usize) -> f64 {
        self.inner.mean(axis)
    }

    fn variance(&self, axis: usize) -> f64 {
        self.inner.variance(axis)
    }

    /// Histogram density on `grid`; returns `(density, out_of_box)`.
    #[pyo3(signature = (grid, smooth=false))]
    fn density(&self, grid: &PyGrid, smooth: bool) -> PyResult<(PyDensity, usize)> {
        let e = particles::empirical_density(&self.inner, &grid.inner, smooth).map_err(err)?;
        Ok((PyDensity { inner: e.density }, e.out_of_box))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Euler–Maruyama particle system; returns one ensemble per snapshot.
#[pyfunction]
#[pyo3(signature = (sampler, model, options=None, diffusion=None))]
fn simulate(
    py: Python<'_>,
    sampler: &Bound<'_, PyAny>,
    model: &PyDriftModel,
    options: Option<&Bound<'_, PyAny>>,
    diffusion: Option<Vec<f64>>,
) -> PyResult<Vec<PyEnsemble>> {
    let s: Sampler = from_py(sampler)?;
    let opts: ParticleOptions = opt_from_py(options)?;
    let a = self::diffusion(diffusion, s.dim())?;
    let model = model.inner.clone();
    let run = py
        .detach(move || particles::simulate(&s, &model, &a, &opts))
        .map_err(err)?;
    Ok(run.snapshots.into_iter().map(|inner| PyEnsemble { inner }).collect())
}

/// Particle estimates against the PDE on a shared time grid.
#[pyfunction]
#[pyo3(signature = (sampler, model, grid, options=None, functionals=None, diffusion=None))]
fn cross_check<'py>(
    py: Python<'py>,
    sampler: &Bound<'py, PyAny>,
    model: &PyDriftModel,
    grid: &PyGrid,
    options: Option<&Bound<'py, PyAny>>,
    functionals: Option<&Bound<'py, PyAny>>,
    diffusion: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let s: Sampler = from_py(sampler)?;
    let opts: ParticleOptions = opt_from_py(options)?;
    let d = s.dim();
    let fs: Vec<ValidationFunctional> = match functionals {
        Some(f) if !f.is_none() => from_py(f)?,
        _ => (0..d)
            .flat_map(|axis| [ValidationFunctional::Mean { axis }, ValidationFunctional::Variance { axis }])
            .collect(),
    };
    let a = self::diffusion(diffusion, d)?;
    let model = model.inner.clone();
    let grid = grid.inner.clone();
    let cv = py
        .detach(move || -> fpklab::Result<_> {
            let cfg = SolveConfig {
                horizon: opts.horizon,
                snapshot_stride: opts.snapshot_stride,
                dt: Some(opts.dt),
                ..SolveConfig::default()
            };
            let traj = evolve_nonlinear(&s.density(&grid)?, &model, &a, &cfg)?;
            let run = particles::simulate(&s, &model, &a, &opts)?;
            cross_validate(&run, &traj, &fs, SeModel::for_model(&model, &a))
        })
        .map_err(err)?;
    to_py(py, &cv)
}

#[pymodule]
#[pyo3(name = "fpklab")]
fn fpklab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FpkError", m.py().get_type::<FpkException>())?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyDensity>()?;
    m.add_class::<PyDriftModel>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(stationary, m)?)?;
    m.add_function(wrap_pyfunction!(decay_fit, m)?)?;
    m.add_function(wrap_pyfunction!(w1_check, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(cross_check, m)?)?;
    m.add("FLAG_Z", particles::FLAG_Z)?;
    Ok(())
}
