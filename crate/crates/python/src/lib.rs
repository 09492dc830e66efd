//! Python module `vesicle`: grids, fields, presets, the energy model, single
//! time steps, shape probes, whole runs and the verification suite.
//!
//! Fields cross the boundary as flat lists in x-fastest order, or as raw
//! little-endian bytes for anything large.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use vesicle_core::config::ConfigLoader;
use vesicle_core::energy::{EnergyBreakdown, EnergyModel as CoreModel, ModelParams};
use vesicle_core::integrators::{self as core_int, IntegratorConfig, Scheme};
use vesicle_core::oracles::{default_probes, shape_probe};
use vesicle_core::scenarios;
use vesicle_core::verification::{run_suite, VerifyOptions};
use vesicle_core::{Error, GridSpec, ScalarField3D};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Format { .. } => PyOSError::new_err(e.to_string()),
        Error::NonFinite { .. }
        | Error::PicardDiverged { .. }
        | Error::EnergyInequalityViolated { .. }
        | Error::NonPositiveSymbol { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Grid", module = "vesicle", frozen, from_py_object)]
#[derive(Clone)]
struct PyGrid(GridSpec);

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (nx, ny, nz, lx=1.0, ly=1.0, lz=1.0))]
    fn new(nx: usize, ny: usize, nz: usize, lx: f64, ly: f64, lz: f64) -> PyResult<Self> {
        GridSpec::new(nx, ny, nz, lx, ly, lz).map(PyGrid).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (n, length=1.0))]
    fn cubic(n: usize, length: f64) -> PyResult<Self> {
        GridSpec::cubic(n, length).map(PyGrid).map_err(to_py)
    }

    #[getter]
    fn dims(&self) -> [usize; 3] {
        self.0.dims()
    }

    #[getter]
    fn lengths(&self) -> [f64; 3] {
        self.0.lengths()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        let g = &self.0;
        format!("Grid({}, {}, {}, lx={}, ly={}, lz={})", g.nx, g.ny, g.nz, g.lx, g.ly, g.lz)
    }
}

#[pyclass(name = "Field", module = "vesicle", from_py_object)]
#[derive(Clone)]
struct PyField(ScalarField3D);

#[pymethods]
impl PyField {
    #[new]
    fn new(grid: &PyGrid, values: Vec<f64>) -> PyResult<Self> {
        ScalarField3D::from_values(grid.0, values).map(PyField).map_err(to_py)
    }

    #[staticmethod]
    fn constant(grid: &PyGrid, value: f64) -> Self {
        PyField(ScalarField3D::constant(grid.0, value))
    }

    #[staticmethod]
    fn from_bytes(grid: &PyGrid, data: &[u8]) -> PyResult<Self> {
        if data.len() != grid.0.len() * 8 {
            return Err(PyValueError::new_err(format!("expected {} bytes, got {}", grid.0.len() * 8, data.len())));
        }
        let values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        ScalarField3D::from_values(grid.0, values).map(PyField).map_err(to_py)
    }

    /// Read a raw snapshot (with its `.meta` sidecar).
    #[staticmethod]
    fn read_raw(path: PathBuf) -> PyResult<Self> {
        vesicle_core::io::read_raw(&path).map(|(f, _)| PyField(f)).map_err(to_py)
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(*self.0.grid())
    }

    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        let bytes: Vec<u8> = self.0.values().iter().flat_map(|v| v.to_le_bytes()).collect();
        PyBytes::new(py, &bytes)
    }

    fn at(&self, i: usize, j: usize, k: usize) -> PyResult<f64> {
        let g = self.0.grid();
        if i >= g.nx || j >= g.ny || k >= g.nz {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.0.at(i, j, k))
    }

    fn min_max(&self) -> (f64, f64) {
        self.0.min_max()
    }

    fn integrate(&self) -> f64 {
        self.0.integrate()
    }

    fn max_abs_diff(&self, other: &PyField) -> f64 {
        self.0.max_abs_diff(&other.0)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "Params", module = "vesicle", get_all, set_all, from_py_object)]
#[derive(Clone)]
struct PyParams {
    epsilon: f64,
    kappa: f64,
    kappa_bar: f64,
    c: f64,
    d: f64,
    m1: f64,
    m2: f64,
    alpha: f64,
    beta: f64,
    da0: f64,
    a0: f64,
}

impl From<ModelParams> for PyParams {
    fn from(p: ModelParams) -> Self {
        PyParams {
            epsilon: p.epsilon,
            kappa: p.kappa,
            kappa_bar: p.kappa_bar,
            c: p.c,
            d: p.d,
            m1: p.m1,
            m2: p.m2,
            alpha: p.alpha,
            beta: p.beta,
            da0: p.da0,
            a0: p.a0,
        }
    }
}

impl PyParams {
    fn core(&self) -> ModelParams {
        ModelParams {
            epsilon: self.epsilon,
            kappa: self.kappa,
            kappa_bar: self.kappa_bar,
            c: self.c,
            d: self.d,
            m1: self.m1,
            m2: self.m2,
            alpha: self.alpha,
            beta: self.beta,
            da0: self.da0,
            a0: self.a0,
        }
    }
}

#[pymethods]
impl PyParams {
    /// `D` defaults to `2ε/3` and `A0` to `β`.
    #[new]
    #[pyo3(signature = (epsilon, kappa, kappa_bar, c, m1, m2, alpha, beta, da0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        epsilon: f64,
        kappa: f64,
        kappa_bar: f64,
        c: f64,
        m1: f64,
        m2: f64,
        alpha: f64,
        beta: f64,
        da0: f64,
    ) -> PyResult<Self> {
        let p = ModelParams::new(epsilon, kappa, kappa_bar, c, m1, m2, alpha, beta, da0);
        p.validate().map_err(to_py)?;
        Ok(p.into())
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.core())
    }
}

fn breakdown_dict<'py>(py: Python<'py>, e: &EnergyBreakdown) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (k, v) in
        [("E_M", e.e_m), ("W", e.w), ("G", e.g), ("T1", e.t1), ("T2", e.t2), ("V", e.v), ("A", e.a), ("dA", e.d_a)]
    {
        d.set_item(k, v)?;
    }
    Ok(d)
}

#[pyclass(name = "EnergyModel", module = "vesicle")]
struct PyModel(CoreModel);

#[pymethods]
impl PyModel {
    #[new]
    fn new(grid: &PyGrid, params: &PyParams) -> PyResult<Self> {
        CoreModel::new(grid.0, params.core()).map(PyModel).map_err(to_py)
    }

    #[getter]
    fn params(&self) -> PyParams {
        (*self.0.params()).into()
    }

    /// `E_M` and its parts, plus `V`, `A` and `ΔA`.
    fn energy<'py>(&self, py: Python<'py>, phi: &PyField) -> PyResult<Bound<'py, PyDict>> {
        breakdown_dict(py, &self.0.total_energy(&phi.0))
    }

    fn variational_derivative(&self, phi: &PyField) -> PyField {
        PyField(self.0.variational_derivative(&phi.0))
    }

    /// Advance one step. `scheme` is one of semi_implicit, forward_euler, fully_implicit, backward_euler.
    #[pyo3(signature = (phi, dt, scheme="semi_implicit", picard_tol=1e-10))]
    fn step(&self, py: Python<'_>, phi: &PyField, dt: f64, scheme: &str, picard_tol: f64) -> PyResult<PyField> {
        let scheme: Scheme = scheme.parse().map_err(to_py)?;
        let cfg = IntegratorConfig::new(scheme, dt).with_picard_tol(picard_tol);
        cfg.validate().map_err(to_py)?;
        let field = &phi.0;
        py.detach(|| core_int::step(&self.0, field, &cfg)).map(PyField).map_err(to_py)
    }
}

#[pyfunction]
fn preset_names() -> Vec<String> {
    scenarios::preset_names()
}

/// The full catalog as a list of dicts.
#[pyfunction]
fn presets(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    json_to_py(py, &scenarios::catalog())
}

/// `(grid, params, initial field)` of a preset, optionally at another cubic resolution.
#[pyfunction]
#[pyo3(signature = (name, grid=None))]
fn preset(name: &str, grid: Option<usize>) -> PyResult<(PyGrid, PyParams, PyField)> {
    let p = scenarios::preset(name).map_err(to_py)?;
    let g = match grid {
        Some(n) => p.domain.with_resolution(n).map_err(to_py)?,
        None => p.domain,
    };
    let phi = scenarios::tanh_ellipsoid(&p.init, &g).map_err(to_py)?;
    Ok((PyGrid(g), p.params.into(), PyField(phi)))
}

/// Probe signs and connected components of `{φ > 0}` and `{φ < 0}`.
#[pyfunction]
fn probe_shape<'py>(py: Python<'py>, phi: &PyField) -> PyResult<Bound<'py, PyAny>> {
    let ev = shape_probe(&phi.0, &default_probes(phi.0.grid()));
    let d = json_to_py(py, &ev)?;
    d.set_item("discocyte", ev.looks_like_discocyte())?;
    d.set_item("torus", ev.looks_like_torus())?;
    d.set_item("z_aspect_ratio", ev.z_aspect_ratio())?;
    Ok(d)
}

/// Execute a run into `out` and return its manifest.
#[pyfunction]
#[pyo3(signature = (out, preset=None, config=None, overrides=Vec::new()))]
fn run<'py>(
    py: Python<'py>,
    out: PathBuf,
    preset: Option<String>,
    config: Option<PathBuf>,
    overrides: Vec<String>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut loader = ConfigLoader::new();
    if let Some(p) = preset {
        loader = loader.preset(p);
    }
    if let Some(c) = config {
        loader = loader.file(&c).map_err(to_py)?;
    }
    for s in &overrides {
        loader = loader.set(s).map_err(to_py)?;
    }
    let (cfg, prov) = loader.load().map_err(to_py)?;
    let manifest = py.detach(|| vesicle_core::runner::execute(&cfg, &prov, &out, &mut |_| {})).map_err(to_py)?;
    json_to_py(py, &manifest)
}

/// Run verification criteria (default: all) and return the report.
#[pyfunction]
#[pyo3(signature = (work_dir, criteria=None, max_steps=None))]
fn verify(
    py: Python<'_>,
    work_dir: PathBuf,
    criteria: Option<Vec<u32>>,
    max_steps: Option<usize>,
) -> PyResult<Bound<'_, PyAny>> {
    let mut opts = VerifyOptions::new(work_dir);
    if let Some(c) = criteria {
        opts.criteria = c;
    }
    if let Some(n) = max_steps {
        opts.ci.max_steps = n;
    }
    let report = py.detach(|| run_suite(&opts, &mut |_| {})).map_err(to_py)?;
    json_to_py(py, &report)
}

#[pymodule]
fn vesicle(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    m.add_function(wrap_pyfunction!(probe_shape, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
