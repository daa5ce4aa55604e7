//! Python bindings for `vefem`.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use vefem::config::{load_config, parse_config, RunConfig};
use vefem::diagnostics::{discrete_energy, StepDiagnostics};
use vefem::mesh::{BoxDomain, DirichletSegment, PhiSource, Side, TriMesh};
use vefem::model::InitialData;
use vefem::solver::Engine;
use vefem::{checks, driver, presets, AffineMap, Error, Regularization, SymMat};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config { .. } | Error::InvalidInput(_) | Error::Domain { .. } | Error::Mesh(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn diag_dict<'py>(py: Python<'py>, d: &StepDiagnostics) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("step", d.step)?;
    out.set_item("time", d.time)?;
    out.set_item("energy", d.energy)?;
    out.set_item("tumour_volume", d.tumour_volume)?;
    out.set_item("spd_margin", d.spd_margin)?;
    out.set_item("phi_overshoot", d.phi_overshoot)?;
    out.set_item("iters", d.iters)?;
    out.set_item("res_cons", d.res_cons)?;
    out.set_item("res_div", d.res_div)?;
    out.set_item("res_mu", d.res_mu)?;
    out.set_item("sigma_h1", d.sigma_h1)?;
    Ok(out)
}

/// Run configuration: a preset with optional TOML overrides.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        Ok(Self { inner: presets::preset(name).map_err(to_py)? })
    }

    #[staticmethod]
    #[pyo3(signature = (text, preset = None))]
    fn from_toml(text: &str, preset: Option<&str>) -> PyResult<Self> {
        Ok(Self { inner: parse_config(text, preset).map_err(to_py)? })
    }

    #[staticmethod]
    #[pyo3(signature = (path, preset = None))]
    fn load(path: PathBuf, preset: Option<&str>) -> PyResult<Self> {
        Ok(Self { inner: load_config(&path, preset).map_err(to_py)? })
    }

    #[staticmethod]
    fn preset_names() -> Vec<&'static str> {
        presets::PRESETS.to_vec()
    }

    /// Reduced interface resolution and horizon, model constants unchanged.
    fn desk(&self, t_end: f64) -> Self {
        Self { inner: presets::desk_scale(self.inner.clone(), t_end) }
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.preset.clone()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.model.dt
    }

    #[getter]
    fn t_end(&self) -> f64 {
        self.inner.model.t_end
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.inner.model.eps
    }

    #[getter]
    fn kappa_t(&self) -> f64 {
        self.inner.model.kappa_t
    }

    #[getter]
    fn n_coarse(&self) -> usize {
        self.inner.mesh.n_coarse
    }

    #[getter]
    fn h_fine(&self) -> f64 {
        self.inner.mesh.h_fine
    }

    fn num_steps(&self) -> PyResult<usize> {
        self.inner.model.num_steps().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(preset={:?}, t_end={}, n_coarse={}, h_fine={})",
            self.inner.preset, self.inner.model.t_end, self.inner.mesh.n_coarse, self.inner.mesh.h_fine
        )
    }
}

/// Conforming triangle mesh of a box.
#[pyclass(name = "Mesh")]
struct PyMesh {
    inner: Arc<TriMesh>,
}

#[pymethods]
impl PyMesh {
    /// `n x n` cells of `[xmin, xmax] x [ymin, ymax]`, Dirichlet on the left side.
    #[staticmethod]
    #[pyo3(signature = (xmin, ymin, xmax, ymax, n, dirichlet_left = true))]
    fn structured(xmin: f64, ymin: f64, xmax: f64, ymax: f64, n: usize, dirichlet_left: bool) -> PyResult<Self> {
        let d = BoxDomain::new([xmin, ymin], [xmax, ymax]).map_err(to_py)?;
        let segs = if dirichlet_left { vec![DirichletSegment::whole(Side::Left, &d)] } else { vec![] };
        Ok(Self { inner: Arc::new(TriMesh::build_structured(d, n, &segs).map_err(to_py)?) })
    }

    #[getter]
    fn num_vertices(&self) -> usize {
        self.inner.num_vertices()
    }

    #[getter]
    fn num_elements(&self) -> usize {
        self.inner.num_elements()
    }

    #[getter]
    fn h_min(&self) -> f64 {
        self.inner.h_min()
    }

    #[getter]
    fn h_max(&self) -> f64 {
        self.inner.h_max()
    }

    /// Largest interior angle in radians.
    #[getter]
    fn max_angle(&self) -> f64 {
        self.inner.max_angle()
    }

    #[getter]
    fn area(&self) -> f64 {
        self.inner.total_area()
    }

    fn vertices(&self) -> Vec<(f64, f64)> {
        self.inner.vertices.iter().map(|x| (x[0], x[1])).collect()
    }

    fn triangles(&self) -> Vec<[usize; 3]> {
        self.inner.triangles.clone()
    }

    fn refine_uniform(&self, generations: u32) -> PyResult<Self> {
        Ok(Self { inner: Arc::new(self.inner.refine_uniform(generations).map_err(to_py)?) })
    }

    /// Refine where the gradient of the nodal field `phi` exceeds `threshold`
    /// until those elements have diameter at most `target_h`.
    fn refine_near_interface(&self, phi: Vec<f64>, target_h: f64, threshold: f64) -> PyResult<Self> {
        if phi.len() != self.inner.num_vertices() {
            return Err(PyValueError::new_err("phi must have one value per vertex"));
        }
        let m = self.inner.refine_near_interface(PhiSource::Field(&phi), target_h, threshold).map_err(to_py)?;
        Ok(Self { inner: Arc::new(m) })
    }

    fn __repr__(&self) -> String {
        format!("Mesh(vertices={}, elements={})", self.inner.num_vertices(), self.inner.num_elements())
    }
}

/// Time stepper for the tumour configuration of a [`Config`].
#[pyclass(name = "Simulation")]
struct PySimulation {
    engine: Engine,
}

#[pymethods]
impl PySimulation {
    #[new]
    fn new(config: &PyConfig) -> PyResult<Self> {
        let cfg = &config.inner;
        cfg.validate().map_err(to_py)?;
        let settings = cfg.mesh_settings().map_err(to_py)?;
        let engine = Engine::new(cfg.model.clone(), InitialData::tumour(cfg.model.eps), settings).map_err(to_py)?;
        Ok(Self { engine })
    }

    /// Advance one step and return its diagnostics.
    fn step<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let engine = &mut self.engine;
        let d = py.detach(|| engine.step()).map_err(to_py)?;
        diag_dict(py, &d)
    }

    /// Advance `steps` steps (default: up to the configured end time).
    #[pyo3(signature = (steps = None))]
    fn run<'py>(&mut self, py: Python<'py>, steps: Option<usize>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let total = self.engine.params.num_steps().map_err(to_py)?;
        let n = steps.unwrap_or(total.saturating_sub(self.engine.state.step));
        let engine = &mut self.engine;
        let rows = py.detach(|| (0..n).map(|_| engine.step()).collect::<vefem::Result<Vec<_>>>()).map_err(to_py)?;
        rows.iter().map(|d| diag_dict(py, d)).collect()
    }

    #[getter]
    fn time(&self) -> f64 {
        self.engine.state.time
    }

    #[getter]
    fn step_index(&self) -> usize {
        self.engine.state.step
    }

    #[getter]
    fn remesh_count(&self) -> usize {
        self.engine.remesh_count
    }

    #[getter]
    fn mesh(&self) -> PyMesh {
        PyMesh { inner: self.engine.disc.mesh.clone() }
    }

    #[getter]
    fn phi(&self) -> Vec<f64> {
        self.engine.state.phi.clone()
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.engine.state.mu.clone()
    }

    #[getter]
    fn sigma(&self) -> Vec<f64> {
        self.engine.state.sigma.clone()
    }

    #[getter]
    fn pressure(&self) -> Vec<f64> {
        self.engine.state.p.clone()
    }

    /// Vertex velocities `(v_x, v_y)`.
    #[getter]
    fn velocity(&self) -> Vec<(f64, f64)> {
        let nn = self.engine.disc.velocity.n_nodes;
        let v = &self.engine.state.v;
        (0..self.engine.disc.mesh.num_vertices()).map(|i| (v[i], v[nn + i])).collect()
    }

    /// Vertex stress tensors as `(B_xx, B_yy, B_xy)`.
    #[getter]
    fn stress(&self) -> Vec<(f64, f64, f64)> {
        self.engine.state.b.iter().map(|b| (b.get(0, 0), b.get(1, 1), b.get(0, 1))).collect()
    }

    fn energy(&self) -> PyResult<f64> {
        let e = &self.engine;
        discrete_energy(&e.disc.scalar, &e.params, &e.state.phi, &e.state.b).map_err(to_py)
    }

    fn spd_margin(&self) -> f64 {
        self.engine.state.spd_margin()
    }

    fn write_vtk(&self, path: PathBuf) -> PyResult<()> {
        vefem::vtk::write_vtk(&self.engine.disc, &self.engine.state, &path).map_err(to_py)
    }
}

/// Run a configuration writing snapshots and `diagnostics.csv` into
/// `out_dir`; returns the per-step diagnostics.
#[pyfunction]
#[pyo3(signature = (config, out_dir, threads = 0))]
fn run_config<'py>(
    py: Python<'py>,
    config: &PyConfig,
    out_dir: PathBuf,
    threads: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = config.inner.clone();
    let report =
        py.detach(|| driver::with_threads(threads, || driver::run(&cfg, &out_dir))).map_err(to_py)?.map_err(to_py)?;
    if let Some(e) = report.error {
        return Err(PyRuntimeError::new_err(format!("solver failed after {} steps: {e}", report.diagnostics.len())));
    }
    report.diagnostics.iter().map(|d| diag_dict(py, d)).collect()
}

/// The randomized property suites as `(name, passed, detail)` triples.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn run_checks(py: Python<'_>, seed: u64) -> PyResult<Vec<(String, bool, String)>> {
    let results = py.detach(|| checks::run_all(seed)).map_err(to_py)?;
    Ok(results.into_iter().map(|r| (r.name.to_string(), r.passed, r.detail)).collect())
}

fn element(vertices: [(f64, f64); 3], b: [(f64, f64, f64); 3]) -> PyResult<(AffineMap, [SymMat; 3])> {
    let verts = vertices.map(|(x, y)| [x, y, 0.0]);
    let map = AffineMap::from_vertices(2, &verts).map_err(to_py)?;
    Ok((map, b.map(|(xx, yy, xy)| SymMat::new2(xx, yy, xy))))
}

fn regularization(delta: Option<f64>) -> Regularization {
    delta.map_or(Regularization::None, Regularization::Delta)
}

/// Relative residual of the discrete chain rule on one triangle with vertex
/// tensors `(B_xx, B_yy, B_xy)`.
#[pyfunction]
#[pyo3(signature = (vertices, b, delta = None))]
fn chain_rule_residual(vertices: [(f64, f64); 3], b: [(f64, f64, f64); 3], delta: Option<f64>) -> PyResult<f64> {
    let (map, vb) = element(vertices, b)?;
    vefem::chain_rule_residual(&vb, &map, regularization(delta)).map_err(to_py)
}

/// Interpolation weights `lambda_1, lambda_2` of the element operator.
#[pyfunction]
#[pyo3(signature = (vertices, b, delta = None))]
fn element_lambda(vertices: [(f64, f64); 3], b: [(f64, f64, f64); 3], delta: Option<f64>) -> PyResult<(f64, f64)> {
    let (map, vb) = element(vertices, b)?;
    let lam = vefem::build_lambda(&vb, &map, regularization(delta)).map_err(to_py)?;
    Ok((lam.lambda[0], lam.lambda[1]))
}

#[pymodule]
fn vefem_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_checks, m)?)?;
    m.add_function(wrap_pyfunction!(chain_rule_residual, m)?)?;
    m.add_function(wrap_pyfunction!(element_lambda, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
