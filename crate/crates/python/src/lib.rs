use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use euler_imex::cases::{self, CaseDefinition, RunMetrics, SpectrumOperator};
use euler_imex::integrate::{self, RunStats, SolverConfig};
use euler_imex::io::RunConfig;
use euler_imex::linsolve::PrecondKind;
use euler_imex::spatial::{Discretization, Mode, Scheme};
use euler_imex::state::StateField;
use euler_imex::tableau::{self, METHOD_NAMES};
use euler_imex::{driver, Error};

create_exception!(euler_imex_py, ConfigError, PyValueError);
create_exception!(euler_imex_py, NumericalError, PyRuntimeError);

fn py_err(e: Error) -> PyErr {
    if e.exit_code() == 2 {
        ConfigError::new_err(e.to_string())
    } else {
        NumericalError::new_err(e.to_string())
    }
}

fn precond_kind(name: &str) -> PyResult<PrecondKind> {
    match name {
        "none" => Ok(PrecondKind::None),
        "block_jacobi" => Ok(PrecondKind::BlockJacobi),
        "global" => Ok(PrecondKind::Global),
        _ => Err(ConfigError::new_err(format!("unknown preconditioner '{name}'"))),
    }
}

/// Conserved state on the interior of a grid.
#[pyclass(name = "State", module = "euler_imex_py", skip_from_py_object)]
#[derive(Clone)]
struct PyState {
    inner: StateField,
}

#[pymethods]
impl PyState {
    /// `(ny, nx, nvar)`
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        let g = self.inner.grid;
        (g.ny, g.nx, self.inner.nvar())
    }

    /// Interleaved interior values, point-major.
    fn to_list(&self) -> Vec<f64> {
        self.inner.interior_vec()
    }

    /// Interior values of one component, row-major in `(j, i)`.
    fn component(&self, k: usize) -> PyResult<Vec<f64>> {
        let nv = self.inner.nvar();
        if k >= nv {
            return Err(ConfigError::new_err(format!("component {k} out of range (nvar = {nv})")));
        }
        Ok(self.inner.interior_vec().into_iter().skip(k).step_by(nv).collect())
    }

    /// Same grid, new interior values.
    fn with_values(&self, values: Vec<f64>) -> PyResult<PyState> {
        let n = self.inner.grid.n_interior() * self.inner.nvar();
        if values.len() != n {
            return Err(ConfigError::new_err(format!("expected {n} values, got {}", values.len())));
        }
        Ok(PyState {
            inner: StateField::from_interior(self.inner.grid, &values),
        })
    }

    /// Domain integrals of each component.
    fn integrals(&self) -> Vec<f64> {
        self.inner.integrals()
    }

    fn __repr__(&self) -> String {
        let (ny, nx, nv) = self.shape();
        format!("State(nx={nx}, ny={ny}, nvar={nv})")
    }
}

/// Benchmark case: grid, boundaries, physical constants and initial data.
#[pyclass(name = "Case", module = "euler_imex_py", skip_from_py_object)]
#[derive(Clone)]
struct PyCase {
    inner: CaseDefinition,
}

#[pymethods]
impl PyCase {
    #[new]
    #[pyo3(signature = (name, nx, ny = 1, mach = 0.1))]
    fn new(name: &str, nx: usize, ny: usize, mach: f64) -> PyResult<Self> {
        Ok(PyCase {
            inner: cases::case_by_name(name, nx, ny, mach).map_err(py_err)?,
        })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.inner.t_final
    }

    #[getter]
    fn nx(&self) -> usize {
        self.inner.grid.nx
    }

    #[getter]
    fn ny(&self) -> usize {
        self.inner.grid.ny
    }

    fn initial(&self) -> PyState {
        PyState {
            inner: self.inner.initial(),
        }
    }

    fn exact(&self, t: f64) -> Option<PyState> {
        self.inner.exact(t).map(|inner| PyState { inner })
    }

    fn dt_for_cfl(&self, sigma: f64) -> f64 {
        self.inner.dt_for_cfl(sigma)
    }

    fn acoustic_cfl(&self, dt: f64) -> f64 {
        self.inner.acoustic_cfl(dt)
    }

    /// Potential temperature perturbation, atmospheric cases only.
    fn delta_theta(&self, state: &PyState) -> PyResult<Vec<f64>> {
        self.inner.delta_theta(&state.inner).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Case('{}', nx={}, ny={})", self.inner.name, self.inner.grid.nx, self.inner.grid.ny)
    }
}

#[pyclass(name = "RunStats", module = "euler_imex_py", get_all)]
struct PyRunStats {
    steps: usize,
    dt: f64,
    n_fc: usize,
    gmres_iterations: usize,
    max_stage_iterations: usize,
    wall_time: f64,
}

impl From<RunStats> for PyRunStats {
    fn from(s: RunStats) -> Self {
        PyRunStats {
            steps: s.steps,
            dt: s.dt,
            n_fc: s.n_fc,
            gmres_iterations: s.gmres_iterations,
            max_stage_iterations: s.max_stage_iterations,
            wall_time: s.wall_time.as_secs_f64(),
        }
    }
}

#[pyclass(name = "Metrics", module = "euler_imex_py", get_all)]
struct PyMetrics {
    l2: Vec<f64>,
    linf: Vec<f64>,
    relative_rms: f64,
    conservation: Vec<f64>,
    sigma_a: f64,
    n_fc: usize,
    n_t: usize,
}

impl From<RunMetrics> for PyMetrics {
    fn from(m: RunMetrics) -> Self {
        PyMetrics {
            l2: m.l2,
            linf: m.linf,
            relative_rms: m.relative_rms,
            conservation: m.conservation,
            sigma_a: m.sigma_a,
            n_fc: m.n_fc,
            n_t: m.n_t,
        }
    }
}

/// Spatial discretization of a case plus linear-solver settings.
#[pyclass(name = "Solver", module = "euler_imex_py")]
struct PySolver {
    case: CaseDefinition,
    disc: Discretization,
    config: SolverConfig,
}

#[pymethods]
impl PySolver {
    #[new]
    #[pyo3(signature = (case, scheme = "weno5", tol = 1e-10, preconditioner = "block_jacobi"))]
    fn new(case: &PyCase, scheme: &str, tol: f64, preconditioner: &str) -> PyResult<Self> {
        let scheme = Scheme::parse(scheme).map_err(py_err)?;
        let disc = case.inner.discretization(scheme).map_err(py_err)?;
        let config = SolverConfig {
            preconditioner: precond_kind(preconditioner)?,
            ..SolverConfig::with_tolerance(tol)
        };
        config.gmres.validate().map_err(py_err)?;
        Ok(PySolver {
            case: case.inner.clone(),
            disc,
            config,
        })
    }

    /// Flux-divergence tendency (`total`, `fast` or `slow`) with weights frozen at `state`.
    #[pyo3(signature = (state, mode = "total"))]
    fn rhs(&self, state: &PyState, mode: &str) -> PyResult<PyState> {
        let mode = match mode {
            "total" => Mode::Total,
            "fast" => Mode::Fast,
            "slow" => Mode::Slow,
            _ => return Err(ConfigError::new_err(format!("unknown mode '{mode}'"))),
        };
        let frozen = self.disc.freeze(&state.inner, 0).map_err(py_err)?;
        let cache = self.disc.fast_cache(&state.inner).map_err(py_err)?;
        let inner = self
            .disc
            .rhs(&state.inner, mode, &frozen, Some(&cache))
            .map_err(py_err)?;
        Ok(PyState { inner })
    }

    /// One time step; returns the new state and the function-call count.
    fn step(&self, state: &PyState, dt: f64, method: &str) -> PyResult<(PyState, usize)> {
        let tab = tableau::tableau(method).map_err(py_err)?;
        let (inner, rec) = integrate::step(&self.disc, &state.inner, dt, &tab, &self.config).map_err(py_err)?;
        Ok((PyState { inner }, rec.n_fc))
    }

    /// Equal steps no larger than `dt` up to `t_final`.
    fn integrate(&self, py: Python<'_>, state: &PyState, t_final: f64, dt: f64, method: &str) -> PyResult<(PyState, PyRunStats)> {
        let tab = tableau::tableau(method).map_err(py_err)?;
        let (inner, stats) = py
            .detach(|| integrate::integrate(&self.disc, &state.inner, t_final, dt, &tab, &self.config, |_, _, _| {}))
            .map_err(py_err)?;
        Ok((PyState { inner }, stats.into()))
    }

    /// Error and conservation metrics of `state` against `reference`.
    fn metrics(&self, state: &PyState, reference: &PyState, initial: &PyState, dt: f64) -> PyResult<PyMetrics> {
        cases::compute_metrics(&self.case, &state.inner, &reference.inner, &initial.inner, dt)
            .map(Into::into)
            .map_err(py_err)
    }

    /// Eigenvalues of the linearized operator at `state`, sorted by magnitude.
    #[pyo3(signature = (state, operator = "total", include_source = true))]
    fn spectrum(&self, state: &PyState, operator: &str, include_source: bool) -> PyResult<Vec<Complex64>> {
        let which = SpectrumOperator::parse(operator).map_err(py_err)?;
        cases::operator_spectrum(&self.disc, &state.inner, which, include_source).map_err(py_err)
    }
}

/// Names of the available time integrators.
#[pyfunction]
fn methods() -> Vec<&'static str> {
    METHOD_NAMES.to_vec()
}

/// Amplification factor `R(z, w)`: `z` on the explicit part, `w` on the implicit part.
#[pyfunction]
fn stability_function(method: &str, z: Complex64, w: Complex64) -> PyResult<Complex64> {
    let tab = tableau::tableau(method).map_err(py_err)?;
    tableau::stability_function(&tab, z, w).map_err(py_err)
}

/// Runs a simulation described by a TOML configuration string and writes its outputs.
#[pyfunction]
fn run(py: Python<'_>, config: &str) -> PyResult<(PyRunStats, PyMetrics)> {
    let cfg = RunConfig::from_toml(config).map_err(py_err)?;
    let out = py.detach(|| driver::run(&cfg)).map_err(py_err)?;
    Ok((out.stats.into(), out.metrics.into()))
}

#[pymodule]
fn euler_imex_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyState>()?;
    m.add_class::<PyCase>()?;
    m.add_class::<PySolver>()?;
    m.add_class::<PyRunStats>()?;
    m.add_class::<PyMetrics>()?;
    m.add_function(wrap_pyfunction!(methods, m)?)?;
    m.add_function(wrap_pyfunction!(stability_function, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    Ok(())
}
