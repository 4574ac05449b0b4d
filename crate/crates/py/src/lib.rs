//! Python bindings for `fapc_core`: heat-model Gramians, the resolvent-like
//! operator calculus, linear steering and semilinear fixed-point steering.
//!
//! Vectors cross the boundary as `list[float]`, matrices as row lists.

use fapc_core::evolution::TimeGrid;
use fapc_core::linops::{self, EpsGrid, ProjectionSubspace, SymPosMatrix};
use fapc_core::semilinear::{self, CollocationMap, IterationSettings, Nonlinearity, SemilinearProblem};
use fapc_core::spectral::{self, HeatModel};
use fapc_core::steering;
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: fapc_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn list(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn subspace(dim: usize, basis: Option<Vec<Vec<f64>>>, m_modes: Option<usize>) -> PyResult<ProjectionSubspace> {
    match (basis, m_modes) {
        (Some(_), Some(_)) => Err(PyValueError::new_err("pass either basis or m_modes, not both")),
        (Some(vs), None) => {
            let vs: Vec<DVector<f64>> = vs.iter().map(|v| vector(v)).collect();
            ProjectionSubspace::from_spanning(&vs).map_err(err)
        }
        (None, m) => ProjectionSubspace::leading_modes(dim, m.unwrap_or(0)).map_err(err),
    }
}

/// Control operator `B` of the heat model.
#[pyclass(name = "ControlOperator", module = "fapc", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyControl(spectral::ControlOperator);

#[pymethods]
impl PyControl {
    /// Multiplication by the indicator of `(a, b) ⊂ (0, π)`.
    #[staticmethod]
    fn distributed(a: f64, b: f64) -> Self {
        Self(spectral::ControlOperator::Distributed { a, b })
    }

    /// Scalar input spread over `(alpha1, alpha2)`.
    #[staticmethod]
    fn lumped(alpha1: f64, alpha2: f64) -> Self {
        Self(spectral::ControlOperator::Lumped { alpha1, alpha2 })
    }

    /// Arbitrary `N × m` matrix.
    #[staticmethod]
    fn full(rows_: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self(spectral::ControlOperator::FullMatrix(matrix(&rows_)?)))
    }

    fn matrix(&self, n_modes: usize) -> PyResult<Vec<Vec<f64>>> {
        self.0.matrix(n_modes).map(|m| rows(&m)).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("ControlOperator({:?})", self.0)
    }
}

/// Symmetric positive semidefinite controllability Gramian.
#[pyclass(name = "Gramian", module = "fapc", frozen, from_py_object)]
#[derive(Clone)]
struct PyGramian(spectral::Gramian);

#[pymethods]
impl PyGramian {
    #[staticmethod]
    fn closed_form(n_modes: usize, control: &PyControl, horizon: f64) -> PyResult<Self> {
        let model = HeatModel::new(n_modes).map_err(err)?;
        spectral::gramian_closed_form(&model, &control.0, horizon).map(Self).map_err(err)
    }

    #[staticmethod]
    fn quadrature(n_modes: usize, control: &PyControl, horizon: f64, steps: usize) -> PyResult<Self> {
        let model = HeatModel::new(n_modes).map_err(err)?;
        spectral::gramian_quadrature(&model, &control.0, horizon, steps).map(Self).map_err(err)
    }

    /// Wraps a user matrix; rejects asymmetric or indefinite input.
    #[staticmethod]
    fn from_matrix(rows_: Vec<Vec<f64>>, horizon: f64) -> PyResult<Self> {
        let m = SymPosMatrix::new(matrix(&rows_)?).map_err(err)?;
        Ok(Self(spectral::Gramian {
            matrix: m,
            horizon,
            provenance: spectral::GramianProvenance::Supplied,
        }))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.0.horizon
    }

    fn matrix(&self) -> Vec<Vec<f64>> {
        rows(self.0.matrix.matrix())
    }

    /// `δ = λ_min(Pᵀ G P)` on the subspace.
    #[pyo3(signature = (m_modes=None, basis=None))]
    fn delta(&self, m_modes: Option<usize>, basis: Option<Vec<Vec<f64>>>) -> PyResult<f64> {
        let p = subspace(self.0.dim(), basis, m_modes)?;
        linops::delta_coercivity(&self.0.matrix, &p).map_err(err)
    }

    /// `‖ε(εI+G)⁻¹π‖`.
    #[pyo3(signature = (eps, m_modes=None, basis=None))]
    fn contraction_norm(&self, eps: f64, m_modes: Option<usize>, basis: Option<Vec<Vec<f64>>>) -> PyResult<f64> {
        let p = subspace(self.0.dim(), basis, m_modes)?;
        linops::contraction_norm(&self.0.matrix, eps, &p).map_err(err)
    }

    /// `(ε(I−π)+G)⁻¹ h`.
    #[pyo3(signature = (eps, h, m_modes=None, basis=None))]
    fn resolvent_like_apply(
        &self,
        eps: f64,
        h: Vec<f64>,
        m_modes: Option<usize>,
        basis: Option<Vec<Vec<f64>>>,
    ) -> PyResult<Vec<f64>> {
        let p = subspace(self.0.dim(), basis, m_modes)?;
        linops::resolvent_like_apply(&self.0.matrix, eps, &p, &vector(&h))
            .map(|x| list(&x))
            .map_err(err)
    }

    /// Relative disagreement of the two sides of the factorization identity.
    #[pyo3(signature = (eps, h, m_modes=None, basis=None))]
    fn factorization_residual(
        &self,
        eps: f64,
        h: Vec<f64>,
        m_modes: Option<usize>,
        basis: Option<Vec<Vec<f64>>>,
    ) -> PyResult<f64> {
        let p = subspace(self.0.dim(), basis, m_modes)?;
        linops::factorization_residual(&self.0.matrix, eps, &p, &vector(&h)).map_err(err)
    }

    /// Rows `(ε, contraction, resolvent, resolvent_like)` over decreasing ε.
    #[pyo3(signature = (eps_values, h, m_modes=None, basis=None))]
    fn vanishing_sweep(
        &self,
        eps_values: Vec<f64>,
        h: Vec<f64>,
        m_modes: Option<usize>,
        basis: Option<Vec<Vec<f64>>>,
    ) -> PyResult<Vec<(f64, f64, f64, f64)>> {
        let p = subspace(self.0.dim(), basis, m_modes)?;
        let grid = EpsGrid::new(eps_values).map_err(err)?;
        let rows = linops::vanishing_sweep(&self.0.matrix, &p, &grid, &vector(&h)).map_err(err)?;
        Ok(rows
            .into_iter()
            .map(|r| (r.eps, r.contraction, r.resolvent, r.resolvent_like))
            .collect())
    }

    fn __repr__(&self) -> String {
        format!("Gramian(dim={}, horizon={}, {:?})", self.0.dim(), self.0.horizon, self.0.provenance)
    }
}

/// Diagnostics of one linear steering run.
#[pyclass(name = "SteeringResult", module = "fapc", frozen, get_all)]
struct PySteeringResult {
    eps: f64,
    phi_min: Vec<f64>,
    terminal_state: Vec<f64>,
    error_norm: f64,
    projection_residual: f64,
    predicted_error: Vec<f64>,
    control_energy: f64,
    control_samples: Vec<(f64, Vec<f64>)>,
    delta: Option<f64>,
    gamma_hat: f64,
}

impl From<steering::SteeringResult> for PySteeringResult {
    fn from(r: steering::SteeringResult) -> Self {
        Self {
            eps: r.eps,
            phi_min: list(&r.phi_min),
            terminal_state: list(&r.terminal_state),
            error_norm: r.error_norm,
            projection_residual: r.projection_residual,
            predicted_error: list(&r.predicted_error),
            control_energy: r.control_energy,
            control_samples: r.control_samples.iter().map(|(t, u)| (*t, list(u))).collect(),
            delta: r.delta,
            gamma_hat: r.gamma_hat,
        }
    }
}

#[pymethods]
impl PySteeringResult {
    fn __repr__(&self) -> String {
        format!(
            "SteeringResult(eps={:e}, error_norm={:e}, projection_residual={:e}, control_energy={:e})",
            self.eps, self.error_norm, self.projection_residual, self.control_energy
        )
    }
}

/// Linear steering instance on the `N`-mode heat model.
#[pyclass(name = "SteeringProblem", module = "fapc", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySteering(steering::SteeringProblem);

#[pymethods]
impl PySteering {
    /// Uses the closed-form Gramian unless `gramian` is given.
    #[new]
    #[pyo3(signature = (n_modes, control, horizon, eps, y0, yf, m_modes=None, basis=None, gramian=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n_modes: usize,
        control: &PyControl,
        horizon: f64,
        eps: f64,
        y0: Vec<f64>,
        yf: Vec<f64>,
        m_modes: Option<usize>,
        basis: Option<Vec<Vec<f64>>>,
        gramian: Option<PyGramian>,
    ) -> PyResult<Self> {
        let model = HeatModel::new(n_modes).map_err(err)?;
        let p = subspace(n_modes, basis, m_modes)?;
        let gram = match gramian {
            Some(g) => g.0,
            None => spectral::gramian_closed_form(&model, &control.0, horizon).map_err(err)?,
        };
        steering::SteeringProblem::new(model, control.0.clone(), gram, horizon, eps, p, vector(&y0), vector(&yf))
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.0.eps
    }

    #[getter]
    fn n_modes(&self) -> usize {
        self.0.n_modes()
    }

    fn with_eps(&self, eps: f64) -> PyResult<Self> {
        self.0.with_eps(eps).map(Self).map_err(err)
    }

    fn gramian(&self) -> PyGramian {
        PyGramian(self.0.gramian.clone())
    }

    fn free_endpoint(&self) -> Vec<f64> {
        list(&self.0.free_endpoint())
    }

    fn j_functional(&self, phi: Vec<f64>) -> PyResult<f64> {
        self.0.j_functional(&vector(&phi)).map_err(err)
    }

    fn gradient(&self, phi: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.gradient(&vector(&phi)).map(|g| list(&g)).map_err(err)
    }

    fn minimizer(&self) -> PyResult<Vec<f64>> {
        self.0.minimizer().map(|x| list(&x)).map_err(err)
    }

    fn control_signal(&self, phi: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
        self.0.control_signal(&vector(&phi), t).map(|u| list(&u)).map_err(err)
    }

    fn terminal_state(&self, phi: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.terminal_state(&vector(&phi)).map(|y| list(&y)).map_err(err)
    }

    fn predicted_error(&self) -> PyResult<Vec<f64>> {
        self.0.predicted_error().map(|e| list(&e)).map_err(err)
    }

    #[pyo3(signature = (sample_count=101))]
    fn steer(&self, py: Python<'_>, sample_count: usize) -> PyResult<PySteeringResult> {
        py.detach(|| self.0.steer(sample_count)).map(Into::into).map_err(err)
    }

    /// Steers every ε; results in the given order.
    #[pyo3(signature = (eps_values, sample_count=2))]
    fn sweep(&self, py: Python<'_>, eps_values: Vec<f64>, sample_count: usize) -> PyResult<Vec<PySteeringResult>> {
        py.detach(|| steering::epsilon_sweep(&self.0, &eps_values, sample_count))
            .map(|rs| rs.into_iter().map(Into::into).collect())
            .map_err(err)
    }
}

/// Outcome of a semilinear fixed-point solve.
#[pyclass(name = "FixedPointReport", module = "fapc", frozen, get_all)]
struct PyReport {
    eps: f64,
    converged: bool,
    iterations: usize,
    residual_history: Vec<f64>,
    relaxation_history: Vec<f64>,
    terminal_error_norm: f64,
    projection_residual: f64,
    predicted_error_norm: f64,
    terminal_identity_residual: f64,
    control_energy: f64,
    gamma_hat: f64,
    gamma_hat_max: f64,
    delta: Option<f64>,
    phi: Vec<f64>,
    control_bound: f64,
    max_control: f64,
    bound_violations: Vec<usize>,
    terminal_state: Vec<f64>,
}

impl From<semilinear::FixedPointReport> for PyReport {
    fn from(r: semilinear::FixedPointReport) -> Self {
        Self {
            eps: r.eps,
            converged: r.converged,
            iterations: r.iterations,
            terminal_state: list(r.final_trajectory.terminal()),
            residual_history: r.residual_history,
            relaxation_history: r.relaxation_history,
            terminal_error_norm: r.terminal_error_norm,
            projection_residual: r.projection_residual,
            predicted_error_norm: r.predicted_error_norm,
            terminal_identity_residual: r.terminal_identity_residual,
            control_energy: r.control_energy,
            gamma_hat: r.gamma_hat,
            gamma_hat_max: r.gamma_hat_max,
            delta: r.delta,
            phi: list(&r.phi),
            control_bound: r.control_bound,
            max_control: r.max_control,
            bound_violations: r.bound_violations,
        }
    }
}

#[pymethods]
impl PyReport {
    fn __repr__(&self) -> String {
        format!(
            "FixedPointReport(eps={:e}, converged={}, iterations={}, terminal_error_norm={:e})",
            self.eps, self.converged, self.iterations, self.terminal_error_norm
        )
    }
}

/// Semilinear steering by damped Picard iteration on top of a linear instance.
#[pyclass(name = "SemilinearProblem", module = "fapc", frozen)]
struct PySemilinear(SemilinearProblem);

#[pymethods]
impl PySemilinear {
    #[new]
    #[pyo3(signature = (base, f="zero", lipschitz=0.0, g="zero", g_amplitude=0.0, steps=1000, tol=1e-8, max_iter=50, relaxation=1.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        base: &PySteering,
        f: &str,
        lipschitz: f64,
        g: &str,
        g_amplitude: f64,
        steps: usize,
        tol: f64,
        max_iter: usize,
        relaxation: f64,
    ) -> PyResult<Self> {
        let nl = Nonlinearity::from_registry(f, lipschitz, g, g_amplitude).map_err(err)?;
        let colloc = CollocationMap::for_modes(base.0.n_modes()).map_err(err)?;
        let grid = TimeGrid::new(base.0.horizon, steps).map_err(err)?;
        let it = IterationSettings { tol, max_iter, relaxation };
        SemilinearProblem::new(base.0.clone(), nl, colloc, grid, it).map(Self).map_err(err)
    }

    fn solve(&self, py: Python<'_>) -> PyResult<PyReport> {
        py.detach(|| semilinear::fixed_point_solve(&self.0)).map(Into::into).map_err(err)
    }

    /// One report per ε, in the given (strictly decreasing) order.
    fn epsilon_study(&self, py: Python<'_>, eps_values: Vec<f64>) -> PyResult<Vec<PyReport>> {
        let grid = EpsGrid::new(eps_values).map_err(err)?;
        py.detach(|| semilinear::epsilon_study(&self.0, &grid))
            .map(|rs| rs.into_iter().map(Into::into).collect())
            .map_err(err)
    }
}

/// Registered drift and source names.
#[pyfunction]
fn registry() -> (Vec<&'static str>, Vec<&'static str>) {
    (semilinear::Drift::NAMES.to_vec(), semilinear::Source::NAMES.to_vec())
}

#[pymodule]
fn fapc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyControl>()?;
    m.add_class::<PyGramian>()?;
    m.add_class::<PySteering>()?;
    m.add_class::<PySteeringResult>()?;
    m.add_class::<PySemilinear>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(registry, m)?)?;
    Ok(())
}
