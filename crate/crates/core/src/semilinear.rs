//! Semilinear steering by quasilinearization and fixed-point iteration.
//!
//! The semilinear term `f(t, y)` is rewritten as `F(t, y)y` with
//! `F(t, z) = ∫₀¹ f′(t, rz) dr`. Freezing `z` in `F` and `g` gives a linear
//! nonautonomous system whose finite-approximate control is explicit; the map
//! `Θ_ε` sends `z` to the resulting controlled trajectory, and its fixed points
//! solve the semilinear steering problem.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::evolution::{
    build_transition_stack, gramian_time_varying, spectral_norm, PerturbationField, TimeGrid, TransitionStack,
};
use crate::linops::{self, EpsGrid};
use crate::spectral::Gramian;
use crate::steering::SteeringProblem;

/// Pointwise drift `f(t, y) = L · shape(y)` with `f(t, 0) = 0` and `|f′| ≤ L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Drift {
    Zero,
    Linear,
    Tanh,
    SatSin,
}

impl Drift {
    pub const NAMES: [&'static str; 4] = ["zero", "linear", "tanh", "sat-sin"];

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "zero" => Some(Self::Zero),
            "linear" => Some(Self::Linear),
            "tanh" => Some(Self::Tanh),
            "sat-sin" => Some(Self::SatSin),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Linear => "linear",
            Self::Tanh => "tanh",
            Self::SatSin => "sat-sin",
        }
    }

    fn shape(&self, y: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Linear => y,
            Self::Tanh => y.tanh(),
            Self::SatSin => y.sin(),
        }
    }

    fn shape_prime(&self, y: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Linear => 1.0,
            Self::Tanh => {
                let c = y.cosh();
                1.0 / (c * c)
            }
            Self::SatSin => y.cos(),
        }
    }
}

/// Bounded pointwise source `g(t, y) = a · shape(t, y)` with `|g| ≤ m(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Zero,
    Sin,
    Tanh,
    /// `a e^{−t} / (1 + y²)`
    Decay,
}

impl Source {
    pub const NAMES: [&'static str; 4] = ["zero", "sin", "tanh", "decay"];

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "zero" => Some(Self::Zero),
            "sin" => Some(Self::Sin),
            "tanh" => Some(Self::Tanh),
            "decay" => Some(Self::Decay),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Sin => "sin",
            Self::Tanh => "tanh",
            Self::Decay => "decay",
        }
    }
}

/// Registry-backed pair `(f, g)` with its bound envelopes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nonlinearity {
    drift: Drift,
    lipschitz: f64,
    source: Source,
    amplitude: f64,
}

impl Nonlinearity {
    pub fn new(drift: Drift, lipschitz: f64, source: Source, amplitude: f64) -> Result<Self> {
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(Error::InvalidParameter(format!("L must be nonnegative, got {lipschitz}")));
        }
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "source amplitude must be nonnegative, got {amplitude}"
            )));
        }
        Ok(Self {
            drift,
            lipschitz,
            source,
            amplitude,
        })
    }

    /// Looks both parts up by registry name.
    pub fn from_registry(f_name: &str, lipschitz: f64, g_name: &str, amplitude: f64) -> Result<Self> {
        let drift = Drift::from_name(f_name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown nonlinearity f = {f_name:?}")))?;
        let source = Source::from_name(g_name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown nonlinearity g = {g_name:?}")))?;
        Self::new(drift, lipschitz, source, amplitude)
    }

    pub fn zero() -> Self {
        Self {
            drift: Drift::Zero,
            lipschitz: 0.0,
            source: Source::Zero,
            amplitude: 0.0,
        }
    }

    pub fn drift(&self) -> Drift {
        self.drift
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn registry_name(&self) -> String {
        format!("{}+{}", self.drift.name(), self.source.name())
    }

    pub fn f(&self, _t: f64, y: f64) -> f64 {
        self.lipschitz * self.drift.shape(y)
    }

    pub fn f_prime(&self, _t: f64, y: f64) -> f64 {
        self.lipschitz * self.drift.shape_prime(y)
    }

    pub fn g(&self, t: f64, y: f64) -> f64 {
        let a = self.amplitude;
        match self.source {
            Source::Zero => 0.0,
            Source::Sin => a * y.sin(),
            Source::Tanh => a * y.tanh(),
            Source::Decay => a * (-t).exp() / (1.0 + y * y),
        }
    }

    /// `m(t)` with `|g(t, y)| ≤ m(t)` for all `y`.
    pub fn envelope(&self, t: f64) -> f64 {
        match self.source {
            Source::Zero => 0.0,
            Source::Sin | Source::Tanh => self.amplitude,
            Source::Decay => self.amplitude * (-t).exp(),
        }
    }

    /// Checks `f(t, 0) = 0`, `|f′| ≤ L` and `|g| ≤ m` on a `(t, y)` lattice.
    pub fn check_lattice(&self, ts: &[f64], ys: &[f64]) -> Result<()> {
        for &t in ts {
            if self.f(t, 0.0) != 0.0 {
                return Err(Error::InvalidParameter(format!("f({t}, 0) ≠ 0")));
            }
            for &y in ys {
                if self.f_prime(t, y).abs() > self.lipschitz {
                    return Err(Error::InvalidParameter(format!("|f′({t}, {y})| exceeds L")));
                }
                if self.g(t, y).abs() > self.envelope(t) * (1.0 + 1e-12) {
                    return Err(Error::InvalidParameter(format!("|g({t}, {y})| exceeds m({t})")));
                }
            }
        }
        Ok(())
    }
}

/// 16-point Gauss–Legendre rule on `[0, 1]`.
fn gauss_legendre_unit() -> &'static ([f64; 16], [f64; 16]) {
    static RULE: OnceLock<([f64; 16], [f64; 16])> = OnceLock::new();
    RULE.get_or_init(|| {
        const N: usize = 16;
        let mut nodes = [0.0; N];
        let mut weights = [0.0; N];
        for i in 0..N {
            let mut x = (PI * (i as f64 + 0.75) / (N as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=N {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = N as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = 0.5 * (1.0 - x);
            weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

/// Point evaluation and sine-quadrature analysis on `θ_j = jπ/(P+1)`.
#[derive(Clone, Debug)]
pub struct CollocationMap {
    synthesis: DMatrix<f64>,
    analysis: DMatrix<f64>,
}

impl CollocationMap {
    /// Requires `points ≥ 2N`.
    pub fn new(n_modes: usize, points: usize) -> Result<Self> {
        if n_modes == 0 || points < 2 * n_modes {
            return Err(Error::InvalidParameter(format!(
                "collocation needs at least 2N = {} points, got {points}",
                2 * n_modes
            )));
        }
        let c = (2.0 / PI).sqrt();
        let h = PI / (points + 1) as f64;
        let synthesis = DMatrix::from_fn(points, n_modes, |j, n| c * (((n + 1) * (j + 1)) as f64 * h).sin());
        let analysis = synthesis.transpose() * h;
        Ok(Self { synthesis, analysis })
    }

    /// Default resolution of `4N` points.
    pub fn for_modes(n_modes: usize) -> Result<Self> {
        Self::new(n_modes, 4 * n_modes)
    }

    pub fn points(&self) -> usize {
        self.synthesis.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.synthesis.ncols()
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = PI / (self.points() + 1) as f64;
        (1..=self.points()).map(|j| j as f64 * h).collect()
    }

    pub fn synthesis(&self) -> &DMatrix<f64> {
        &self.synthesis
    }

    pub fn analysis(&self) -> &DMatrix<f64> {
        &self.analysis
    }

    /// Grid values from spectral coefficients.
    pub fn to_grid(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("collocation synthesis", self.n_modes(), z.len())?;
        Ok(&self.synthesis * z)
    }

    /// Spectral coefficients from grid values.
    pub fn to_modes(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("collocation analysis", self.points(), w.len())?;
        Ok(&self.analysis * w)
    }
}

/// Panel width in `|r w|` for the composite rule.
const PANEL_WIDTH: f64 = 4.0;
const MAX_PANELS: usize = 256;

/// Averaged derivatives `d_j = ∫₀¹ f′(t, r w_j) dr` on the grid values `w`,
/// by 16-point Gauss–Legendre on `1 + ⌊|w_j|/4⌋` equal panels.
pub fn averaged_derivatives(nl: &Nonlinearity, t: f64, w: &DVector<f64>) -> Result<DVector<f64>> {
    let (nodes, weights) = gauss_legendre_unit();
    let d = w.map(|wj| {
        let panels = (1 + (wj.abs() / PANEL_WIDTH) as usize).min(MAX_PANELS);
        let h = 1.0 / panels as f64;
        (0..panels)
            .map(|p| {
                nodes
                    .iter()
                    .zip(weights)
                    .map(|(r, wt)| wt * nl.f_prime(t, (p as f64 + r) * h * wj))
                    .sum::<f64>()
            })
            .sum::<f64>()
            * h
    });
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("quasilinearization quadrature".into()));
    }
    Ok(d)
}

/// `F(t, z)` as an `N × N` spectral matrix: `analysis · diag(d) · synthesis`.
pub fn quasilinearize(nl: &Nonlinearity, colloc: &CollocationMap, t: f64, z: &DVector<f64>) -> Result<DMatrix<f64>> {
    let w = colloc.to_grid(z)?;
    let d = averaged_derivatives(nl, t, &w)?;
    let mut scaled = colloc.synthesis().clone();
    for (mut row, dj) in scaled.row_iter_mut().zip(d.iter()) {
        row *= *dj;
    }
    Ok(colloc.analysis() * scaled)
}

/// A state trajectory sampled on every node of a [`TimeGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(states: Vec<DVector<f64>>) -> Result<Self> {
        let n = states
            .first()
            .map(|s| s.len())
            .ok_or_else(|| Error::InvalidParameter("empty trajectory".into()))?;
        for s in &states {
            check_dim("trajectory state", n, s.len())?;
        }
        Ok(Self { states })
    }

    pub fn constant(nodes: usize, state: DVector<f64>) -> Self {
        Self {
            states: vec![state; nodes],
        }
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn terminal(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory is nonempty")
    }

    /// `max_k ‖a_k − b_k‖`.
    pub fn sup_distance(&self, other: &Trajectory) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `(1 − ω) self + ω other`.
    pub fn relax(&self, other: &Trajectory, omega: f64) -> Trajectory {
        Trajectory {
            states: self
                .states
                .iter()
                .zip(&other.states)
                .map(|(a, b)| a * (1.0 - omega) + b * omega)
                .collect(),
        }
    }
}

/// Picard iteration settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial relaxation `ω ∈ (0, 1]`.
    pub relaxation: f64,
}

impl Default for IterationSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
            relaxation: 1.0,
        }
    }
}

/// Smallest relaxation reached by automatic halving.
pub const MIN_RELAXATION: f64 = 1.0 / 16.0;

/// A semilinear steering instance.
#[derive(Clone, Debug)]
pub struct SemilinearProblem {
    pub base: SteeringProblem,
    pub nonlinearity: Nonlinearity,
    pub colloc: CollocationMap,
    pub grid: TimeGrid,
    pub iteration: IterationSettings,
}

impl SemilinearProblem {
    pub fn new(
        base: SteeringProblem,
        nonlinearity: Nonlinearity,
        colloc: CollocationMap,
        grid: TimeGrid,
        iteration: IterationSettings,
    ) -> Result<Self> {
        check_dim("collocation modes", base.n_modes(), colloc.n_modes())?;
        if (grid.horizon() - base.horizon).abs() > 1e-12 * base.horizon {
            return Err(Error::InvalidParameter(format!(
                "time grid horizon {} does not match T = {}",
                grid.horizon(),
                base.horizon
            )));
        }
        if !(iteration.tol > 0.0) {
            return Err(Error::InvalidParameter("tol must be positive".into()));
        }
        if !(iteration.relaxation > 0.0 && iteration.relaxation <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "relaxation must lie in (0, 1], got {}",
                iteration.relaxation
            )));
        }
        if iteration.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        Ok(Self {
            base,
            nonlinearity,
            colloc,
            grid,
            iteration,
        })
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        let mut p = self.clone();
        p.base = self.base.with_eps(eps)?;
        Ok(p)
    }

    pub fn eps(&self) -> f64 {
        self.base.eps
    }

    fn check_trajectory(&self, z: &Trajectory) -> Result<()> {
        check_dim("trajectory nodes", self.grid.steps() + 1, z.len())?;
        check_dim("trajectory state", self.base.n_modes(), z.states()[0].len())
    }

    /// Spectral image of `g(t_k, z(t_k)·)` at every node.
    pub fn source_samples(&self, z: &Trajectory) -> Result<Vec<DVector<f64>>> {
        self.check_trajectory(z)?;
        let nl = &self.nonlinearity;
        self.grid
            .nodes()
            .zip(z.states())
            .map(|(t, zk)| {
                let w = self.colloc.to_grid(zk)?;
                self.colloc.to_modes(&w.map(|wj| nl.g(t, wj)))
            })
            .collect()
    }

    /// Spectral image of `f(t, y·) + g(t, y·)`.
    fn pointwise_rhs(&self, t: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        let nl = &self.nonlinearity;
        let w = self.colloc.to_grid(y)?;
        self.colloc.to_modes(&w.map(|wj| nl.f(t, wj) + nl.g(t, wj)))
    }

    /// Uncontrolled semilinear trajectory (exponential Heun), used as the
    /// first iterate.
    pub fn free_trajectory(&self) -> Result<Trajectory> {
        let dt = self.grid.dt();
        let decay = self.base.model.semigroup_diagonal(dt);
        let mut states = Vec::with_capacity(self.grid.steps() + 1);
        states.push(self.base.y0.clone());
        for k in 0..self.grid.steps() {
            let (t0, t1) = (self.grid.node(k), self.grid.node(k + 1));
            let y = &states[k];
            let r0 = self.pointwise_rhs(t0, y)?;
            let predictor = (y + &r0 * dt).component_mul(&decay);
            let r1 = self.pointwise_rhs(t1, &predictor)?;
            let next = (y + r0 * (0.5 * dt)).component_mul(&decay) + r1 * (0.5 * dt);
            states.push(next);
        }
        Trajectory::new(states)
    }
}

/// `G_k = F(t_k, z(t_k))` at every node.
pub fn field_from_trajectory(problem: &SemilinearProblem, z: &Trajectory) -> Result<PerturbationField> {
    problem.check_trajectory(z)?;
    let nl = &problem.nonlinearity;
    let matrices = problem
        .grid
        .nodes()
        .zip(z.states())
        .map(|(t, zk)| quasilinearize(nl, &problem.colloc, t, zk))
        .collect::<Result<Vec<_>>>()?;
    PerturbationField::new(problem.grid, matrices, nl.lipschitz())
}

/// Output of [`control_map`].
#[derive(Clone, Debug)]
pub struct ControlMap {
    /// `h(z) = y_f − Ψ_0 y₀ − Σ w_k Ψ_k g_k`
    pub target_defect: DVector<f64>,
    /// `φ = (ε(I−π) + Γ(F(z)))⁻¹ h(z)`
    pub phi: DVector<f64>,
    /// `u(t_k) = Bᵀ Ψ_kᵀ φ`
    pub controls: Vec<DVector<f64>>,
    /// Spectral source samples `g_k` used in `h(z)`.
    pub sources: Vec<DVector<f64>>,
    /// Measured `γ̂ = ‖ε(εI + Γ)⁻¹π‖`.
    pub gamma_hat: f64,
    /// `‖B‖`
    pub control_norm: f64,
    /// `R_ε = M_B M_𝔗 (‖y_f‖ + M_𝔗‖y₀‖ + M_𝔗 T ‖m‖_C) / (ε(1 − γ̂))`
    pub control_bound: f64,
    /// `max_k ‖u(t_k)‖`
    pub max_control: f64,
}

impl ControlMap {
    pub fn bound_holds(&self) -> bool {
        self.max_control <= self.control_bound
    }
}

/// The explicit control `u_ε(t, z)` and its a-priori bound.
pub fn control_map(
    problem: &SemilinearProblem,
    z: &Trajectory,
    stack: &TransitionStack,
    gram: &Gramian,
) -> Result<ControlMap> {
    let base = &problem.base;
    let grid = &problem.grid;
    check_dim("stack nodes", grid.steps(), stack.grid().steps())?;
    let sources = problem.source_samples(z)?;

    let mut target_defect = &base.yf - stack.terminal(0) * &base.y0;
    for (k, gk) in sources.iter().enumerate() {
        target_defect -= stack.terminal(k) * gk * grid.trapezoid_weight(k);
    }
    let phi = linops::resolvent_like_apply(&gram.matrix, base.eps, &base.projection, &target_defect)?;

    let b = base.control_matrix();
    let controls: Vec<DVector<f64>> = (0..=grid.steps())
        .map(|k| b.tr_mul(&stack.terminal(k).tr_mul(&phi)))
        .collect();
    let max_control = controls.iter().map(|u| u.norm()).fold(0.0, f64::max);

    let gamma_hat = linops::contraction_norm(&gram.matrix, base.eps, &base.projection)?;
    let control_norm = spectral_norm(b);
    let m_t = stack.norm_bound();
    // Pointwise |g| ≤ m(t) bounds the spectral image by √π · m(t).
    let envelope = PI.sqrt()
        * grid
            .nodes()
            .map(|t| problem.nonlinearity.envelope(t))
            .fold(0.0, f64::max);
    let control_bound = control_norm
        * m_t
        * (base.yf.norm() + m_t * base.y0.norm() + m_t * grid.horizon() * envelope)
        / (base.eps * (1.0 - gamma_hat));

    Ok(ControlMap {
        target_defect,
        phi,
        controls,
        sources,
        gamma_hat,
        control_norm,
        control_bound,
        max_control,
    })
}

/// One application of `Θ_ε` with its intermediate objects.
#[derive(Clone, Debug)]
pub struct ThetaStep {
    pub trajectory: Trajectory,
    pub stack: TransitionStack,
    pub gramian: Gramian,
    pub control: ControlMap,
}

/// `(Θ_ε z)(t) = 𝔗(t,0)y₀ + ∫₀ᵗ 𝔗(t,s)[Bu_ε(s,z) + g(s,z(s))] ds`.
///
/// The Duhamel integral is accumulated step by step with the trapezoid rule
/// on the same splitting propagators that define the Gramian.
pub fn theta_step(problem: &SemilinearProblem, z: &Trajectory) -> Result<ThetaStep> {
    let field = field_from_trajectory(problem, z)?;
    let stack = build_transition_stack(&problem.base.model, &field)?;
    let gramian = gramian_time_varying(&stack, &problem.base.control)?;
    let control = control_map(problem, z, &stack, &gramian)?;

    let b = problem.base.control_matrix();
    let forcing: Vec<DVector<f64>> = control
        .controls
        .iter()
        .zip(&control.sources)
        .map(|(u, g)| b * u + g)
        .collect();
    let half_dt = 0.5 * problem.grid.dt();
    let mut states = Vec::with_capacity(forcing.len());
    states.push(problem.base.y0.clone());
    for k in 0..problem.grid.steps() {
        let s = stack.step(k);
        let next = s * (&states[k] + &forcing[k] * half_dt) + &forcing[k + 1] * half_dt;
        states.push(next);
    }
    Ok(ThetaStep {
        trajectory: Trajectory::new(states)?,
        stack,
        gramian,
        control,
    })
}

/// `Θ_ε z`.
pub fn theta_apply(problem: &SemilinearProblem, z: &Trajectory) -> Result<Trajectory> {
    theta_step(problem, z).map(|s| s.trajectory)
}

/// Outcome of [`fixed_point_solve`].
#[derive(Clone, Debug)]
pub struct FixedPointReport {
    pub eps: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `max_k ‖(Θ_ε z)(t_k) − z(t_k)‖` per iteration.
    pub residual_history: Vec<f64>,
    /// Relaxation in effect at each iteration.
    pub relaxation_history: Vec<f64>,
    pub terminal_error_norm: f64,
    pub projection_residual: f64,
    /// `‖ε(I−π)φ‖`, the predicted terminal error.
    pub predicted_error_norm: f64,
    /// `‖y(T) − y_f + ε(I−π)φ‖`
    pub terminal_identity_residual: f64,
    /// `∫₀ᵀ‖u‖² = ⟨Γφ, φ⟩` for the final iterate's Gramian.
    pub control_energy: f64,
    pub gamma_hat: f64,
    /// Largest `γ̂` seen over all iterates.
    pub gamma_hat_max: f64,
    pub delta: Option<f64>,
    pub phi: DVector<f64>,
    pub control_bound: f64,
    pub max_control: f64,
    /// Iterations at which `max ‖u‖ ≤ R_ε` failed.
    pub bound_violations: Vec<usize>,
    pub final_trajectory: Trajectory,
}

/// Damped Picard iteration `z ← (1−ω)z + ωΘ_ε(z)` from the free trajectory.
///
/// `ω` halves (down to [`MIN_RELAXATION`]) after three consecutive residual
/// increases. Non-convergence is reported with `converged = false`.
pub fn fixed_point_solve(problem: &SemilinearProblem) -> Result<FixedPointReport> {
    let settings = problem.iteration;
    let mut z = problem.free_trajectory()?;
    let mut omega = settings.relaxation;
    let mut residual_history = Vec::new();
    let mut relaxation_history = Vec::new();
    let mut bound_violations = Vec::new();
    let mut gamma_hat_max: f64 = 0.0;
    let mut increases = 0;
    let mut converged = false;
    let mut last: Option<ThetaStep> = None;

    for it in 1..=settings.max_iter {
        let step = theta_step(problem, &z)?;
        let residual = step.trajectory.sup_distance(&z);
        if !residual.is_finite() {
            return Err(Error::NonFinite(format!("fixed-point residual at iteration {it}")));
        }
        gamma_hat_max = gamma_hat_max.max(step.control.gamma_hat);
        if !step.control.bound_holds() {
            bound_violations.push(it);
        }
        if let Some(&prev) = residual_history.last() {
            if residual > prev {
                increases += 1;
            } else {
                increases = 0;
            }
        }
        residual_history.push(residual);
        relaxation_history.push(omega);
        if residual <= settings.tol {
            converged = true;
            last = Some(step);
            break;
        }
        if increases >= 3 && omega > MIN_RELAXATION {
            omega = (omega * 0.5).max(MIN_RELAXATION);
            increases = 0;
        }
        z = z.relax(&step.trajectory, omega);
        last = Some(step);
    }

    let step = last.expect("at least one iteration runs");
    let base = &problem.base;
    let terminal = step.trajectory.terminal();
    let err = terminal - &base.yf;
    let phi = step.control.phi.clone();
    let predicted = base.projection.project_complement(&phi)? * base.eps;
    let delta = if base.projection.rank() > 0 {
        Some(linops::delta_coercivity(&step.gramian.matrix, &base.projection)?)
    } else {
        None
    };
    Ok(FixedPointReport {
        eps: base.eps,
        converged,
        iterations: residual_history.len(),
        terminal_error_norm: err.norm(),
        projection_residual: base.projection.project(&err)?.norm(),
        predicted_error_norm: predicted.norm(),
        terminal_identity_residual: (&err + &predicted).norm(),
        control_energy: (step.gramian.matrix.matrix() * &phi).dot(&phi),
        gamma_hat: step.control.gamma_hat,
        gamma_hat_max,
        delta,
        control_bound: step.control.control_bound,
        max_control: step.control.max_control,
        phi,
        bound_violations,
        residual_history,
        relaxation_history,
        final_trajectory: step.trajectory,
    })
}

/// Runs [`fixed_point_solve`] for every ε of the grid; rows in grid order.
pub fn epsilon_study(template: &SemilinearProblem, grid: &EpsGrid) -> Result<Vec<FixedPointReport>> {
    grid.values()
        .par_iter()
        .map(|&eps| fixed_point_solve(&template.with_eps(eps)?))
        .collect()
}
