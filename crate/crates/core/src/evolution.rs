//! Evolution operators `𝔗(t, s; G)` of the nonautonomous generator
//! `A + G(t)`, sampled on a uniform time grid.
//!
//! Each step uses Strang splitting with the diagonal heat semigroup applied
//! exactly and the bounded perturbation handled by a small matrix
//! exponential of its midpoint average:
//!
//! ```text
//! S_k = 𝔘(Δt/2) · exp(Ḡ_k Δt) · 𝔘(Δt/2),   Ḡ_k = (G_k + G_{k+1}) / 2.
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::expm::expm;
use crate::linops::SymPosMatrix;
use crate::spectral::{ControlOperator, Gramian, GramianProvenance, HeatModel};

/// Uniform grid `t_k = kT/K` on `[0, T]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        if steps < 2 {
            return Err(Error::InvalidParameter(format!("time grid needs at least 2 steps, got {steps}")));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of subintervals `K`; there are `K + 1` nodes.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.node(k))
    }

    /// Composite trapezoid weight of node `k`.
    pub fn trapezoid_weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.steps {
            0.5 * self.dt()
        } else {
            self.dt()
        }
    }
}

/// Spectral norm, from the singular values.
pub(crate) fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

/// Samples `G_k ≈ G(t_k)` of a bounded perturbation, `‖G_k‖ ≤ L`.
#[derive(Clone, Debug)]
pub struct PerturbationField {
    grid: TimeGrid,
    matrices: Vec<DMatrix<f64>>,
    bound: f64,
}

impl PerturbationField {
    pub fn new(grid: TimeGrid, matrices: Vec<DMatrix<f64>>, bound: f64) -> Result<Self> {
        check_dim("perturbation samples", grid.steps() + 1, matrices.len())?;
        if !(bound >= 0.0) {
            return Err(Error::InvalidParameter(format!("bound must be nonnegative, got {bound}")));
        }
        let n = matrices[0].nrows();
        for (k, g) in matrices.iter().enumerate() {
            check_dim("perturbation rows", n, g.nrows())?;
            check_dim("perturbation cols", n, g.ncols())?;
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("perturbation at node {k}")));
            }
            let norm = spectral_norm(g);
            if norm > bound * (1.0 + 1e-8) {
                return Err(Error::BoundViolation { node: k, norm, bound });
            }
        }
        Ok(Self { grid, matrices, bound })
    }

    pub fn zero(grid: TimeGrid, n_modes: usize) -> Self {
        Self {
            grid,
            matrices: vec![DMatrix::zeros(n_modes, n_modes); grid.steps() + 1],
            bound: 0.0,
        }
    }

    /// Samples `g(t_k)` at every node.
    pub fn from_fn<F>(grid: TimeGrid, bound: f64, mut g: F) -> Result<Self>
    where
        F: FnMut(f64) -> DMatrix<f64>,
    {
        let matrices = grid.nodes().map(&mut g).collect();
        Self::new(grid, matrices, bound)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].nrows()
    }
}

/// Sampled evolution operators on a grid.
#[derive(Clone, Debug)]
pub struct TransitionStack {
    grid: TimeGrid,
    /// One-step propagators `S_k ≈ 𝔗(t_{k+1}, t_k)`.
    steps: Vec<DMatrix<f64>>,
    /// `Φ_k ≈ 𝔗(t_k, 0)`.
    forward: Vec<DMatrix<f64>>,
    /// `Ψ_k ≈ 𝔗(T, t_k)`.
    terminal: Vec<DMatrix<f64>>,
    norm_bound: f64,
}

impl TransitionStack {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.forward[0].nrows()
    }

    pub fn step(&self, k: usize) -> &DMatrix<f64> {
        &self.steps[k]
    }

    pub fn forward(&self, k: usize) -> &DMatrix<f64> {
        &self.forward[k]
    }

    pub fn terminal(&self, k: usize) -> &DMatrix<f64> {
        &self.terminal[k]
    }

    /// `M_𝔗 = max_k max(‖Φ_k‖, ‖Ψ_k‖)`.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    /// `‖Ψ_0 − Φ_K‖`: both represent `𝔗(T, 0)`, accumulated from opposite ends.
    pub fn cocycle_defect(&self) -> f64 {
        (&self.terminal[0] - &self.forward[self.grid.steps()]).amax()
    }
}

/// Propagates the Strang splitting over the whole grid.
pub fn build_transition_stack(model: &HeatModel, field: &PerturbationField) -> Result<TransitionStack> {
    let n = model.n_modes();
    check_dim("perturbation field", n, field.dim())?;
    let grid = *field.grid();
    let k_max = grid.steps();
    let dt = grid.dt();
    let half = model.semigroup_diagonal(0.5 * dt);
    let g = field.matrices();

    let mut steps = Vec::with_capacity(k_max);
    for k in 0..k_max {
        let mean = (&g[k] + &g[k + 1]) * (0.5 * dt);
        let mut s = expm(&mean)?;
        for j in 0..n {
            for i in 0..n {
                s[(i, j)] *= half[i] * half[j];
            }
        }
        steps.push(s);
    }

    let mut forward = Vec::with_capacity(k_max + 1);
    forward.push(DMatrix::identity(n, n));
    for s in &steps {
        let next = s * forward.last().unwrap();
        forward.push(next);
    }

    let mut terminal = vec![DMatrix::identity(n, n); k_max + 1];
    for k in (0..k_max).rev() {
        terminal[k] = &terminal[k + 1] * &steps[k];
    }

    let norm_bound = forward
        .iter()
        .chain(terminal.iter())
        .map(spectral_norm)
        .fold(0.0, f64::max);

    Ok(TransitionStack {
        grid,
        steps,
        forward,
        terminal,
        norm_bound,
    })
}

/// `𝔗(t_to, t_from) x`, composed from the one-step propagators.
pub fn evolution_apply(stack: &TransitionStack, k_from: usize, k_to: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
    let k_max = stack.grid.steps();
    for idx in [k_from, k_to] {
        if idx > k_max {
            return Err(Error::IndexOutOfRange { index: idx, max: k_max });
        }
    }
    if k_from > k_to {
        return Err(Error::InvalidParameter(format!(
            "evolution runs forward only: {k_from} > {k_to}"
        )));
    }
    check_dim("evolution_apply", stack.dim(), x.len())?;
    let mut y = x.clone();
    for s in &stack.steps[k_from..k_to] {
        y = s * y;
    }
    Ok(y)
}

/// `𝔗*(T, t_k) η = Ψ_kᵀ η`.
pub fn adjoint_terminal_apply(stack: &TransitionStack, k: usize, eta: &DVector<f64>) -> Result<DVector<f64>> {
    let k_max = stack.grid.steps();
    if k > k_max {
        return Err(Error::IndexOutOfRange { index: k, max: k_max });
    }
    check_dim("adjoint_terminal_apply", stack.dim(), eta.len())?;
    Ok(stack.terminal[k].tr_mul(eta))
}

/// `Γ₀ᵀ(G) = ∫₀ᵀ 𝔗(T,s)BB*𝔗*(T,s) ds` by the trapezoid rule on the stack's grid.
pub fn gramian_time_varying(stack: &TransitionStack, control: &ControlOperator) -> Result<Gramian> {
    let n = stack.dim();
    let b = control.matrix(n)?;
    let grid = stack.grid;
    let mut g = DMatrix::zeros(n, n);
    for k in 0..=grid.steps() {
        let pb = &stack.terminal[k] * &b;
        g.gemm(grid.trapezoid_weight(k), &pb, &pb.transpose(), 1.0);
    }
    Ok(Gramian {
        matrix: SymPosMatrix::symmetrized(g)?,
        horizon: grid.horizon(),
        provenance: GramianProvenance::Quadrature { steps: grid.steps() },
    })
}
