//! Linear finite-approximate steering.
//!
//! For the linear system `y' = Ay + Bu` the control is
//! `u(s) = B*𝔘*(T−s)φ_min`, where `φ_min` minimizes
//!
//! ```text
//! J_ε(φ) = ½⟨Γφ, φ⟩ + (ε/2)⟨(I−π)φ, φ⟩ − ⟨φ, y_f − 𝔘(T)y₀⟩.
//! ```
//!
//! The terminal state then satisfies
//! `y(T) − y_f = ε(I−π)(ε(I−π)+Γ)⁻¹(𝔘(T)y₀ − y_f)`, so its projection onto
//! `M` vanishes exactly while the full error shrinks with `ε`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linops::{self, ProjectionSubspace};
use crate::spectral::{gramian_closed_form, ControlOperator, Gramian, HeatModel};

/// A linear steering instance.
#[derive(Clone, Debug)]
pub struct SteeringProblem {
    pub model: HeatModel,
    pub control: ControlOperator,
    pub gramian: Gramian,
    pub horizon: f64,
    pub eps: f64,
    pub projection: ProjectionSubspace,
    pub y0: DVector<f64>,
    pub yf: DVector<f64>,
    control_matrix: DMatrix<f64>,
}

impl SteeringProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: HeatModel,
        control: ControlOperator,
        gramian: Gramian,
        horizon: f64,
        eps: f64,
        projection: ProjectionSubspace,
        y0: DVector<f64>,
        yf: DVector<f64>,
    ) -> Result<Self> {
        let n = model.n_modes();
        check_dim("gramian", n, gramian.dim())?;
        check_dim("projection", n, projection.ambient_dim())?;
        check_dim("y0", n, y0.len())?;
        check_dim("yf", n, yf.len())?;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
        }
        if !(horizon > 0.0) || (gramian.horizon - horizon).abs() > 1e-12 * horizon {
            return Err(Error::InvalidParameter(format!(
                "gramian horizon {} does not match T = {horizon}",
                gramian.horizon
            )));
        }
        let control_matrix = control.matrix(n)?;
        Ok(Self {
            model,
            control,
            gramian,
            horizon,
            eps,
            projection,
            y0,
            yf,
            control_matrix,
        })
    }

    /// Builds the problem with the closed-form autonomous Gramian.
    pub fn with_closed_form(
        model: HeatModel,
        control: ControlOperator,
        horizon: f64,
        eps: f64,
        projection: ProjectionSubspace,
        y0: DVector<f64>,
        yf: DVector<f64>,
    ) -> Result<Self> {
        let gramian = gramian_closed_form(&model, &control, horizon)?;
        Self::new(model, control, gramian, horizon, eps, projection, y0, yf)
    }

    /// Same instance with a different ε.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        let mut p = self.clone();
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
        }
        p.eps = eps;
        Ok(p)
    }

    pub fn n_modes(&self) -> usize {
        self.model.n_modes()
    }

    pub fn control_matrix(&self) -> &DMatrix<f64> {
        &self.control_matrix
    }

    /// `𝔘(T)y₀`.
    pub fn free_endpoint(&self) -> DVector<f64> {
        self.model.semigroup_diagonal(self.horizon).component_mul(&self.y0)
    }

    /// `𝔘(T)y₀ − y_f`.
    fn defect(&self) -> DVector<f64> {
        self.free_endpoint() - &self.yf
    }

    /// Coercivity constant of the Gramian on `M`; `None` when `M` is trivial.
    pub fn delta(&self) -> Result<Option<f64>> {
        if self.projection.rank() == 0 {
            return Ok(None);
        }
        linops::delta_coercivity(&self.gramian.matrix, &self.projection).map(Some)
    }

    /// `min(ε, δ)`, the lower bound on the resolvent-like operator.
    pub fn condition_proxy(&self) -> Result<f64> {
        Ok(match self.delta()? {
            Some(d) => self.eps.min(d),
            None => self.eps,
        })
    }

    /// `J_ε(φ)`, with the integral term evaluated through `⟨Γφ, φ⟩`.
    pub fn j_functional(&self, phi: &DVector<f64>) -> Result<f64> {
        check_dim("phi", self.n_modes(), phi.len())?;
        let g_phi = self.gramian.matrix.matrix() * phi;
        let complement = self.projection.project_complement(phi)?;
        Ok(0.5 * g_phi.dot(phi) + 0.5 * self.eps * complement.dot(phi) + phi.dot(&self.defect()))
    }

    /// `∇J_ε(φ) = Γφ + ε(I−π)φ − (y_f − 𝔘(T)y₀)`.
    pub fn gradient(&self, phi: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("phi", self.n_modes(), phi.len())?;
        let complement = self.projection.project_complement(phi)?;
        Ok(self.gramian.matrix.matrix() * phi + complement * self.eps + self.defect())
    }

    /// `φ_min = −(ε(I−π)+Γ)⁻¹(𝔘(T)y₀ − y_f)`.
    pub fn minimizer(&self) -> Result<DVector<f64>> {
        let x = linops::resolvent_like_apply(&self.gramian.matrix, self.eps, &self.projection, &self.defect())?;
        Ok(-x)
    }

    /// `u(t) = Bᵀ 𝔘(T−t) φ`.
    pub fn control_signal(&self, phi: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::InvalidParameter(format!(
                "t = {t} outside [0, {}]",
                self.horizon
            )));
        }
        check_dim("phi", self.n_modes(), phi.len())?;
        let decayed = self.model.semigroup_diagonal(self.horizon - t).component_mul(phi);
        Ok(self.control_matrix.transpose() * decayed)
    }

    /// `y(T) = 𝔘(T)y₀ + Γφ`.
    pub fn terminal_state(&self, phi: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("phi", self.n_modes(), phi.len())?;
        Ok(self.free_endpoint() + self.gramian.matrix.matrix() * phi)
    }

    /// Right side of the terminal-error identity,
    /// `ε(I−π)(ε(I−π)+Γ)⁻¹(𝔘(T)y₀ − y_f)`.
    pub fn predicted_error(&self) -> Result<DVector<f64>> {
        let x = linops::resolvent_like_apply(&self.gramian.matrix, self.eps, &self.projection, &self.defect())?;
        Ok(self.projection.project_complement(&x)? * self.eps)
    }

    /// Synthesizes the control and collects the terminal diagnostics.
    pub fn steer(&self, sample_count: usize) -> Result<SteeringResult> {
        if sample_count < 2 {
            return Err(Error::InvalidParameter("sample_count must be at least 2".into()));
        }
        let phi_min = self.minimizer()?;
        let terminal_state = self.terminal_state(&phi_min)?;
        let err = &terminal_state - &self.yf;
        let projection_residual = self.projection.project(&err)?.norm();
        let predicted_error = self.predicted_error()?;
        let control_energy = (self.gramian.matrix.matrix() * &phi_min).dot(&phi_min);
        let control_samples = (0..sample_count)
            .map(|k| {
                let t = if k + 1 == sample_count {
                    self.horizon
                } else {
                    self.horizon * k as f64 / (sample_count - 1) as f64
                };
                Ok((t, self.control_signal(&phi_min, t)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SteeringResult {
            eps: self.eps,
            error_norm: err.norm(),
            projection_residual,
            predicted_error,
            control_energy,
            control_samples,
            delta: self.delta()?,
            gamma_hat: linops::contraction_norm(&self.gramian.matrix, self.eps, &self.projection)?,
            phi_min,
            terminal_state,
        })
    }

    /// Truncation diagnostic: re-solves the instance on `2N` modes (states
    /// zero-padded, closed-form Gramian) and returns the distance between
    /// the two terminal states.
    pub fn refinement_gap(&self) -> Result<f64> {
        let n = self.n_modes();
        let fine_model = HeatModel::new(2 * n)?;
        let pad = |v: &DVector<f64>| DVector::from_fn(2 * n, |i, _| if i < n { v[i] } else { 0.0 });
        let mut basis = DMatrix::zeros(2 * n, self.projection.rank());
        basis.view_mut((0, 0), (n, self.projection.rank())).copy_from(self.projection.basis());
        let fine = SteeringProblem::with_closed_form(
            fine_model,
            self.control.clone(),
            self.horizon,
            self.eps,
            ProjectionSubspace::new(basis)?,
            pad(&self.y0),
            pad(&self.yf),
        )?;
        let coarse_terminal = self.terminal_state(&self.minimizer()?)?;
        let fine_terminal = fine.terminal_state(&fine.minimizer()?)?;
        Ok((fine_terminal - pad(&coarse_terminal)).norm())
    }
}

/// Output of [`SteeringProblem::steer`].
#[derive(Clone, Debug)]
pub struct SteeringResult {
    pub eps: f64,
    pub phi_min: DVector<f64>,
    pub terminal_state: DVector<f64>,
    /// `‖y(T) − y_f‖`
    pub error_norm: f64,
    /// `‖π(y(T) − y_f)‖`
    pub projection_residual: f64,
    /// Signed right side of the terminal-error identity.
    pub predicted_error: DVector<f64>,
    /// `∫₀ᵀ‖u(s)‖² ds = ⟨Γφ_min, φ_min⟩`
    pub control_energy: f64,
    pub control_samples: Vec<(f64, DVector<f64>)>,
    pub delta: Option<f64>,
    pub gamma_hat: f64,
}

/// Steers every ε of a grid; rows come back in grid order.
pub fn epsilon_sweep(base: &SteeringProblem, eps_values: &[f64], sample_count: usize) -> Result<Vec<SteeringResult>> {
    use rayon::prelude::*;
    eps_values
        .par_iter()
        .map(|&eps| base.with_eps(eps)?.steer(sample_count))
        .collect()
}
