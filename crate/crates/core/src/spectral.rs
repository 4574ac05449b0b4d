//! Spectral truncation of the 1-D Dirichlet heat equation on `(0, π)`.
//!
//! States are coefficient vectors in the sine basis
//! `e_n(θ) = √(2/π) sin(nθ)`, `n = 1..N` (1-based in all formulas; slot
//! `n − 1` in vectors). The generator is diagonal with eigenvalues `−n²`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linops::SymPosMatrix;

/// Dirichlet heat model truncated to `N` sine modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatModel {
    n_modes: usize,
}

impl HeatModel {
    pub fn new(n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::InvalidParameter("n_modes must be at least 1".into()));
        }
        Ok(Self { n_modes })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// `λ_n = n²`.
    pub fn eigenvalue(&self, n: usize) -> f64 {
        (n * n) as f64
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        (1..=self.n_modes).map(|n| self.eigenvalue(n)).collect()
    }

    /// Diagonal of `𝔘(t)`: `(e^{−n²t})_n`.
    pub fn semigroup_diagonal(&self, t: f64) -> DVector<f64> {
        DVector::from_fn(self.n_modes, |i, _| (-self.eigenvalue(i + 1) * t).exp())
    }

    /// `𝔘(t)x`.
    pub fn semigroup_apply(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("time must be nonnegative, got {t}")));
        }
        check_dim("semigroup_apply", self.n_modes, x.len())?;
        Ok(self.semigroup_diagonal(t).component_mul(x))
    }
}

/// Free function form of [`HeatModel::semigroup_apply`].
pub fn semigroup_apply(model: &HeatModel, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    model.semigroup_apply(t, x)
}

/// Control operator `B : U → X` in spectral coordinates.
#[derive(Clone, Debug, PartialEq)]
pub enum ControlOperator {
    /// Multiplication by the indicator of `(a, b)`; `U = X`.
    Distributed { a: f64, b: f64 },
    /// Scalar control acting through the indicator of `(α₁, α₂)`.
    Lumped { alpha1: f64, alpha2: f64 },
    /// Arbitrary `N × N_u` matrix.
    FullMatrix(DMatrix<f64>),
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if !(0.0 <= lo && lo < hi && hi <= PI) {
        return Err(Error::InvalidParameter(format!(
            "interval ({lo}, {hi}) must satisfy 0 ≤ lo < hi ≤ π"
        )));
    }
    Ok(())
}

impl ControlOperator {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Distributed { a, b } => check_interval(*a, *b),
            Self::Lumped { alpha1, alpha2 } => check_interval(*alpha1, *alpha2),
            Self::FullMatrix(m) => {
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("control matrix".into()));
                }
                Ok(())
            }
        }
    }

    /// Dimension of the control space for an `n_modes` truncation.
    pub fn input_dim(&self, n_modes: usize) -> usize {
        match self {
            Self::Distributed { .. } => n_modes,
            Self::Lumped { .. } => 1,
            Self::FullMatrix(m) => m.ncols(),
        }
    }

    /// The `N × input_dim` matrix of `B`.
    pub fn matrix(&self, n_modes: usize) -> Result<DMatrix<f64>> {
        match self {
            Self::Distributed { a, b } => distributed_control_matrix(*a, *b, n_modes),
            Self::Lumped { alpha1, alpha2 } => {
                let v = lumped_control_vector(*alpha1, *alpha2, n_modes)?;
                Ok(DMatrix::from_column_slice(n_modes, 1, v.as_slice()))
            }
            Self::FullMatrix(m) => {
                self.validate()?;
                check_dim("control matrix rows", n_modes, m.nrows())?;
                Ok(m.clone())
            }
        }
    }
}

/// `B_mn = ∫_a^b e_m(θ) e_n(θ) dθ` in closed form.
pub fn distributed_control_matrix(a: f64, b: f64, n_modes: usize) -> Result<DMatrix<f64>> {
    check_interval(a, b)?;
    if n_modes == 0 {
        return Err(Error::InvalidParameter("n_modes must be at least 1".into()));
    }
    // e_m e_n = (1/π)[cos((m−n)θ) − cos((m+n)θ)]
    let antiderivative = |m: usize, n: usize, th: f64| -> f64 {
        let plus = (m + n) as f64;
        let diff = if m == n {
            th
        } else {
            let k = m as f64 - n as f64;
            (k * th).sin() / k
        };
        (diff - (plus * th).sin() / plus) / PI
    };
    let mut out = DMatrix::zeros(n_modes, n_modes);
    for m in 1..=n_modes {
        for n in m..=n_modes {
            let v = antiderivative(m, n, b) - antiderivative(m, n, a);
            out[(m - 1, n - 1)] = v;
            out[(n - 1, m - 1)] = v;
        }
    }
    Ok(out)
}

/// `b_n = ∫_{α₁}^{α₂} e_n(θ) dθ = √(2/π)(cos nα₁ − cos nα₂)/n`.
pub fn lumped_control_vector(alpha1: f64, alpha2: f64, n_modes: usize) -> Result<DVector<f64>> {
    check_interval(alpha1, alpha2)?;
    if n_modes == 0 {
        return Err(Error::InvalidParameter("n_modes must be at least 1".into()));
    }
    let c = (2.0 / PI).sqrt();
    Ok(DVector::from_fn(n_modes, |i, _| {
        let n = (i + 1) as f64;
        c * ((n * alpha1).cos() - (n * alpha2).cos()) / n
    }))
}

/// How a Gramian was assembled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GramianProvenance {
    ClosedForm,
    Quadrature { steps: usize },
    /// Supplied from outside, e.g. a fixture file.
    Supplied,
}

/// Controllability Gramian over a horizon `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gramian {
    pub matrix: SymPosMatrix,
    pub horizon: f64,
    pub provenance: GramianProvenance,
}

impl Gramian {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

fn check_horizon(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {t}")));
    }
    Ok(())
}

/// `(1 − e^{−sT})/s` without cancellation.
fn decay_integral(s: f64, t: f64) -> f64 {
    -(-s * t).exp_m1() / s
}

/// `Γ_mn = (BB*)_mn (1 − e^{−(m²+n²)T})/(m²+n²)`.
pub fn gramian_closed_form(model: &HeatModel, control: &ControlOperator, horizon: f64) -> Result<Gramian> {
    check_horizon(horizon)?;
    let n = model.n_modes();
    let weight = |i: usize, j: usize| decay_integral(model.eigenvalue(i + 1) + model.eigenvalue(j + 1), horizon);
    let matrix = match control {
        ControlOperator::Distributed { a, b } => {
            let bm = distributed_control_matrix(*a, *b, n)?;
            let bbt = &bm * bm.transpose();
            let g = DMatrix::from_fn(n, n, |i, j| bbt[(i, j)] * weight(i, j));
            SymPosMatrix::symmetrized(g)?
        }
        ControlOperator::Lumped { alpha1, alpha2 } => {
            let b = lumped_control_vector(*alpha1, *alpha2, n)?;
            let g = DMatrix::from_fn(n, n, |i, j| b[i] * b[j] * weight(i, j));
            SymPosMatrix::symmetrized(g)?
        }
        ControlOperator::FullMatrix(_) => {
            return Err(Error::InvalidParameter(
                "closed-form Gramian needs a distributed or lumped control; use gramian_quadrature".into(),
            ))
        }
    };
    Ok(Gramian {
        matrix,
        horizon,
        provenance: GramianProvenance::ClosedForm,
    })
}

/// Composite trapezoid rule for `∫₀ᵀ 𝔘(T−s)BB*𝔘*(T−s) ds` on `steps`
/// uniform subintervals.
pub fn gramian_quadrature(
    model: &HeatModel,
    control: &ControlOperator,
    horizon: f64,
    steps: usize,
) -> Result<Gramian> {
    check_horizon(horizon)?;
    if steps < 2 {
        return Err(Error::InvalidParameter(format!("steps must be at least 2, got {steps}")));
    }
    let n = model.n_modes();
    let dt = horizon / steps as f64;
    let weight = |k: usize| if k == 0 || k == steps { 0.5 * dt } else { dt };
    let lambda = DVector::from_vec(model.eigenvalues());
    let mut g = DMatrix::zeros(n, n);
    match control {
        ControlOperator::Lumped { alpha1, alpha2 } => {
            let b = lumped_control_vector(*alpha1, *alpha2, n)?;
            for k in 0..=steps {
                let tau = horizon - k as f64 * dt;
                let v = DVector::from_fn(n, |i, _| (-lambda[i] * tau).exp() * b[i]);
                g.ger(weight(k), &v, &v, 1.0);
            }
        }
        _ => {
            let bm = control.matrix(n)?;
            let bbt = &bm * bm.transpose();
            let mut acc = DMatrix::zeros(n, n);
            for k in 0..=steps {
                let tau = horizon - k as f64 * dt;
                let d = lambda.map(|l| (-l * tau).exp());
                let w = weight(k);
                for j in 0..n {
                    for i in 0..n {
                        acc[(i, j)] += w * d[i] * d[j];
                    }
                }
            }
            g = bbt.component_mul(&acc);
        }
    }
    Ok(Gramian {
        matrix: SymPosMatrix::symmetrized(g)?,
        horizon,
        provenance: GramianProvenance::Quadrature { steps },
    })
}
