//! Projection and resolvent-like operator calculus on finite-dimensional
//! real inner-product spaces.
//!
//! The central objects are a symmetric positive semidefinite operator `G`
//! (typically a controllability Gramian), an orthogonal projection `π` onto a
//! finite-dimensional subspace `M`, and a regularization parameter `ε > 0`.
//! From these we build the plain resolvent `(εI + G)⁻¹`, the resolvent-like
//! operator `(ε(I − π) + G)⁻¹` that regularizes only the complement of `M`,
//! and the contraction `ε(εI + G)⁻¹π` whose norm is strictly below one.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, LU};

use crate::error::{check_dim, Error, Result};

/// Below this coercivity constant the resolvent-like operator is refused.
pub const DELTA_FLOOR: f64 = 1e-12;
/// Relative symmetry tolerance for [`SymPosMatrix`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative tolerance on the smallest eigenvalue for [`SymPosMatrix`].
pub const PSD_TOL: f64 = 1e-10;
/// Orthonormality tolerance for [`ProjectionSubspace`] bases.
pub const ORTHONORMAL_TOL: f64 = 1e-12;

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 10_000;

/// Symmetric positive semidefinite operator.
#[derive(Clone, Debug, PartialEq)]
pub struct SymPosMatrix {
    entries: DMatrix<f64>,
}

impl SymPosMatrix {
    /// Validates symmetry and positive semidefiniteness.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        check_square(&entries)?;
        check_symmetric(&entries)?;
        check_psd(&entries)?;
        Ok(Self { entries })
    }

    /// Replaces `A` by `(A + Aᵀ)/2` before the PSD check. Used for matrices
    /// assembled by quadrature, whose asymmetry is pure rounding.
    pub fn symmetrized(entries: DMatrix<f64>) -> Result<Self> {
        check_square(&entries)?;
        let sym = (&entries + entries.transpose()) * 0.5;
        check_psd(&sym)?;
        Ok(Self { entries: sym })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    check_dim("square matrix", m.nrows(), m.ncols())?;
    if m.nrows() == 0 {
        return Err(Error::InvalidParameter("matrix dimension must be positive".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix entry".into()));
    }
    Ok(())
}

/// Largest `|A_ij − A_ji|` relative to `max |A|` must not exceed [`SYMMETRY_TOL`].
pub fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let scale = m.amax();
    let asymmetry = (m - m.transpose()).amax();
    let tolerance = SYMMETRY_TOL * scale;
    if asymmetry > tolerance {
        return Err(Error::NotSymmetric {
            asymmetry,
            tolerance,
        });
    }
    Ok(())
}

/// Smallest eigenvalue must be at least `−PSD_TOL · ‖A‖`.
pub fn check_psd(m: &DMatrix<f64>) -> Result<()> {
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let norm = eig.amax();
    let min = eig.min();
    if min < -PSD_TOL * norm {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min,
        });
    }
    Ok(())
}

/// Orthogonal projection onto the span of an orthonormal basis.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionSubspace {
    basis: DMatrix<f64>,
}

impl ProjectionSubspace {
    /// `basis` is `ambient_dim × m` with orthonormal columns; `m = 0` is allowed.
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        if basis.nrows() == 0 {
            return Err(Error::InvalidParameter("ambient dimension must be positive".into()));
        }
        if basis.ncols() > basis.nrows() {
            return Err(Error::InvalidParameter(format!(
                "subspace dimension {} exceeds ambient dimension {}",
                basis.ncols(),
                basis.nrows()
            )));
        }
        let m = basis.ncols();
        if m > 0 {
            let gram = basis.transpose() * &basis;
            let deviation = (gram - DMatrix::<f64>::identity(m, m)).amax();
            if !(deviation <= ORTHONORMAL_TOL) {
                return Err(Error::NotOrthonormal { deviation });
            }
        }
        Ok(Self { basis })
    }

    /// Span of the first `m` coordinate vectors (the first `m` eigenmodes
    /// in spectral coordinates).
    pub fn leading_modes(ambient_dim: usize, m: usize) -> Result<Self> {
        if m > ambient_dim {
            return Err(Error::InvalidParameter(format!(
                "m = {m} exceeds ambient dimension {ambient_dim}"
            )));
        }
        let mut basis = DMatrix::zeros(ambient_dim, m);
        for j in 0..m {
            basis[(j, j)] = 1.0;
        }
        Self::new(basis)
    }

    pub fn full(ambient_dim: usize) -> Result<Self> {
        Self::leading_modes(ambient_dim, ambient_dim)
    }

    pub fn trivial(ambient_dim: usize) -> Result<Self> {
        Self::leading_modes(ambient_dim, 0)
    }

    /// Orthonormalizes the given spanning vectors (Householder QR).
    pub fn from_spanning(vectors: &[DVector<f64>]) -> Result<Self> {
        let n = vectors
            .first()
            .map(|v| v.len())
            .ok_or_else(|| Error::InvalidParameter("no spanning vectors".into()))?;
        for v in vectors {
            check_dim("spanning vector", n, v.len())?;
        }
        let a = DMatrix::from_columns(vectors);
        let q = a.qr().q();
        Self::new(q.columns(0, vectors.len().min(n)).into_owned())
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Dimension `m` of the subspace.
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Dense `π = basis · basisᵀ`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    pub fn project(&self, h: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("project", self.ambient_dim(), h.len())?;
        Ok(&self.basis * (self.basis.transpose() * h))
    }

    /// `(I − π) h`.
    pub fn project_complement(&self, h: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(h - self.project(h)?)
    }
}

/// `π h`.
pub fn project(p: &ProjectionSubspace, h: &DVector<f64>) -> Result<DVector<f64>> {
    p.project(h)
}

/// Strictly decreasing list of positive regularization parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsGrid {
    values: Vec<f64>,
}

impl EpsGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let positive = values.iter().all(|&e| e > 0.0 && e.is_finite());
        let decreasing = values.windows(2).all(|w| w[0] > w[1]);
        if values.is_empty() || !positive || !decreasing {
            return Err(Error::InvalidEpsGrid);
        }
        Ok(Self { values })
    }

    /// `10^-first, 10^-(first+1), …, 10^-last`.
    pub fn decades(first: i32, last: i32) -> Result<Self> {
        Self::new((first..=last).map(|k| 10f64.powi(-k)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Which factorization a linear solve went through.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolvePath {
    Cholesky,
    PivotedLu,
}

/// A solution vector together with the factorization that produced it.
#[derive(Clone, Debug)]
pub struct Solution {
    pub x: DVector<f64>,
    pub path: SolvePath,
}

enum Factorization {
    Cholesky(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

impl Factorization {
    /// Symmetric factorization first, pivoted LU as fallback.
    fn new(a: &DMatrix<f64>) -> Result<Self> {
        if let Some(chol) = a.clone().cholesky() {
            return Ok(Self::Cholesky(chol));
        }
        let lu = a.clone().lu();
        if !lu.is_invertible() {
            return Err(Error::SolverFailure("matrix is numerically singular".into()));
        }
        Ok(Self::Lu(lu))
    }

    fn path(&self) -> SolvePath {
        match self {
            Self::Cholesky(_) => SolvePath::Cholesky,
            Self::Lu(_) => SolvePath::PivotedLu,
        }
    }

    fn raw_solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let x = match self {
            Self::Cholesky(c) => c.solve(b),
            Self::Lu(lu) => lu
                .solve(b)
                .ok_or_else(|| Error::SolverFailure("LU solve failed".into()))?,
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverFailure("solution is not finite".into()));
        }
        Ok(x)
    }

    /// Solve with iterative refinement on compensated residuals.
    fn solve(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
        let mut x = self.raw_solve(b)?;
        let mut last = f64::INFINITY;
        for _ in 0..REFINEMENT_STEPS {
            let dx = self.raw_solve(&compensated_residual(a, &x, b))?;
            let size = dx.norm();
            if !(size < last) {
                break;
            }
            x += &dx;
            last = size;
            if size <= f64::EPSILON * x.norm() {
                break;
            }
        }
        Ok(x)
    }
}

const REFINEMENT_STEPS: usize = 3;

/// Pivoted LU solve with the same compensated refinement as [`Factorization`].
fn lu_refined(a: &DMatrix<f64>, lu: &LU<f64, Dyn, Dyn>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let singular = || Error::SolverFailure("LU solve failed: matrix is singular".into());
    let mut x = lu.solve(b).ok_or_else(singular)?;
    let mut last = f64::INFINITY;
    for _ in 0..REFINEMENT_STEPS {
        let dx = lu.solve(&compensated_residual(a, &x, b)).ok_or_else(singular)?;
        let size = dx.norm();
        if !(size < last) {
            break;
        }
        x += &dx;
        last = size;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolverFailure("solution is not finite".into()));
    }
    Ok(x)
}

/// `b − A x` with each row accumulated in double-double (TwoSum/FMA).
fn compensated_residual(a: &DMatrix<f64>, x: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(b.len(), |i, _| {
        let (mut hi, mut lo) = (b[i], 0.0f64);
        for (j, xj) in x.iter().enumerate() {
            let p = -a[(i, j)] * xj;
            let p_err = (-a[(i, j)]).mul_add(*xj, -p);
            let t = hi + p;
            let v = t - hi;
            lo += (hi - (t - v)) + (p - v) + p_err;
            hi = t;
        }
        hi + lo
    })
}

fn solve_symmetric(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Solution> {
    let f = Factorization::new(a)?;
    let x = f.solve(a, b)?;
    Ok(Solution { x, path: f.path() })
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

fn shifted(g: &SymPosMatrix, eps: f64) -> DMatrix<f64> {
    let mut a = g.matrix().clone();
    for i in 0..a.nrows() {
        a[(i, i)] += eps;
    }
    a
}

/// Solves `(εI + G)x = h`.
pub fn resolvent_apply(g: &SymPosMatrix, eps: f64, h: &DVector<f64>) -> Result<DVector<f64>> {
    resolvent_solve(g, eps, h).map(|s| s.x)
}

/// As [`resolvent_apply`], reporting the factorization path.
pub fn resolvent_solve(g: &SymPosMatrix, eps: f64, h: &DVector<f64>) -> Result<Solution> {
    check_eps(eps)?;
    check_dim("resolvent_apply", g.dim(), h.len())?;
    solve_symmetric(&shifted(g, eps), h)
}

/// The operator `ε(I − π) + G` as a dense matrix.
pub fn resolvent_like_operator(
    g: &SymPosMatrix,
    eps: f64,
    p: &ProjectionSubspace,
) -> Result<DMatrix<f64>> {
    check_dim("resolvent_like operator", g.dim(), p.ambient_dim())?;
    let mut a = g.matrix() - p.projector() * eps;
    for i in 0..a.nrows() {
        a[(i, i)] += eps;
    }
    Ok(a)
}

/// Solves `(ε(I − π) + G)x = h`.
///
/// When `m > 0` the coercivity constant `δ` must exceed [`DELTA_FLOOR`];
/// otherwise the operator is refused as not invertible to working precision.
pub fn resolvent_like_apply(
    g: &SymPosMatrix,
    eps: f64,
    p: &ProjectionSubspace,
    h: &DVector<f64>,
) -> Result<DVector<f64>> {
    resolvent_like_solve(g, eps, p, h).map(|s| s.x)
}

/// As [`resolvent_like_apply`], reporting the factorization path.
pub fn resolvent_like_solve(
    g: &SymPosMatrix,
    eps: f64,
    p: &ProjectionSubspace,
    h: &DVector<f64>,
) -> Result<Solution> {
    check_eps(eps)?;
    check_dim("resolvent_like_apply", g.dim(), h.len())?;
    check_dim("resolvent_like_apply subspace", g.dim(), p.ambient_dim())?;
    if p.rank() > 0 {
        let delta = delta_coercivity(g, p)?;
        if delta <= DELTA_FLOOR {
            return Err(Error::CoercivityFailure {
                delta,
                floor: DELTA_FLOOR,
            });
        }
    }
    solve_symmetric(&resolvent_like_operator(g, eps, p)?, h)
}

/// `δ = min{⟨πGπφ, φ⟩ : ‖πφ‖ = 1}`, the smallest eigenvalue of `basisᵀ G basis`.
pub fn delta_coercivity(g: &SymPosMatrix, p: &ProjectionSubspace) -> Result<f64> {
    check_dim("delta_coercivity", g.dim(), p.ambient_dim())?;
    if p.rank() == 0 {
        return Err(Error::EmptySubspace);
    }
    let b = p.basis();
    let restricted = b.transpose() * g.matrix() * b;
    let restricted = (&restricted + restricted.transpose()) * 0.5;
    let min = SymmetricEigen::new(restricted).eigenvalues.min();
    Ok(min.max(0.0))
}

/// Largest eigenvalue of a symmetric positive semidefinite operator given by
/// its action, via power iteration with Rayleigh quotients.
///
/// Stops once the relative change, inflated by the observed convergence
/// ratio, is below `tol`. If the cap is reached (tightly clustered top
/// eigenvalues), the estimate is still accepted when the plain relative
/// change is below `tol`.
pub fn power_iteration_psd<F>(dim: usize, mut apply: F, tol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    if dim == 0 {
        return Ok(0.0);
    }
    let mut v = DVector::from_fn(dim, |i, _| 1.0 + (i as f64 * 0.618_033_988_749_895).fract());
    v /= v.norm();
    let mut lam_prev = f64::NAN;
    let mut delta_prev = f64::NAN;
    for _ in 0..max_iter {
        let w = apply(&v)?;
        let lam = v.dot(&w);
        let nw = w.norm();
        if !nw.is_finite() {
            return Err(Error::NonFinite("power iteration".into()));
        }
        if nw == 0.0 {
            return Ok(0.0);
        }
        v = w / nw;
        let delta = (lam - lam_prev).abs();
        if delta == 0.0 {
            return Ok(lam);
        }
        if delta.is_finite() {
            let rho = if delta_prev.is_finite() && delta_prev > 0.0 {
                (delta / delta_prev).min(0.999)
            } else {
                0.999
            };
            if delta <= tol * lam.abs() * (1.0 - rho) {
                return Ok(lam);
            }
        }
        delta_prev = delta;
        lam_prev = lam;
    }
    if delta_prev <= tol * lam_prev.abs() {
        return Ok(lam_prev);
    }
    Err(Error::PowerIterationStalled {
        iterations: max_iter,
    })
}

/// Repeated squarings applied before power iteration on an explicit matrix.
const SQUARINGS: u32 = 40;

/// Largest eigenvalue of an explicit symmetric PSD matrix.
///
/// Power iteration runs on `M^(2^s)`, built by `s` normalized squarings, so
/// that eigenvalue ratios `r` become `r^(2^s)` and clustered top spectra
/// separate; the `2^s`-th root brings the estimate back.
pub fn dominant_eigenvalue_psd(m: &DMatrix<f64>) -> Result<f64> {
    let dim = m.nrows();
    if dim == 0 {
        return Ok(0.0);
    }
    let mut p = (m + m.transpose()) * 0.5;
    // log λ(M) = Σ_k 2^{-k} log c_k + 2^{-s} log λ(M_s)
    let mut log_lambda = 0.0;
    let mut weight = 1.0;
    for _ in 0..=SQUARINGS {
        let c = p.norm();
        if c == 0.0 {
            return Ok(0.0);
        }
        if !c.is_finite() {
            return Err(Error::NonFinite("power iteration".into()));
        }
        p /= c;
        log_lambda += weight * c.ln();
        if weight < 0.5f64.powi(SQUARINGS as i32) * 1.5 {
            break;
        }
        p = &p * &p;
        p = (&p + p.transpose()) * 0.5;
        weight *= 0.5;
    }
    let top = power_iteration_psd(dim, |v| Ok(&p * v), POWER_TOL, POWER_MAX_ITER)?;
    if top <= 0.0 {
        return Ok(0.0);
    }
    Ok((log_lambda + weight * top.ln()).exp())
}

/// Spectral norm `‖A‖₂` by power iteration on `AᵀA`.
pub fn operator_norm(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    let lam = dominant_eigenvalue_psd(&(a.transpose() * a))?;
    Ok(lam.max(0.0).sqrt())
}

/// `‖ε(εI + G)⁻¹π‖₂`, strictly below one whenever `G` is positive on `M`.
///
/// Since `π = B Bᵀ` with `Bᵀ` a coisometry, the norm equals that of the
/// `n × m` matrix `C = ε(εI + G)⁻¹B`; power iteration runs on `CᵀC`.
pub fn contraction_norm(g: &SymPosMatrix, eps: f64, p: &ProjectionSubspace) -> Result<f64> {
    check_eps(eps)?;
    check_dim("contraction_norm", g.dim(), p.ambient_dim())?;
    let m = p.rank();
    if m == 0 {
        return Ok(0.0);
    }
    let a = shifted(g, eps);
    let f = Factorization::new(&a)?;
    let mut c = DMatrix::zeros(g.dim(), m);
    for (j, col) in p.basis().column_iter().enumerate() {
        let x = f.solve(&a, &col.into_owned())? * eps;
        c.set_column(j, &x);
    }
    let ctc = c.transpose() * &c;
    let lam = dominant_eigenvalue_psd(&ctc)?;
    Ok(lam.max(0.0).sqrt())
}

/// `‖x_left − x_right‖ / ‖h‖` for the two sides of the factorization identity
/// `(ε(I−π)+G)⁻¹ = (I − ε(εI+G)⁻¹π)⁻¹ (εI+G)⁻¹`.
///
/// The left side goes through [`resolvent_like_apply`]; the right side is
/// assembled with independent pivoted LU solves.
pub fn factorization_residual(
    g: &SymPosMatrix,
    eps: f64,
    p: &ProjectionSubspace,
    h: &DVector<f64>,
) -> Result<f64> {
    let x_left = resolvent_like_apply(g, eps, p, h)?;
    let n = g.dim();
    let a = shifted(g, eps);
    let lu = a.clone().lu();
    let solve = |m: &DMatrix<f64>, f: &LU<f64, Dyn, Dyn>, b: &DVector<f64>| lu_refined(m, f, b);
    let y = solve(&a, &lu, h)?;
    let x_right = if p.rank() == 0 {
        y
    } else {
        let mut r_basis = DMatrix::zeros(n, p.rank());
        for (j, col) in p.basis().column_iter().enumerate() {
            r_basis.set_column(j, &solve(&a, &lu, &col.into_owned())?);
        }
        let k = DMatrix::<f64>::identity(n, n) - r_basis * p.basis().transpose() * eps;
        let k_lu = k.clone().lu();
        solve(&k, &k_lu, &y)?
    };
    let hn = h.norm();
    if hn == 0.0 {
        return Ok((x_left - x_right).norm());
    }
    Ok((x_left - x_right).norm() / hn)
}

/// One row of a vanishing sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct VanishingRow {
    pub eps: f64,
    /// `‖ε(εI+G)⁻¹π‖`
    pub contraction: f64,
    /// `‖ε(εI+G)⁻¹h‖`
    pub resolvent: f64,
    /// `‖ε(ε(I−π)+G)⁻¹h‖`
    pub resolvent_like: f64,
}

/// Tabulates the three vanishing quantities over an ε-grid.
pub fn vanishing_sweep(
    g: &SymPosMatrix,
    p: &ProjectionSubspace,
    grid: &EpsGrid,
    h: &DVector<f64>,
) -> Result<Vec<VanishingRow>> {
    grid.values()
        .iter()
        .map(|&eps| {
            Ok(VanishingRow {
                eps,
                contraction: contraction_norm(g, eps, p)?,
                resolvent: resolvent_apply(g, eps, h)?.norm() * eps,
                resolvent_like: resolvent_like_apply(g, eps, p, h)?.norm() * eps,
            })
        })
        .collect()
}
