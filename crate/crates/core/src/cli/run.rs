//! Subcommand drivers. Each returns the CSV text, a human-readable report
//! and an exit code; file I/O is left to the caller.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::config::{ConfigError, RunConfig};
use super::report::{checks_to_csv, rows_to_csv, sort_rows, CheckRow, CheckStatus, ReportRow};
use crate::evolution::TimeGrid;
use crate::linops::{
    self, ProjectionSubspace, SymPosMatrix, DELTA_FLOOR, PSD_TOL, SYMMETRY_TOL,
};
use crate::semilinear::{fixed_point_solve, CollocationMap, FixedPointReport, SemilinearProblem};
use crate::spectral::{gramian_closed_form, gramian_quadrature, Gramian, GramianProvenance};
use crate::steering::{SteeringProblem, SteeringResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

/// Test vectors drawn per ε for the verify suite.
const VERIFY_SAMPLES: usize = 5;
/// Bound slack for the coercivity check.
const COERCIVITY_SLACK: f64 = 1e-8;
/// Factorization identity tolerance.
const FACTORIZATION_TOL: f64 = 1e-9;
/// Strict contraction margin, enforced when `δ` exceeds [`CONTRACTION_DELTA_MIN`].
const CONTRACTION_MARGIN: f64 = 1e-12;
const CONTRACTION_DELTA_MIN: f64 = 1e-10;
/// Relative slack for monotonicity in the vanishing sweep.
const MONOTONE_SLACK: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] crate::Error),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Usage(String),
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Fill the `wall_time_ms` column; off by default so CSVs are reproducible.
    pub timing: bool,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub csv: String,
    pub report: String,
    /// Name of the first failing check, for `verify`.
    pub failure: Option<String>,
}

fn elapsed_ms(start: Instant, opts: RunOptions) -> f64 {
    if opts.timing {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    }
}

fn configured_gramian(cfg: &RunConfig) -> Result<Gramian, CliError> {
    let horizon = cfg.model.horizon;
    match cfg.gramian_override()? {
        Some(m) => Ok(Gramian {
            matrix: SymPosMatrix::new(m)?,
            horizon,
            provenance: GramianProvenance::Supplied,
        }),
        None => Ok(gramian_closed_form(&cfg.model(), &cfg.control_operator()?, horizon)?),
    }
}

fn linear_problem(cfg: &RunConfig, gramian: Gramian) -> Result<SteeringProblem, CliError> {
    let model = cfg.model();
    let y0 = cfg.y0();
    let yf = cfg
        .yf()
        .unwrap_or_else(|| model.semigroup_apply(cfg.model.horizon, &y0).expect("dims match"));
    Ok(SteeringProblem::new(
        model,
        cfg.control_operator()?,
        gramian,
        cfg.model.horizon,
        cfg.eps_grid().values()[0],
        cfg.projection()?,
        y0,
        yf,
    )?)
}

fn semilinear_problem(cfg: &RunConfig) -> Result<SemilinearProblem, CliError> {
    let (Some(nl), Some(iteration)) = (cfg.nonlinearity(), cfg.iteration()) else {
        return Err(CliError::Usage("config has no `semilinear` section".into()));
    };
    let model = cfg.model();
    let mut base = linear_problem(cfg, gramian_closed_form(&model, &cfg.control_operator()?, cfg.model.horizon)?)?;
    let free_target = cfg.yf().is_none();
    let grid = TimeGrid::new(cfg.model.horizon, cfg.time_grid.steps)?;
    let colloc = CollocationMap::for_modes(model.n_modes())?;
    let mut problem = SemilinearProblem::new(base.clone(), nl, colloc, grid, iteration)?;
    if free_target {
        base.yf = problem.free_trajectory()?.terminal().clone();
        problem.base = base;
    }
    Ok(problem)
}

fn steering_row(scenario: &str, r: &SteeringResult, wall_time_ms: f64) -> ReportRow {
    ReportRow {
        scenario: scenario.into(),
        eps: r.eps,
        terminal_error: r.error_norm,
        projection_residual: r.projection_residual,
        predicted_error: r.predicted_error.norm(),
        control_energy: r.control_energy,
        delta: r.delta,
        gamma_hat: r.gamma_hat,
        iterations: 0,
        converged: true,
        wall_time_ms,
    }
}

fn semilinear_row(scenario: &str, r: &FixedPointReport, wall_time_ms: f64) -> ReportRow {
    ReportRow {
        scenario: scenario.into(),
        eps: r.eps,
        terminal_error: r.terminal_error_norm,
        projection_residual: r.projection_residual,
        predicted_error: r.predicted_error_norm,
        control_energy: r.control_energy,
        delta: r.delta,
        gamma_hat: r.gamma_hat,
        iterations: r.iterations,
        converged: r.converged,
        wall_time_ms,
    }
}

fn header(cfg: &RunConfig, command: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "fapc {command}");
    let _ = writeln!(
        s,
        "model: N = {}, T = {}; control: {:?}; projection rank: {}",
        cfg.model.n_modes,
        cfg.model.horizon,
        cfg.control_operator().ok(),
        cfg.projection().map(|p| p.rank()).unwrap_or(0)
    );
    let _ = writeln!(s, "epsilons: {:?}; seed: {}", cfg.eps_grid().values(), cfg.seed);
    s
}

fn linear_rows(
    scenario: &str,
    base: &SteeringProblem,
    cfg: &RunConfig,
    opts: RunOptions,
) -> Result<Vec<(ReportRow, SteeringResult)>, CliError> {
    let samples = cfg.time_grid.steps + 1;
    cfg.eps_grid()
        .values()
        .par_iter()
        .map(|&eps| {
            let start = Instant::now();
            let r = base.with_eps(eps)?.steer(samples)?;
            Ok((steering_row(scenario, &r, elapsed_ms(start, opts)), r))
        })
        .collect()
}

fn semilinear_rows(
    scenario: &str,
    template: &SemilinearProblem,
    cfg: &RunConfig,
    opts: RunOptions,
) -> Result<Vec<(ReportRow, FixedPointReport)>, CliError> {
    cfg.eps_grid()
        .values()
        .par_iter()
        .map(|&eps| {
            let start = Instant::now();
            let r = fixed_point_solve(&template.with_eps(eps)?)?;
            Ok((semilinear_row(scenario, &r, elapsed_ms(start, opts)), r))
        })
        .collect()
}

fn describe_linear(report: &mut String, scenario: &str, rows: &[(ReportRow, SteeringResult)]) {
    for (row, r) in rows {
        let max_u = r
            .control_samples
            .iter()
            .map(|(_, u)| u.norm())
            .fold(0.0, f64::max);
        let _ = writeln!(
            report,
            "[{scenario}] eps = {:e}: |y(T) - yf| = {:e}, |pi(y(T) - yf)| = {:e}, energy = {:e}, max |u| = {:e}, gamma = {:.6}",
            row.eps, row.terminal_error, row.projection_residual, row.control_energy, max_u, row.gamma_hat
        );
    }
}

fn describe_semilinear(report: &mut String, scenario: &str, rows: &[(ReportRow, FixedPointReport)]) {
    for (_, r) in rows {
        let _ = writeln!(
            report,
            "[{scenario}] eps = {:e}: converged = {}, iterations = {}, |y(T) - yf| = {:e}, identity residual = {:e}",
            r.eps, r.converged, r.iterations, r.terminal_error_norm, r.terminal_identity_residual
        );
        let _ = writeln!(report, "  residuals: {:?}", r.residual_history);
        let _ = writeln!(report, "  relaxation: {:?}", r.relaxation_history);
        let _ = writeln!(
            report,
            "  gamma_hat max = {:.6}, max |u| = {:e}, control bound = {:e}, bound violations at nodes {:?}",
            r.gamma_hat_max, r.max_control, r.control_bound, r.bound_violations
        );
    }
}

fn finish(mut rows: Vec<ReportRow>, report: String, any_unconverged: bool) -> Result<Outcome, CliError> {
    sort_rows(&mut rows);
    Ok(Outcome {
        exit_code: if any_unconverged { EXIT_PARTIAL } else { EXIT_OK },
        csv: rows_to_csv(&rows)?,
        report,
        failure: None,
    })
}

/// Linear steering, one row per ε.
pub fn run_steer(cfg: &RunConfig, opts: RunOptions) -> Result<Outcome, CliError> {
    let base = linear_problem(cfg, configured_gramian(cfg)?)?;
    let rows = linear_rows("linear", &base, cfg, opts)?;
    let mut report = header(cfg, "steer");
    describe_linear(&mut report, "linear", &rows);
    finish(rows.into_iter().map(|(r, _)| r).collect(), report, false)
}

/// Semilinear steering by damped Picard iteration, one row per ε.
pub fn run_semilinear(cfg: &RunConfig, opts: RunOptions) -> Result<Outcome, CliError> {
    let template = semilinear_problem(cfg)?;
    let rows = semilinear_rows("semilinear", &template, cfg, opts)?;
    let mut report = header(cfg, "semilinear");
    describe_semilinear(&mut report, "semilinear", &rows);
    let unconverged = rows.iter().any(|(r, _)| !r.converged);
    finish(rows.into_iter().map(|(r, _)| r).collect(), report, unconverged)
}

/// Linear steering with the configured and the quadrature Gramian, plus the
/// semilinear study when configured.
pub fn run_sweep(cfg: &RunConfig, opts: RunOptions) -> Result<Outcome, CliError> {
    let model = cfg.model();
    let control = cfg.control_operator()?;
    let configured = linear_problem(cfg, configured_gramian(cfg)?)?;
    let quadrature = linear_problem(
        cfg,
        gramian_quadrature(&model, &control, cfg.model.horizon, cfg.time_grid.steps)?,
    )?;
    let semilinear = cfg.semilinear.as_ref().map(|_| semilinear_problem(cfg)).transpose()?;

    let ((lin, quad), semi) = rayon::join(
        || {
            rayon::join(
                || linear_rows("linear", &configured, cfg, opts),
                || linear_rows("linear-quadrature", &quadrature, cfg, opts),
            )
        },
        || semilinear.as_ref().map(|p| semilinear_rows("semilinear", p, cfg, opts)).transpose(),
    );
    let (lin, quad, semi) = (lin?, quad?, semi?);

    let mut report = header(cfg, "sweep");
    describe_linear(&mut report, "linear", &lin);
    describe_linear(&mut report, "linear-quadrature", &quad);
    let mut unconverged = false;
    let mut rows: Vec<ReportRow> = lin.into_iter().chain(quad).map(|(r, _)| r).collect();
    if let Some(semi) = semi {
        describe_semilinear(&mut report, "semilinear", &semi);
        unconverged = semi.iter().any(|(r, _)| !r.converged);
        rows.extend(semi.into_iter().map(|(r, _)| r));
    }
    finish(rows, report, unconverged)
}

struct Checks {
    rows: Vec<CheckRow>,
}

impl Checks {
    fn push(&mut self, check: &'static str, eps: Option<f64>, value: Option<f64>, bound: Option<f64>, ok: bool) {
        let status = if ok { CheckStatus::Pass } else { CheckStatus::Fail };
        self.rows.push(CheckRow {
            check,
            eps,
            value,
            bound,
            status,
        });
    }

    fn vacuous(&mut self, check: &'static str, eps: Option<f64>) {
        self.rows.push(CheckRow {
            check,
            eps,
            value: None,
            bound: None,
            status: CheckStatus::Vacuous,
        });
    }

    fn first_failure(&self) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.status == CheckStatus::Fail)
    }
}

fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).amax() / scale
}

/// Invariant suite on the configured Gramian.
pub fn run_verify(cfg: &RunConfig, _opts: RunOptions) -> Result<Outcome, CliError> {
    let raw = match cfg.gramian_override()? {
        Some(m) => m,
        None => gramian_closed_form(&cfg.model(), &cfg.control_operator()?, cfg.model.horizon)?
            .matrix
            .into_matrix(),
    };
    let p = cfg.projection()?;
    let mut checks = Checks { rows: Vec::new() };
    let proceed = structural_checks(&mut checks, &raw);
    if proceed {
        operator_checks(&mut checks, cfg, SymPosMatrix::new(raw)?, &p)?;
    }

    let mut report = header(cfg, "verify");
    for r in &checks.rows {
        let _ = writeln!(
            report,
            "{:<14} eps = {:<10} value = {:<24} bound = {:<24} {}",
            r.check,
            r.eps.map(|e| format!("{e:e}")).unwrap_or_else(|| "-".into()),
            r.value.map(|v| format!("{v:e}")).unwrap_or_else(|| "-".into()),
            r.bound.map(|v| format!("{v:e}")).unwrap_or_else(|| "-".into()),
            r.status.as_str()
        );
    }
    let failure = checks.first_failure().map(|r| r.check.to_string());
    Ok(Outcome {
        exit_code: if failure.is_some() { EXIT_FAILURE } else { EXIT_OK },
        csv: checks_to_csv(&checks.rows)?,
        report,
        failure,
    })
}

/// Symmetry and positive semidefiniteness; later checks need both.
fn structural_checks(checks: &mut Checks, raw: &DMatrix<f64>) -> bool {
    let asym = asymmetry(raw);
    let symmetric = asym <= SYMMETRY_TOL;
    checks.push("symmetry", None, Some(asym), Some(SYMMETRY_TOL), symmetric);
    if !symmetric {
        return false;
    }
    let sym = (raw + raw.transpose()) * 0.5;
    let scale = raw.amax().max(f64::MIN_POSITIVE);
    let lam_min = SymmetricEigen::new(sym).eigenvalues.min();
    let psd = lam_min >= -PSD_TOL * scale;
    checks.push("psd", None, Some(lam_min), Some(-PSD_TOL * scale), psd);
    psd
}

fn operator_checks(
    checks: &mut Checks,
    cfg: &RunConfig,
    g: SymPosMatrix,
    p: &ProjectionSubspace,
) -> Result<(), CliError> {
    let n = g.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples: Vec<DVector<f64>> = (0..VERIFY_SAMPLES)
        .map(|_| DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng)))
        .collect();

    let delta = if p.rank() == 0 {
        checks.vacuous("delta", None);
        None
    } else {
        let d = linops::delta_coercivity(&g, p)?;
        checks.push("delta", None, Some(d), Some(DELTA_FLOOR), d > DELTA_FLOOR);
        Some(d)
    };
    let coercive = delta.is_none_or(|d| d > DELTA_FLOOR);

    let grid = cfg.eps_grid();
    for &eps in grid.values() {
        let gamma = linops::contraction_norm(&g, eps, p)?;
        let bound = 1.0 - CONTRACTION_MARGIN;
        if delta.is_some_and(|d| d <= CONTRACTION_DELTA_MIN) {
            checks.push("contraction", Some(eps), Some(gamma), Some(1.0), gamma <= 1.0);
        } else {
            checks.push("contraction", Some(eps), Some(gamma), Some(bound), gamma < bound);
        }

        if !coercive {
            checks.push("factorization", Some(eps), None, Some(FACTORIZATION_TOL), false);
            continue;
        }
        let mut worst = 0.0f64;
        for h in &samples {
            worst = worst.max(linops::factorization_residual(&g, eps, p, h)?);
        }
        checks.push(
            "factorization",
            Some(eps),
            Some(worst),
            Some(FACTORIZATION_TOL),
            worst <= FACTORIZATION_TOL,
        );

        match delta {
            None => checks.vacuous("coercivity", Some(eps)),
            Some(d) => {
                // ‖(ε(I−π)+G)⁻¹h‖·min(ε,δ)/‖h‖ ≤ 1
                let scale = eps.min(d);
                let mut worst = 0.0f64;
                for h in &samples {
                    let x = linops::resolvent_like_apply(&g, eps, p, h)?;
                    worst = worst.max(x.norm() * scale / h.norm());
                }
                let bound = 1.0 + COERCIVITY_SLACK;
                checks.push("coercivity", Some(eps), Some(worst), Some(bound), worst <= bound);
            }
        }
    }

    if grid.values().len() < 2 || !coercive {
        checks.vacuous("vanishing", None);
        return Ok(());
    }
    let sweep = linops::vanishing_sweep(&g, p, &grid, &samples[0])?;
    let mut worst = 0.0f64;
    for w in sweep.windows(2) {
        for (prev, next) in [
            (w[0].contraction, w[1].contraction),
            (w[0].resolvent, w[1].resolvent),
            (w[0].resolvent_like, w[1].resolvent_like),
        ] {
            if prev > 0.0 {
                worst = worst.max(next / prev);
            } else if next > 0.0 {
                worst = f64::INFINITY;
            }
        }
    }
    let bound = 1.0 + MONOTONE_SLACK;
    checks.push("vanishing", None, Some(worst), Some(bound), worst <= bound);
    Ok(())
}
