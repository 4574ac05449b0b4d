//! Independent oracles and seeded fixtures shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use fapc_core::linops::ProjectionSubspace;
use fapc_core::spectral::{ControlOperator, HeatModel};
use fapc_core::steering::SteeringProblem;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let v = gaussian_vector(rng, n);
    &v / v.norm()
}

pub fn random_orthonormal(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    a.qr().q().columns(0, m).into_owned()
}

/// `Q diag(λ) Qᵀ` with eigenvalues log-spaced over `[lo, hi]`.
pub fn spd_with_spectrum(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let q = random_orthonormal(rng, n, n);
    let lam = DVector::from_fn(n, |i, _| {
        if n == 1 {
            hi
        } else {
            lo * (hi / lo).powf(i as f64 / (n - 1) as f64)
        }
    });
    let m = &q * DMatrix::from_diagonal(&lam) * q.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn random_subspace(rng: &mut ChaCha8Rng, n: usize, m: usize) -> ProjectionSubspace {
    let basis = random_orthonormal(rng, n, m);
    // QR columns are orthonormal to rounding; re-orthonormalize so the
    // 1e-12 validation never trips on large n.
    let basis = basis.qr().q().columns(0, m).into_owned();
    ProjectionSubspace::new(basis).expect("orthonormal basis")
}

/// Composite Simpson rule with `n` (even) subintervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// Composite trapezoid rule with `n` subintervals.
pub fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..n {
        s += f(a + i as f64 * h);
    }
    s * h
}

/// Adaptive Dormand–Prince 5(4) integration of `y' = f(t, y)` from `t0` to `t1`.
pub fn dopri<F>(f: F, t0: f64, t1: f64, y0: &DVector<f64>, rtol: f64, atol: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let mut t = t0;
    let mut y = y0.clone();
    let mut h = (t1 - t0) * 1e-4;
    while t < t1 {
        if t + h > t1 {
            h = t1 - t;
        }
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        for s in 0..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate() {
                if A[s][j] != 0.0 {
                    ys += kj * (h * A[s][j]);
                }
            }
            k.push(f(t + C[s] * h, &ys));
        }
        let mut y5 = y.clone();
        let mut y4 = y.clone();
        for s in 0..7 {
            y5 += &k[s] * (h * B5[s]);
            y4 += &k[s] * (h * B4[s]);
        }
        let err = (0..y.len())
            .map(|i| {
                let sc = atol + rtol * y[i].abs().max(y5[i].abs());
                ((y5[i] - y4[i]) / sc).powi(2)
            })
            .sum::<f64>()
            / y.len() as f64;
        let err = err.sqrt();
        if err <= 1.0 {
            t += h;
            y = y5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    y
}

/// `∫_a^b e_m e_n dθ` by composite Simpson.
pub fn distributed_entry_quadrature(a: f64, b: f64, m: usize, n: usize, points: usize) -> f64 {
    let e = |k: usize, th: f64| (2.0 / PI).sqrt() * (k as f64 * th).sin();
    simpson(|th| e(m, th) * e(n, th), a, b, points)
}

/// Multiplication by `sin θ` in the sine basis, in closed form.
pub fn sin_multiplication_matrix(n: usize) -> DMatrix<f64> {
    // ∫₀^π sin θ cos(kθ) dθ = (1 + (−1)^k)/(1 − k²) for |k| ≠ 1, and 0 for |k| = 1.
    let c = |k: i64| -> f64 {
        if k.abs() == 1 {
            0.0
        } else {
            let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            (1.0 + sign) / (1.0 - (k * k) as f64)
        }
    };
    DMatrix::from_fn(n, n, |i, j| {
        let (m, k) = ((i + 1) as i64, (j + 1) as i64);
        (c(m - k) - c(m + k)) / PI
    })
}

pub const EXAMPLE1_CONTROL: ControlOperator = ControlOperator::Distributed { a: 0.3, b: 2.8 };

pub fn example2_control() -> ControlOperator {
    ControlOperator::Lumped {
        alpha1: 1.0,
        alpha2: 2f64.sqrt(),
    }
}

/// Smooth seeded states with decaying mode coefficients.
pub fn seeded_states(seed: u64, n: usize) -> (DVector<f64>, DVector<f64>) {
    let mut r = rng(seed);
    let y0 = DVector::from_fn(n, |i, _| r.sample::<f64, _>(StandardNormal) / (1 + i) as f64);
    let yf = DVector::from_fn(n, |i, _| r.sample::<f64, _>(StandardNormal) / ((1 + i) * (1 + i)) as f64);
    (y0, yf)
}

pub fn heat_problem(
    n: usize,
    control: ControlOperator,
    horizon: f64,
    m: usize,
    eps: f64,
    seed: u64,
) -> SteeringProblem {
    let (y0, yf) = seeded_states(seed, n);
    SteeringProblem::with_closed_form(
        HeatModel::new(n).unwrap(),
        control,
        horizon,
        eps,
        ProjectionSubspace::leading_modes(n, m).unwrap(),
        y0,
        yf,
    )
    .unwrap()
}

/// Real roots of the monic cubic `x³ + a x² + b x + c` with three real roots
/// (trigonometric method).
pub fn cubic_real_roots(a: f64, b: f64, c: f64) -> [f64; 3] {
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let r = (-p / 3.0).max(0.0).sqrt();
    let arg = if r == 0.0 { 0.0 } else { (3.0 * q / (2.0 * p * r)).clamp(-1.0, 1.0) };
    let phi = arg.acos() / 3.0;
    let mut roots = [0.0; 3];
    for (k, root) in roots.iter_mut().enumerate() {
        *root = 2.0 * r * (phi - 2.0 * PI * k as f64 / 3.0).cos() - a / 3.0;
    }
    roots
}
