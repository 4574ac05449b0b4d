mod common;

use std::f64::consts::PI;

use common::*;
use fapc_core::evolution::*;
use fapc_core::spectral::{gramian_closed_form, ControlOperator, HeatModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn sin_field(grid: TimeGrid, n: usize, scale: f64, omega: f64) -> PerturbationField {
    let s = sin_multiplication_matrix(n);
    let bound = scale * s.clone().svd(false, false).singular_values.max();
    PerturbationField::from_fn(grid, bound, |t| &s * (scale * (omega * t).cos())).unwrap()
}

/// `Y(T)` for `Y' = (A + G(t))Y`, `Y(0) = I`, column by column.
fn ode_propagator(n: usize, scale: f64, omega: f64, horizon: f64) -> DMatrix<f64> {
    let model = HeatModel::new(n).unwrap();
    let lam = model.eigenvalues();
    let s = sin_multiplication_matrix(n);
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let e = DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
        let col = dopri(
            |t, y| {
                let mut dy = &s * y * (scale * (omega * t).cos());
                for i in 0..n {
                    dy[i] -= lam[i] * y[i];
                }
                dy
            },
            0.0,
            horizon,
            &e,
            1e-12,
            1e-14,
        );
        out.set_column(j, &col);
    }
    out
}

fn seeded_field(seed: u64, grid: TimeGrid, n: usize, bound: f64) -> PerturbationField {
    let mut r = rng(seed);
    let a = spd_with_spectrum(&mut r, n, 0.1, 1.0) * (0.5 * bound);
    let b = random_orthonormal(&mut r, n, n) * (0.5 * bound);
    PerturbationField::from_fn(grid, bound, |t| &a * t.sin() + &b * (2.0 * t).cos()).unwrap()
}

#[test]
fn zero_field_reproduces_the_semigroup() {
    let model = HeatModel::new(8).unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let stack = build_transition_stack(&model, &PerturbationField::zero(grid, 8)).unwrap();
    let x = gaussian_vector(&mut rng(1), 8);
    let y = evolution_apply(&stack, 0, 100, &x).unwrap();
    assert!((y - model.semigroup_apply(1.0, &x).unwrap()).norm() <= 1e-13);
    for k in [0, 33, 100] {
        let eta = gaussian_vector(&mut rng(k as u64), 8);
        let expected = model.semigroup_diagonal(1.0 - grid.node(k)).component_mul(&eta);
        assert!((adjoint_terminal_apply(&stack, k, &eta).unwrap() - expected).norm() <= 1e-13);
    }
}

#[test]
fn constant_scalar_field_is_exact() {
    let model = HeatModel::new(6).unwrap();
    let grid = TimeGrid::new(0.8, 40).unwrap();
    let c: f64 = -1.3;
    let field = PerturbationField::from_fn(grid, c.abs(), |_| DMatrix::identity(6, 6) * c).unwrap();
    let stack = build_transition_stack(&model, &field).unwrap();
    for k in 0..=40 {
        let t = grid.node(k);
        let expected = DMatrix::from_diagonal(&model.semigroup_diagonal(t)) * (c * t).exp();
        assert!((stack.forward(k) - expected).amax() <= 1e-10);
    }
}

#[test]
fn sin_multiplication_field_matches_ode_oracle() {
    let model = HeatModel::new(8).unwrap();
    let oracle = ode_propagator(8, 0.3, 0.0, 1.0);
    let err = |k: usize| {
        let stack = build_transition_stack(&model, &sin_field(TimeGrid::new(1.0, k).unwrap(), 8, 0.3, 0.0)).unwrap();
        (stack.forward(k) - &oracle).norm()
    };
    let (e1, e2) = (err(800), err(1600));
    assert!(e1 <= 1e-6, "{e1:e}");
    assert!((3.5..=4.5).contains(&(e1 / e2)), "ratio {}", e1 / e2);
}

#[test]
fn time_varying_field_is_second_order() {
    let model = HeatModel::new(8).unwrap();
    let oracle = ode_propagator(8, 0.8, 3.0, 1.0);
    let err = |k: usize| {
        let stack = build_transition_stack(&model, &sin_field(TimeGrid::new(1.0, k).unwrap(), 8, 0.8, 3.0)).unwrap();
        (stack.forward(k) - &oracle).norm()
    };
    let ratio = err(200) / err(400);
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn apply_edge_cases() {
    let model = HeatModel::new(4).unwrap();
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let stack = build_transition_stack(&model, &seeded_field(3, grid, 4, 0.5)).unwrap();
    let x = gaussian_vector(&mut rng(2), 4);
    assert_eq!(evolution_apply(&stack, 4, 4, &x).unwrap(), x);
    assert_eq!(adjoint_terminal_apply(&stack, 10, &x).unwrap(), x);
    assert!(evolution_apply(&stack, 5, 4, &x).is_err());
    assert!(evolution_apply(&stack, 0, 11, &x).is_err());
    assert!(adjoint_terminal_apply(&stack, 11, &x).is_err());
    assert!(evolution_apply(&stack, 0, 1, &DVector::zeros(3)).is_err());
}

#[test]
fn field_bound_is_enforced() {
    let grid = TimeGrid::new(1.0, 4).unwrap();
    assert!(PerturbationField::from_fn(grid, 0.5, |_| DMatrix::identity(3, 3)).is_err());
    assert!(PerturbationField::from_fn(grid, 1.0, |_| DMatrix::identity(3, 3)).is_ok());
}

#[test]
fn norm_bound_respects_gronwall() {
    let model = HeatModel::new(10).unwrap();
    for (seed, bound) in [(1, 0.2), (2, 1.0), (3, 3.0)] {
        let grid = TimeGrid::new(1.5, 300).unwrap();
        let stack = build_transition_stack(&model, &seeded_field(seed, grid, 10, bound)).unwrap();
        assert!(stack.norm_bound() <= (bound * 1.5f64).exp() * (1.0 + 1e-6));
        assert!(stack.cocycle_defect() <= 1e-10);
    }
}

#[test]
fn zero_field_gramian_matches_closed_form() {
    let model = HeatModel::new(8).unwrap();
    let grid = TimeGrid::new(1.0, 2000).unwrap();
    let stack = build_transition_stack(&model, &PerturbationField::zero(grid, 8)).unwrap();
    for ctrl in [EXAMPLE1_CONTROL, example2_control()] {
        let tv = gramian_time_varying(&stack, &ctrl).unwrap();
        let closed = gramian_closed_form(&model, &ctrl, 1.0).unwrap();
        let rel = (tv.matrix.matrix() - closed.matrix.matrix()).norm() / closed.matrix.matrix().norm();
        assert!(rel <= 1e-5, "{rel:e}");
    }
    let zero = gramian_time_varying(&stack, &ControlOperator::FullMatrix(DMatrix::zeros(8, 2))).unwrap();
    assert_eq!(zero.matrix.matrix().amax(), 0.0);
}

#[test]
fn gramian_is_lipschitz_in_the_field() {
    let model = HeatModel::new(8).unwrap();
    let grid = TimeGrid::new(1.0, 400).unwrap();
    let base = seeded_field(5, grid, 8, 1.0);
    let delta = random_orthonormal(&mut rng(6), 8, 8) * 1e-6;
    let shifted: Vec<_> = base.matrices().iter().map(|g| g + &delta).collect();
    let pert = PerturbationField::new(grid, shifted, 1.0 + 1e-6).unwrap();
    let g0 = gramian_time_varying(&build_transition_stack(&model, &base).unwrap(), &EXAMPLE1_CONTROL).unwrap();
    let g1 = gramian_time_varying(&build_transition_stack(&model, &pert).unwrap(), &EXAMPLE1_CONTROL).unwrap();
    let ratio = (g1.matrix.matrix() - g0.matrix.matrix()).norm() / 1e-6;
    assert!(ratio.is_finite() && ratio < 10.0, "C = {ratio}");
}

#[test]
fn distributed_full_interval_field_commutes() {
    // B = I on (0, π) with G ≡ 0: the Gramian stays diagonal
    let model = HeatModel::new(4).unwrap();
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let stack = build_transition_stack(&model, &PerturbationField::zero(grid, 4)).unwrap();
    let g = gramian_time_varying(&stack, &ControlOperator::Distributed { a: 0.0, b: PI }).unwrap();
    let off = g.matrix.matrix() - DMatrix::from_diagonal(&g.matrix.matrix().diagonal());
    assert!(off.amax() <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cocycle_holds_for_all_splits(seed in any::<u64>(), i in 0usize..=60, j in 0usize..=60, k in 0usize..=60) {
        let mut idx = [i, j, k];
        idx.sort();
        let model = HeatModel::new(6).unwrap();
        let grid = TimeGrid::new(1.0, 60).unwrap();
        let stack = build_transition_stack(&model, &seeded_field(seed, grid, 6, 1.5)).unwrap();
        let x = gaussian_vector(&mut rng(seed ^ 1), 6);
        let mid = evolution_apply(&stack, idx[0], idx[1], &x).unwrap();
        let two = evolution_apply(&stack, idx[1], idx[2], &mid).unwrap();
        let one = evolution_apply(&stack, idx[0], idx[2], &x).unwrap();
        prop_assert!((two - one).norm() <= 1e-10 * (1.0 + x.norm()));
        let full = evolution_apply(&stack, 0, 60, &x).unwrap();
        prop_assert!((full - stack.forward(60) * &x).norm() <= 1e-10 * (1.0 + x.norm()));
    }

    #[test]
    fn adjoint_is_the_transpose(seed in any::<u64>(), k in 0usize..=30) {
        let model = HeatModel::new(7).unwrap();
        let grid = TimeGrid::new(1.0, 30).unwrap();
        let stack = build_transition_stack(&model, &seeded_field(seed, grid, 7, 2.0)).unwrap();
        let mut r = rng(seed.wrapping_add(9));
        let x = gaussian_vector(&mut r, 7);
        let y = gaussian_vector(&mut r, 7);
        let lhs = (stack.terminal(k) * &x).dot(&y);
        let rhs = x.dot(&adjoint_terminal_apply(&stack, k, &y).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + x.norm() * y.norm()));
    }

    #[test]
    fn time_varying_gramian_is_psd(seed in any::<u64>()) {
        let model = HeatModel::new(6).unwrap();
        let grid = TimeGrid::new(1.0, 40).unwrap();
        let stack = build_transition_stack(&model, &seeded_field(seed, grid, 6, 1.0)).unwrap();
        let g = gramian_time_varying(&stack, &example2_control()).unwrap();
        prop_assert!(fapc_core::linops::check_psd(g.matrix.matrix()).is_ok());
    }
}
