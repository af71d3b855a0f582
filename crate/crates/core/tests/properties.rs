use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use proptest::prelude::*;

use periparab::basis::{solve_operator_eigenproblem, EigenBasis, OperatorSpec, SpatialGrid};
use periparab::galerkin::{Forcing, GalerkinSystem, Perturbation, TimeGrid, TimeSpan};
use periparab::identify::{objective, solve_head_given_e, EParameterization, IdentificationProblem, ObservationWindow};
use periparab::periodic::{
    choose_k, solve_direct, solve_fixed_point, tail_monodromy_matrix, FixedPointOptions, SplitIndex,
};

fn variable_operator_basis(n_nodes: usize, n_modes: usize) -> (SpatialGrid, Arc<EigenBasis>, OperatorSpec) {
    let grid = SpatialGrid::new(1.0, n_nodes).unwrap();
    let op = OperatorSpec::from_fns(
        &grid,
        |x| 1.0 + 0.3 * x,
        |x| 0.5 * (PI * x).sin(),
        |x| -20.0 + 2.0 * x,
    );
    let basis = solve_operator_eigenproblem(&op, &grid, n_modes).unwrap();
    (grid, Arc::new(basis), op)
}

fn wavy_e(grid: &SpatialGrid, tg: &TimeGrid) -> Perturbation {
    let horizon = tg.horizon();
    Perturbation::from_fn(
        |x, t| 0.5 + 0.4 * (2.0 * PI * t / horizon).sin() * (PI * x).cos(),
        grid,
        tg,
        2.0,
        1.0,
    )
    .unwrap()
}

fn smooth_forcing(grid: &SpatialGrid, tg: &TimeGrid, scale: f64) -> Forcing {
    Forcing::from_fn(
        |x, t| scale * ((PI * x).sin() * (1.0 + 3.0 * t) + x * (1.0 - x) * (5.0 * t).cos()),
        grid,
        tg,
    )
    .unwrap()
}

#[test]
fn rayleigh_quotients_reproduce_eigenvalues() {
    let (grid, basis, op) = variable_operator_basis(301, 8);
    for j in 0..8 {
        let mode = basis.mode(j);
        let applied = op.apply(&grid, &mode).unwrap();
        let rq = grid.inner(&mode, &applied) / grid.inner(&mode, &mode);
        assert!((rq - basis.lambdas()[j]).abs() < 1e-9 * basis.lambdas()[j].abs().max(1.0));
    }
    assert!(basis.orthonormality_defect() < 1e-10);
}

#[test]
fn homogeneous_propagation_is_linear() {
    let (grid, basis, _) = variable_operator_basis(121, 10);
    let tg = Arc::new(TimeGrid::new(0.2, 100).unwrap());
    let e = wavy_e(&grid, &tg);
    let sys = GalerkinSystem::assemble(basis, &e, &Forcing::zero(&grid, &tg), tg.clone()).unwrap();
    let a = DVector::from_fn(10, |i, _| (i as f64 * 0.7).sin());
    let b = DVector::from_fn(10, |i, _| (i as f64 * 1.3).cos());
    let span = TimeSpan::full(&tg);
    let ua = sys.propagate_homogeneous(&a, span).unwrap().terminal();
    let ub = sys.propagate_homogeneous(&b, span).unwrap().terminal();
    let uab = sys.propagate_homogeneous(&(&a * 2.0 - &b * 3.0), span).unwrap().terminal();
    assert!((uab - (ua * 2.0 - ub * 3.0)).amax() < 1e-12);
}

#[test]
fn monodromy_columns_match_propagation() {
    let (grid, basis, _) = variable_operator_basis(121, 10);
    let tg = Arc::new(TimeGrid::new(0.2, 100).unwrap());
    let e = wavy_e(&grid, &tg);
    let sys = GalerkinSystem::assemble(basis, &e, &Forcing::zero(&grid, &tg), tg.clone()).unwrap();
    let split = SplitIndex::new(2, 10).unwrap();
    let j = tail_monodromy_matrix(&sys, split).unwrap();
    let mut v = DVector::zeros(10);
    let w = DVector::from_fn(8, |i, _| 1.0 / (1.0 + i as f64));
    v.rows_mut(2, 8).copy_from(&w);
    let end = sys.propagate_homogeneous(&v, TimeSpan::full(&tg)).unwrap().terminal();
    assert!((end.rows(2, 8) - &j * &w).amax() < 1e-13);
}

#[test]
fn solution_map_superposition() {
    let (grid, basis, _) = variable_operator_basis(121, 12);
    let tg = Arc::new(TimeGrid::new(0.3, 120).unwrap());
    let e = wavy_e(&grid, &tg);
    let f1 = smooth_forcing(&grid, &tg, 1.0);
    let f2 = Forcing::from_fn(|x, t| (3.0 * PI * x).sin() * t, &grid, &tg).unwrap();
    let f12 = Forcing::new(f1.values() + f2.values(), &grid, &tg).unwrap();
    let probe = GalerkinSystem::assemble(basis.clone(), &e, &f1, tg.clone()).unwrap();
    let split = choose_k(&probe, 0.75, 11, 1).unwrap();
    let h1 = DVector::from_element(split.k(), 0.2);
    let h2 = DVector::from_fn(split.k(), |i, _| -0.1 * i as f64);
    let solve = |f: &Forcing, h: &DVector<f64>| {
        let sys = GalerkinSystem::assemble(basis.clone(), &e, f, tg.clone()).unwrap();
        solve_direct(&sys, h, split).unwrap().trajectory.coeffs().clone()
    };
    let u1 = solve(&f1, &h1);
    let u2 = solve(&f2, &h2);
    let u12 = solve(&f12, &(&h1 + &h2));
    let scale = u12.amax().max(1.0);
    assert!((u12 - u1 - u2).amax() < 1e-9 * scale);
}

#[test]
fn fixed_point_converges_geometrically() {
    let (grid, basis, _) = variable_operator_basis(121, 12);
    let tg = Arc::new(TimeGrid::new(0.04, 80).unwrap());
    let e = wavy_e(&grid, &tg);
    let f = smooth_forcing(&grid, &tg, 1.0);
    let sys = GalerkinSystem::assemble(basis, &e, &f, tg).unwrap();
    let split = choose_k(&sys, 0.75, 11, 3).unwrap();
    let head = DVector::from_element(split.k(), 0.3);
    let sol = solve_fixed_point(&sys, &head, split, FixedPointOptions::default()).unwrap();
    assert!(sol.step_norms.len() > 3, "expected a nontrivial iteration");
    let mu = sol.mu.unwrap();
    for w in sol.step_norms.windows(2) {
        assert!(w[1] <= (mu + 0.05) * w[0]);
    }
    let direct = solve_direct(&sys, &head, split).unwrap();
    assert!((&sol.tail - &direct.tail).amax() < 1e-8);
}

/// Second order in time: errors at dt and dt/2 against a fine reference shrink by ~4.
#[test]
fn integrator_is_second_order() {
    let (grid, basis, _) = variable_operator_basis(81, 8);
    let horizon = 0.5;
    let initial = DVector::from_fn(8, |i, _| 1.0 / (1.0 + i as f64));
    let terminal = |n_steps: usize| {
        let tg = Arc::new(TimeGrid::new(horizon, n_steps).unwrap());
        let e = Perturbation::from_fn(
            |x, t| 0.8 * (4.0 * PI * t).sin() * (PI * x).cos() + 0.3,
            &grid,
            &tg,
            2.0,
            1.0,
        )
        .unwrap();
        let f = Forcing::from_fn(|x, t| (PI * x).sin() * (6.0 * t).cos(), &grid, &tg).unwrap();
        let sys = GalerkinSystem::assemble(basis.clone(), &e, &f, tg.clone()).unwrap();
        sys.advance(&initial, true).unwrap()
    };
    let reference = terminal(6400);
    let coarse = (terminal(200) - &reference).norm();
    let fine = (terminal(400) - &reference).norm();
    let ratio = coarse / fine;
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn head_is_stationary_for_the_window_misfit() {
    let (grid, basis, _) = variable_operator_basis(121, 10);
    let tg = Arc::new(TimeGrid::new(0.5, 100).unwrap());
    let e = wavy_e(&grid, &tg);
    let f = smooth_forcing(&grid, &tg, 1.0);
    let split = SplitIndex::new(2, 10).unwrap();
    let window = ObservationWindow::interval(&grid, 0.25, 0.6).unwrap();
    let target = nalgebra::DMatrix::from_fn(window.len(), tg.n_nodes(), |a, j| {
        (a as f64 * 0.1).sin() + 0.01 * j as f64
    });
    let prob = IdentificationProblem::new(
        basis,
        tg,
        f,
        split,
        window,
        target,
        2.0,
        1.0,
        EParameterization::new(1, 1).unwrap(),
    )
    .unwrap();
    let head = solve_head_given_e(&e, &prob).unwrap();
    let base = objective(&e, &head.a_star, &prob).unwrap();
    let h = 1e-4;
    for i in 0..2 {
        let mut up = head.a_star.clone();
        let mut down = head.a_star.clone();
        up[i] += h;
        down[i] -= h;
        let up = objective(&e, &up, &prob).unwrap();
        let down = objective(&e, &down, &prob).unwrap();
        assert!(up >= base && down >= base);
        let slope = (up - down) / (2.0 * h);
        let curvature = (up - 2.0 * base + down) / (h * h);
        assert!(slope.abs() < 1e-6 * curvature.max(1.0), "slope {slope}");
    }
}

#[test]
fn finer_truncation_settles() {
    // head trajectory changes less and less as modes are added
    let grid = SpatialGrid::new(1.0, 161).unwrap();
    let op = OperatorSpec::from_fns(&grid, |x| 1.0 + 0.3 * x, |_| 0.0, |_| -20.0);
    let tg = Arc::new(TimeGrid::new(0.2, 100).unwrap());
    let e = wavy_e(&grid, &tg);
    let f = smooth_forcing(&grid, &tg, 1.0);
    let head_traj = |n: usize| {
        let basis = Arc::new(solve_operator_eigenproblem(&op, &grid, n).unwrap());
        let sys = GalerkinSystem::assemble(basis, &e, &f, tg.clone()).unwrap();
        let split = SplitIndex::new(1, n).unwrap();
        let head = DVector::from_element(1, 0.5);
        solve_direct(&sys, &head, split).unwrap().trajectory.coeffs().rows(0, 1).into_owned()
    };
    let (t4, t8, t16) = (head_traj(4), head_traj(8), head_traj(16));
    let d1 = (&t4 - &t8).amax();
    let d2 = (&t8 - &t16).amax();
    assert!(d2 < d1, "{d1} then {d2}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn synthesize_then_project_is_identity(coeffs in prop::collection::vec(-10.0f64..10.0, 1..12)) {
        let grid = SpatialGrid::new(1.0, 101).unwrap();
        let basis = solve_operator_eigenproblem(&OperatorSpec::laplacian(&grid), &grid, 12).unwrap();
        let field = basis.synthesize(&coeffs).unwrap();
        let back = basis.project(&field).unwrap();
        for (j, b) in back.iter().enumerate() {
            let want = coeffs.get(j).copied().unwrap_or(0.0);
            prop_assert!((b - want).abs() < 1e-10);
        }
    }
}
