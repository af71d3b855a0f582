//! Energy diagnostics and field evaluation for computed solutions.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{validation, Result};
use crate::galerkin::{Forcing, GalerkinSystem, SpectralTrajectory};
use crate::periodic::PeriodicSolution;

/// Quantities entering the a-priori energy bound
/// `sup_t |u|^2 + int |u_x|^2 <= C (|a_I|^2 + int f^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub sup_l2_sq: f64,
    pub grad_integral: f64,
    pub data_norm_sq: f64,
    /// Zero when both sides vanish.
    pub ratio: f64,
}

/// `int_0^L |u_x|^2` from node samples, using differences on cell midpoints.
pub fn gradient_norm_sq(field: &[f64], h: f64) -> f64 {
    field.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / h
}

pub fn energy_report(
    sol: &PeriodicSolution,
    sys: &GalerkinSystem,
    head: &DVector<f64>,
    f: &Forcing,
) -> Result<EnergyReport> {
    let traj = &sol.trajectory;
    if traj.coeffs().nrows() != sys.n_modes() {
        return Err(validation("solution and system disagree on the number of modes"));
    }
    let grid = sys.basis().grid();
    let tg = sys.time_grid();
    let sup_l2_sq = traj
        .coeffs()
        .column_iter()
        .map(|c| c.norm_squared())
        .fold(0.0, f64::max);
    let h = grid.spacing();
    let wt = tg.quad_weights();
    let start = traj.start_index();
    let grad_integral: f64 = (0..traj.n_columns())
        .map(|i| wt[start + i] * gradient_norm_sq(&traj.field(i), h))
        .sum();
    let data_norm_sq = head.norm_squared() + f.l2_norm_sq(grid, tg);
    let lhs = sup_l2_sq + grad_integral;
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / data_norm_sq };
    Ok(EnergyReport {
        sup_l2_sq,
        grad_integral,
        data_norm_sq,
        ratio,
    })
}

/// `u(x_i, t_j)` for the requested node indices; `t_indices` are columns of
/// the trajectory.
pub fn evaluate_field(
    traj: &SpectralTrajectory,
    x_indices: &[usize],
    t_indices: &[usize],
) -> Result<DMatrix<f64>> {
    let modes = traj.basis().modes();
    if let Some(bad) = x_indices.iter().find(|&&i| i >= modes.nrows()) {
        return Err(validation(format!("x index {bad} out of range")));
    }
    if let Some(bad) = t_indices.iter().find(|&&j| j >= traj.n_columns()) {
        return Err(validation(format!("t index {bad} out of range")));
    }
    let coeffs = traj.coeffs();
    Ok(DMatrix::from_fn(x_indices.len(), t_indices.len(), |a, b| {
        modes.row(x_indices[a]).dot(&coeffs.column(t_indices[b]).transpose())
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{dirichlet_laplacian_basis, SpatialGrid};
    use crate::galerkin::{Perturbation, TimeGrid, TimeSpan};
    use crate::periodic::{solve_direct, SplitIndex};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn system(forcing: impl Fn(f64, f64) -> f64) -> (GalerkinSystem, Forcing) {
        let grid = SpatialGrid::new(1.0, 401).unwrap();
        let basis = Arc::new(dirichlet_laplacian_basis(6, &grid).unwrap());
        let tg = Arc::new(TimeGrid::new(0.5, 100).unwrap());
        let e = Perturbation::zero(&grid, &tg, 2.0, 1.0).unwrap();
        let f = Forcing::from_fn(forcing, &grid, &tg).unwrap();
        (GalerkinSystem::assemble(basis, &e, &f, tg).unwrap(), f)
    }

    #[test]
    fn gradient_integral_matches_spectral_identity() {
        let (sys, f) = system(|x, t| (1.0 + t) * x * (1.0 - x));
        let head = DVector::from_vec(vec![1.0, 0.5]);
        let sol = solve_direct(&sys, &head, SplitIndex::new(2, 6).unwrap()).unwrap();
        let rep = energy_report(&sol, &sys, &head, &f).unwrap();
        let wt = sys.time_grid().quad_weights();
        let lambdas = sys.basis().lambdas();
        let spectral: f64 = sol
            .trajectory
            .coeffs()
            .column_iter()
            .zip(&wt)
            .map(|(c, w)| w * c.iter().zip(lambdas.iter()).map(|(u, l)| l * u * u).sum::<f64>())
            .sum();
        assert!((rep.grad_integral - spectral).abs() / spectral < 1e-3);
        assert!(rep.sup_l2_sq >= head.norm_squared());
    }

    #[test]
    fn zero_everything() {
        let (sys, f) = system(|_, _| 0.0);
        let head = DVector::zeros(1);
        let sol = solve_direct(&sys, &head, SplitIndex::new(1, 6).unwrap()).unwrap();
        let rep = energy_report(&sol, &sys, &head, &f).unwrap();
        assert_eq!(
            rep,
            EnergyReport {
                sup_l2_sq: 0.0,
                grad_integral: 0.0,
                data_norm_sq: 0.0,
                ratio: 0.0
            }
        );
    }

    #[test]
    fn joint_scaling_is_quadratic() {
        let forcing = |x: f64, t: f64| (2.0 * PI * x).sin() * (1.0 - t) + x;
        let (sys, f) = system(forcing);
        let (sys2, f2) = system(move |x, t| 2.0 * forcing(x, t));
        let split = SplitIndex::new(2, 6).unwrap();
        let head = DVector::from_vec(vec![0.3, -0.7]);
        let head2 = &head * 2.0;
        let r1 = energy_report(&solve_direct(&sys, &head, split).unwrap(), &sys, &head, &f).unwrap();
        let r2 = energy_report(&solve_direct(&sys2, &head2, split).unwrap(), &sys2, &head2, &f2).unwrap();
        let a = r1.sup_l2_sq + r1.grad_integral;
        let b = r2.sup_l2_sq + r2.grad_integral;
        assert!((b / a - 4.0).abs() < 1e-9);
        assert!((r2.ratio - r1.ratio).abs() / r1.ratio < 1e-9);
    }

    #[test]
    fn pointwise_single_mode() {
        let (sys, _) = system(|_, _| 0.0);
        let mut a = DVector::zeros(6);
        a[0] = 1.0;
        let traj = sys.propagate(&a, TimeSpan::full(sys.time_grid())).unwrap();
        let mid = 200;
        let t_idx: Vec<usize> = (0..traj.n_columns()).step_by(10).collect();
        let block = evaluate_field(&traj, &[mid], &t_idx).unwrap();
        let l1 = sys.basis().lambdas()[0];
        for (b, &j) in t_idx.iter().enumerate() {
            let t = traj.times()[j];
            assert!((block[(0, b)] - 2f64.sqrt() * (-l1 * t).exp()).abs() < 1e-12);
        }
        let all: Vec<usize> = (0..401).collect();
        let full = evaluate_field(&traj, &all, &[3]).unwrap();
        let synth = traj.field(3);
        for i in 0..401 {
            assert!((full[(i, 0)] - synth[i]).abs() < 1e-12);
        }
        assert!(evaluate_field(&traj, &[401], &[0]).is_err());
        assert!(evaluate_field(&traj, &[0], &[traj.n_columns()]).is_err());
    }

    #[test]
    fn zero_trajectory_block() {
        let (sys, _) = system(|_, _| 0.0);
        let traj = sys.propagate(&DVector::zeros(6), TimeSpan::full(sys.time_grid())).unwrap();
        let block = evaluate_field(&traj, &[10, 20], &[0, 5]).unwrap();
        assert!(block.iter().all(|v| *v == 0.0));
    }
}
