use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::config::{KSetting, MethodChoice, ModeTerm, RunConfig, TargetSource, TimeProfile};
use super::output::{csv_string, to_json_string, write_outputs};
use super::CliError;
use crate::analysis::{energy_report, EnergyReport};
use crate::basis::{dirichlet_laplacian_basis, EigenBasis, SpatialGrid};
use crate::galerkin::{Forcing, GalerkinSystem, Perturbation, TimeGrid};
use crate::identify::{identify, EParameterization, IdentificationProblem, IdentifyConfig, ObservationWindow};
use crate::periodic::{
    choose_k_detailed, solve_direct, solve_fixed_point, tail_monodromy_norm, ContractionEstimate,
    FixedPointOptions, PeriodicSolution, SolveMethod, SplitIndex, TailSystem, NEAR_SINGULAR_CONDITION,
};

struct Setup {
    grid: SpatialGrid,
    time_grid: Arc<TimeGrid>,
    basis: Arc<EigenBasis>,
    forcing: Forcing,
}

fn setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    let grid = cfg.spatial_grid()?;
    let time_grid = Arc::new(cfg.time_grid()?);
    let basis = Arc::new(cfg.eigen_basis(&grid)?);
    let forcing = Forcing::new(cfg.forcing.sample(&grid, &time_grid, &cfg.base_dir)?, &grid, &time_grid)?;
    Ok(Setup {
        grid,
        time_grid,
        basis,
        forcing,
    })
}

fn perturbation(cfg: &RunConfig, s: &Setup) -> Result<Perturbation, CliError> {
    let values = cfg.perturbation.sample(&s.grid, &s.time_grid, &cfg.base_dir)?;
    Ok(Perturbation::new(values, cfg.q, cfg.bound_m, &s.grid, &s.time_grid)?)
}

/// Resolve the split and its contraction estimate.
fn resolve_split(cfg: &RunConfig, sys: &GalerkinSystem) -> Result<(SplitIndex, ContractionEstimate, Vec<ContractionEstimate>), CliError> {
    let n = sys.n_modes();
    match cfg.split.k {
        KSetting::Fixed(k) => {
            let split = SplitIndex::new(k, n)?;
            let est = tail_monodromy_norm(sys, split, cfg.seed, 1000)?;
            Ok((split, est, vec![est]))
        }
        KSetting::Auto(_) => {
            let k_max = cfg.split.k_max.unwrap_or(n - 1);
            let (split, scanned) = choose_k_detailed(sys, cfg.split.mu_target, k_max, cfg.seed)?;
            let est = *scanned.last().expect("scan evaluates at least one split");
            Ok((split, est, scanned))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub schema_version: u32,
    pub command: &'static str,
    pub n_modes: usize,
    pub k: usize,
    pub mu: f64,
    pub mu_converged: bool,
    pub residual: f64,
    pub method: SolveMethod,
    pub iterations: usize,
    pub condition: Option<f64>,
    pub head: Vec<f64>,
    pub tail: Vec<f64>,
    pub energy: EnergyReport,
}

fn trajectory_csv(sol: &PeriodicSolution) -> Result<String, CliError> {
    let traj = &sol.trajectory;
    let n = traj.coeffs().nrows();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|j| format!("u_{j}")));
    let rows = (0..traj.n_columns()).map(|i| {
        let mut row = vec![traj.times()[i]];
        row.extend(traj.coeffs().column(i).iter());
        row
    });
    csv_string(&header, rows)
}

fn field_csv(sol: &PeriodicSolution, grid: &SpatialGrid) -> Result<String, CliError> {
    let traj = &sol.trajectory;
    let header = vec!["t".to_string(), "x".to_string(), "u".to_string()];
    let mut rows = Vec::with_capacity(traj.n_columns() * grid.n_nodes());
    for i in 0..traj.n_columns() {
        let t = traj.times()[i];
        for (x, u) in grid.nodes().iter().zip(traj.field(i)) {
            rows.push(vec![t, *x, u]);
        }
    }
    csv_string(&header, rows)
}

/// `solve`: K-approximate periodic solution with trajectory, field and summary.
pub fn run_solve(cfg: &RunConfig, out_dir: &Path) -> Result<SolveSummary, CliError> {
    let s = setup(cfg)?;
    let e = perturbation(cfg, &s)?;
    let sys = GalerkinSystem::assemble(s.basis.clone(), &e, &s.forcing, s.time_grid.clone())?;
    let (split, est, _) = resolve_split(cfg, &sys)?;
    let head = cfg.head_for(split.k())?;
    let sol = match cfg.solve.method {
        MethodChoice::FixedPoint => solve_fixed_point(
            &sys,
            &head,
            split,
            FixedPointOptions {
                tol: cfg.solve.tol,
                max_iter: cfg.solve.max_iter,
                mu: Some(est.mu),
                seed: cfg.seed,
            },
        )?,
        MethodChoice::Direct => solve_direct(&sys, &head, split)?,
    };
    let energy = energy_report(&sol, &sys, &head, &s.forcing)?;
    let summary = SolveSummary {
        schema_version: super::config::SCHEMA_VERSION,
        command: "solve",
        n_modes: sys.n_modes(),
        k: split.k(),
        mu: est.mu,
        mu_converged: est.converged,
        residual: sol.residual,
        method: sol.method,
        iterations: sol.step_norms.len(),
        condition: sol.condition,
        head: sol.head.as_slice().to_vec(),
        tail: sol.tail.as_slice().to_vec(),
        energy,
    };
    write_outputs(
        out_dir,
        &[
            (cfg.output.trajectory.clone(), trajectory_csv(&sol)?),
            (cfg.output.summary.clone(), to_json_string(&summary)?),
            (cfg.output.field.clone(), field_csv(&sol, &s.grid)?),
        ],
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct ChooseKReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub k: usize,
    pub mu: f64,
    pub mu_target: f64,
    pub estimates: Vec<ContractionEstimate>,
}

/// `choose-k`: smallest split whose tail monodromy norm meets the target.
pub fn run_choose_k(cfg: &RunConfig, out_dir: &Path) -> Result<ChooseKReport, CliError> {
    let s = setup(cfg)?;
    let e = perturbation(cfg, &s)?;
    let sys = GalerkinSystem::assemble(s.basis.clone(), &e, &s.forcing, s.time_grid.clone())?;
    let (split, est, estimates) = resolve_split(cfg, &sys)?;
    let report = ChooseKReport {
        schema_version: super::config::SCHEMA_VERSION,
        command: "choose-k",
        k: split.k(),
        mu: est.mu,
        mu_target: cfg.split.mu_target,
        estimates,
    };
    write_outputs(out_dir, &[(cfg.output.choose_k.clone(), to_json_string(&report)?)])?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentifyReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub k: usize,
    pub objective: f64,
    pub a_star: Vec<f64>,
    pub gram_min_eig: Option<f64>,
    pub iterations: usize,
    pub objective_history: Vec<f64>,
    pub e_params: Vec<f64>,
    pub n_ex: usize,
    pub n_et: usize,
}

fn identification(e: crate::Error) -> CliError {
    match e {
        crate::Error::Validation(_) | crate::Error::Resolution { .. } => CliError::Config(e.to_string()),
        other => CliError::Identification(other),
    }
}

/// `identify`: recover `(e, a_I)` from window observations.
pub fn run_identify(cfg: &RunConfig, out_dir: &Path) -> Result<IdentifyReport, CliError> {
    let block = cfg
        .identify
        .as_ref()
        .ok_or_else(|| CliError::Config("identify block missing".into()))?;
    let s = setup(cfg)?;
    let param = EParameterization::new(block.parameterization.n_ex, block.parameterization.n_et)?;
    let window = match &block.window {
        Some(w) => ObservationWindow::interval(&s.grid, w.x_min, w.x_max)?,
        None => ObservationWindow::full(&s.grid)?,
    };
    let initial = vec![block.initial_e; param.n_params()];

    let placeholder = DMatrix::zeros(window.len(), s.time_grid.n_nodes());
    let build = |split: SplitIndex, target: DMatrix<f64>| -> Result<IdentificationProblem, CliError> {
        Ok(IdentificationProblem::new(
            s.basis.clone(),
            s.time_grid.clone(),
            s.forcing.clone(),
            split,
            window.clone(),
            target,
            cfg.q,
            cfg.bound_m,
            param,
        )?
        .with_mu_target(cfg.split.mu_target)?)
    };

    let split = {
        let probe = build(SplitIndex::new(0, cfg.modes)?, placeholder.clone())?;
        let e0 = probe.perturbation_from_params(&initial)?;
        let sys = GalerkinSystem::assemble(s.basis.clone(), &e0, &s.forcing, s.time_grid.clone())?;
        resolve_split(cfg, &sys).map_err(|e| match e {
            CliError::Solver(inner) => CliError::Identification(inner),
            other => other,
        })?
        .0
    };

    let (target, fixed_head) = match &block.target {
        TargetSource::File { path } => {
            if block.fix_head {
                return Err(CliError::Config("fix_head needs a twin target".into()));
            }
            let target = super::output::read_matrix_csv(&cfg.base_dir.join(path))?;
            (target, None)
        }
        TargetSource::Twin { e_true, a_true, noise } => {
            if a_true.len() > split.k() {
                return Err(CliError::Config(format!(
                    "a_true has {} entries but k = {}",
                    a_true.len(),
                    split.k()
                )));
            }
            let mut head = DVector::zeros(split.k());
            head.rows_mut(0, a_true.len()).copy_from_slice(a_true);
            let values = e_true.sample(&s.grid, &s.time_grid, &cfg.base_dir)?;
            let e_true = Perturbation::new(values, cfg.q, cfg.bound_m, &s.grid, &s.time_grid)?;
            let clean = build(split, placeholder.clone())?
                .predict(&e_true, &head)
                .map_err(identification)?;
            let target = if *noise > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                let dist = Normal::new(0.0, *noise).map_err(|e| CliError::Config(e.to_string()))?;
                clean.map(|v| v + dist.sample(&mut rng))
            } else {
                clean
            };
            (target, block.fix_head.then_some(head))
        }
    };

    let prob = build(split, target)?;
    let mut config = IdentifyConfig::new(initial);
    config.step = block.step;
    config.max_outer = block.max_outer;
    config.fd_step = block.fd_step;
    config.tol = block.tol;
    config.tikhonov = block.tikhonov;
    config.fixed_head = fixed_head;
    let result = identify(&prob, &config).map_err(identification)?;

    let report = IdentifyReport {
        schema_version: super::config::SCHEMA_VERSION,
        command: "identify",
        k: split.k(),
        objective: result.objective,
        a_star: result.a_star.as_slice().to_vec(),
        gram_min_eig: result.gram_min_eig,
        iterations: result.iterations,
        objective_history: result.objective_history.clone(),
        e_params: result.e_params.clone(),
        n_ex: param.n_ex,
        n_et: param.n_et,
    };
    let coords = param.node_coordinates(&s.grid, &s.time_grid);
    let rows = coords
        .iter()
        .zip(&result.e_params)
        .map(|(&(x, t), v)| vec![x, t, *v]);
    let e_csv = csv_string(&["x".into(), "t".into(), "e".into()], rows)?;
    write_outputs(
        out_dir,
        &[
            (cfg.output.identify_result.clone(), to_json_string(&report)?),
            (cfg.output.e_params.clone(), e_csv),
        ],
    )?;
    Ok(report)
}

/// `int_0^T (alpha + beta t) e^{lambda (t - T)} dt`.
fn forced_integral_scaled(lambda: f64, horizon: f64, alpha: f64, beta: f64) -> f64 {
    let z = lambda * horizon;
    if z.abs() < 1e-4 {
        alpha * horizon * (1.0 - z / 2.0 + z * z / 6.0) + beta * horizon * horizon * (0.5 - z / 6.0 + z * z / 24.0)
    } else {
        let decay = -(-z).exp_m1();
        alpha * decay / lambda + beta * (horizon / lambda - decay / (lambda * lambda))
    }
}

/// `int_0^T (alpha + beta t) e^{lambda t} dt`.
fn forced_integral(lambda: f64, horizon: f64, alpha: f64, beta: f64) -> f64 {
    let z = lambda * horizon;
    if z.abs() < 1e-4 {
        alpha * horizon * (1.0 + z / 2.0 + z * z / 6.0) + beta * horizon * horizon * (0.5 + z / 3.0 + z * z / 8.0)
    } else {
        let growth = z.exp_m1();
        alpha * growth / lambda + beta * (horizon * z.exp() / lambda - growth / (lambda * lambda))
    }
}

/// Deviation from `a_k(T) e^{lambda T} - a_k(0) = int_0^T f_k(t) e^{lambda t} dt`,
/// divided by `max(1, e^{lambda T})`.
pub fn relation_violation(lambda: f64, horizon: f64, a0: f64, a_end: f64, alpha: f64, beta: f64) -> f64 {
    if lambda > 0.0 {
        (a_end - a0 * (-lambda * horizon).exp() - forced_integral_scaled(lambda, horizon, alpha, beta)).abs()
    } else {
        (a_end * (lambda * horizon).exp() - a0 - forced_integral(lambda, horizon, alpha, beta)).abs()
    }
}

/// Constant and linear-in-time parts of the normalized coefficient of mode `k`.
fn mode_forcing(terms: &[ModeTerm], k: usize, length: f64) -> (f64, f64) {
    let scale = (length / 2.0).sqrt();
    terms
        .iter()
        .filter(|t| t.mode == k)
        .fold((0.0, 0.0), |(a, b), t| match t.time {
            TimeProfile::Constant => (a + t.amplitude * scale, b),
            TimeProfile::Linear => (a, b + t.amplitude * scale),
        })
}

#[derive(Debug, Clone, Serialize)]
pub struct SingularSplitReport {
    pub k: usize,
    pub condition: Option<f64>,
    pub near_singular: bool,
    pub consistency_residual: f64,
    pub rhs_consistent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolvedSplitReport {
    pub k: usize,
    pub condition: f64,
    pub residual: f64,
    pub max_relation_violation: f64,
    pub relation_violations: Vec<f64>,
    pub head: Vec<f64>,
    pub tail: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Example34Report {
    pub schema_version: u32,
    pub command: &'static str,
    pub neutral_mode: usize,
    pub potential: f64,
    pub split_below: SingularSplitReport,
    pub split_at: SolvedSplitReport,
}

/// `example34`: heat equation with potential `(K pi)^2` and a neutral mode `K`.
pub fn run_example34(cfg: &RunConfig, out_dir: &Path) -> Result<Example34Report, CliError> {
    let block = cfg
        .example34
        .as_ref()
        .ok_or_else(|| CliError::Config("example34 block missing".into()))?;
    let k = block.k;
    let grid = cfg.spatial_grid()?;
    let tg = Arc::new(cfg.time_grid()?);
    let laplacian = dirichlet_laplacian_basis(cfg.modes, &grid)?;
    // y_t = y_xx + c y + f with c = lambda_K, so mode K is neutral
    let potential = laplacian.lambdas()[k - 1];
    let basis = Arc::new(laplacian.shift_spectrum(-potential));
    let e = Perturbation::zero(&grid, &tg, cfg.q, cfg.bound_m)?;
    let values = DMatrix::from_fn(grid.n_nodes(), tg.n_nodes(), |i, j| {
        block
            .forcing
            .iter()
            .map(|t| t.eval(grid.nodes()[i], tg.times()[j], grid.length()))
            .sum()
    });
    let forcing = Forcing::new(values, &grid, &tg)?;
    let sys = GalerkinSystem::assemble(basis.clone(), &e, &forcing, tg.clone())?;
    let mut head_full = DVector::zeros(k);
    head_full.rows_mut(0, block.head.len()).copy_from_slice(&block.head);

    let below = SplitIndex::new(k - 1, cfg.modes)?;
    let tail_below = TailSystem::build(&sys, below)?;
    let condition = tail_below.condition();
    let head_below = head_full.rows(0, k - 1).into_owned();
    let rhs = tail_below.offset(&sys, &head_below, true)?;
    let consistency = tail_below.consistency_residual(&rhs);
    let split_below = SingularSplitReport {
        k: k - 1,
        condition: condition.is_finite().then_some(condition),
        near_singular: !(condition <= NEAR_SINGULAR_CONDITION),
        consistency_residual: consistency,
        rhs_consistent: consistency < 1e-8,
    };

    let at = SplitIndex::new(k, cfg.modes)?;
    let sol = TailSystem::build(&sys, at)?.solve(&sys, &head_full, true)?;
    let coeffs = sol.trajectory.coeffs();
    let last = coeffs.ncols() - 1;
    let horizon = tg.horizon();
    let violations: Vec<f64> = (0..cfg.modes)
        .map(|j| {
            let (alpha, beta) = mode_forcing(&block.forcing, j + 1, grid.length());
            let lambda = basis.lambdas()[j];
            relation_violation(lambda, horizon, coeffs[(j, 0)], coeffs[(j, last)], alpha, beta)
        })
        .collect();
    let split_at = SolvedSplitReport {
        k,
        condition: sol.condition.unwrap_or(f64::NAN),
        residual: sol.residual,
        max_relation_violation: violations.iter().copied().fold(0.0, f64::max),
        relation_violations: violations,
        head: sol.head.as_slice().to_vec(),
        tail: sol.tail.as_slice().to_vec(),
    };
    let report = Example34Report {
        schema_version: super::config::SCHEMA_VERSION,
        command: "example34",
        neutral_mode: k,
        potential,
        split_below,
        split_at,
    };
    write_outputs(out_dir, &[(cfg.output.example34.clone(), to_json_string(&report)?)])?;
    if !report.split_below.near_singular {
        return Err(CliError::Contradiction(format!(
            "split k = {} is well conditioned (condition {:.3e})",
            k - 1,
            condition
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_integrals_against_quadrature() {
        // composite Simpson with many panels as the reference
        let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| {
            let n = 20_000;
            let h = (b - a) / n as f64;
            let mut s = f(a) + f(b);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * f(a + i as f64 * h);
            }
            s * h / 3.0
        };
        for lambda in [-30.0, -1.0, -1e-6, 0.0, 1e-6, 2.0, 50.0] {
            for (alpha, beta) in [(1.0, 0.0), (0.0, 1.0), (0.3, -0.7)] {
                let horizon = 1.3;
                let want = simpson(&|t| (alpha + beta * t) * (lambda * t).exp(), 0.0, horizon);
                let got = forced_integral(lambda, horizon, alpha, beta);
                assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "lambda={lambda}");
                let want = simpson(&|t| (alpha + beta * t) * (lambda * (t - horizon)).exp(), 0.0, horizon);
                let got = forced_integral_scaled(lambda, horizon, alpha, beta);
                assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "lambda={lambda}");
            }
        }
    }
}
