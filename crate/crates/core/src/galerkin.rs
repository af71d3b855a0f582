//! Truncated Galerkin system `du_j/dt + sum_k B_kj(t) u_k = f_j(t)` and its
//! time integration.
//!
//! `B_kj` multiplies `u_k` in the equation for `u_j`, so the propagated system
//! is `u' = -B(t)^T u + f(t)` with `B = diag(lambda) + E(t)`. The stiff diagonal
//! is integrated exactly through exponentials; `-E(t)^T u + f(t)` is handled by
//! a two-stage exponential Runge-Kutta rule of stiff order two (midpoint
//! node), which is exact whenever `E = 0` and `f` is affine in time.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::{lq_norm, EigenBasis, SpatialGrid};
use crate::error::{validation, Error, Result};

/// Uniform time grid `0 = t_0 < ... < t_n = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(validation(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(validation("time grid needs at least one step"));
        }
        let dt = horizon / n_steps as f64;
        let mut times: Vec<f64> = (0..=n_steps).map(|i| i as f64 * dt).collect();
        times[n_steps] = horizon;
        Ok(Self { horizon, times })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.times.len()
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps() as f64
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Trapezoid weights in time.
    pub fn quad_weights(&self) -> Vec<f64> {
        let dt = self.dt();
        let mut w = vec![dt; self.n_nodes()];
        w[0] = 0.5 * dt;
        w[self.n_steps()] = 0.5 * dt;
        w
    }
}

/// Closed range of time-node indices `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeSpan {
    pub start: usize,
    pub end: usize,
}

impl TimeSpan {
    pub fn full(tg: &TimeGrid) -> Self {
        Self {
            start: 0,
            end: tg.n_steps(),
        }
    }
}

fn check_field_shape(values: &DMatrix<f64>, grid: &SpatialGrid, tg: &TimeGrid, what: &str) -> Result<()> {
    if values.nrows() != grid.n_nodes() || values.ncols() != tg.n_nodes() {
        return Err(validation(format!(
            "{what} is {}x{}, expected {}x{} (nodes x time nodes)",
            values.nrows(),
            values.ncols(),
            grid.n_nodes(),
            tg.n_nodes()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(validation(format!("{what} contains non-finite samples")));
    }
    Ok(())
}

/// Space-time samples of `e(x,t)` with the radius of the admissible ball
/// `{ sup_t ||e(.,t)||_{L^q} <= M }` it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    values: DMatrix<f64>,
    q: f64,
    bound_m: f64,
}

/// Slack allowed on the slice-wise `L^q` bound.
pub const MQ_SLACK: f64 = 1e-9;

impl Perturbation {
    pub fn new(values: DMatrix<f64>, q: f64, bound_m: f64, grid: &SpatialGrid, tg: &TimeGrid) -> Result<Self> {
        check_field_shape(&values, grid, tg, "perturbation")?;
        if !(bound_m.is_finite() && bound_m > 0.0) {
            return Err(validation(format!("bound M must be positive, got {bound_m}")));
        }
        let worst = sup_lq_norm(&values, q, grid)?;
        if worst > bound_m + MQ_SLACK {
            return Err(validation(format!(
                "perturbation leaves the admissible ball: sup_t L^{q} norm {worst} > M = {bound_m}"
            )));
        }
        Ok(Self { values, q, bound_m })
    }

    pub fn zero(grid: &SpatialGrid, tg: &TimeGrid, q: f64, bound_m: f64) -> Result<Self> {
        Self::new(DMatrix::zeros(grid.n_nodes(), tg.n_nodes()), q, bound_m, grid, tg)
    }

    pub fn constant(value: f64, grid: &SpatialGrid, tg: &TimeGrid, q: f64, bound_m: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(grid.n_nodes(), tg.n_nodes(), value),
            q,
            bound_m,
            grid,
            tg,
        )
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(
        f: F,
        grid: &SpatialGrid,
        tg: &TimeGrid,
        q: f64,
        bound_m: f64,
    ) -> Result<Self> {
        let values = DMatrix::from_fn(grid.n_nodes(), tg.n_nodes(), |i, j| {
            f(grid.nodes()[i], tg.times()[j])
        });
        Self::new(values, q, bound_m, grid, tg)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn bound_m(&self) -> f64 {
        self.bound_m
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

/// `max_i ||values[:, i]||_{L^q}`.
pub fn sup_lq_norm(values: &DMatrix<f64>, q: f64, grid: &SpatialGrid) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for col in values.column_iter() {
        worst = worst.max(lq_norm(col.as_slice(), q, grid)?);
    }
    Ok(worst)
}

/// Space-time samples of the source `f(x,t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    values: DMatrix<f64>,
}

impl Forcing {
    pub fn new(values: DMatrix<f64>, grid: &SpatialGrid, tg: &TimeGrid) -> Result<Self> {
        check_field_shape(&values, grid, tg, "forcing")?;
        Ok(Self { values })
    }

    pub fn zero(grid: &SpatialGrid, tg: &TimeGrid) -> Self {
        Self {
            values: DMatrix::zeros(grid.n_nodes(), tg.n_nodes()),
        }
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(f: F, grid: &SpatialGrid, tg: &TimeGrid) -> Result<Self> {
        let values = DMatrix::from_fn(grid.n_nodes(), tg.n_nodes(), |i, j| {
            f(grid.nodes()[i], tg.times()[j])
        });
        Self::new(values, grid, tg)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Space-time quadrature of `f^2`.
    pub fn l2_norm_sq(&self, grid: &SpatialGrid, tg: &TimeGrid) -> f64 {
        let wt = tg.quad_weights();
        self.values
            .column_iter()
            .zip(&wt)
            .map(|(col, w)| w * grid.inner(col.as_slice(), col.as_slice()))
            .sum()
    }

    /// Scale every sample.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: &self.values * factor,
        }
    }
}

/// `phi_1(z) = (e^z - 1)/z`.
fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0
    } else {
        z.exp_m1() / z
    }
}

/// `phi_2(z) = (e^z - 1 - z)/z^2`.
fn phi2(z: f64) -> f64 {
    if z.abs() < 0.1 {
        // Taylor series sum_k z^k/(k+2)!
        let mut term = 0.5;
        let mut sum = term;
        for k in 1..16 {
            term *= z / (k + 2) as f64;
            sum += term;
        }
        sum
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

/// Per-mode coefficients of one exponential Runge-Kutta step of size `h`.
#[derive(Debug, Clone)]
struct StepWeights {
    decay: DVector<f64>,
    decay_half: DVector<f64>,
    stage: DVector<f64>,
    first: DVector<f64>,
    second: DVector<f64>,
}

impl StepWeights {
    fn new(lambdas: &DVector<f64>, h: f64) -> Self {
        let map = |f: &dyn Fn(f64) -> f64| lambdas.map(f);
        Self {
            decay: map(&|l| (-l * h).exp()),
            decay_half: map(&|l| (-l * h / 2.0).exp()),
            stage: map(&|l| h / 2.0 * phi1(-l * h / 2.0)),
            first: map(&|l| h * (phi1(-l * h) - 2.0 * phi2(-l * h))),
            second: map(&|l| 2.0 * h * phi2(-l * h)),
        }
    }
}

/// Assembled Galerkin system on a fixed basis and time grid.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    basis: Arc<EigenBasis>,
    time_grid: Arc<TimeGrid>,
    perturbation: Vec<DMatrix<f64>>,
    perturbation_mid: Vec<DMatrix<f64>>,
    forcing_coeffs: DMatrix<f64>,
    forcing_mid: DMatrix<f64>,
    perturbed: bool,
    weights: StepWeights,
}

/// Quadrature matrix `E_kj = <e X_k, X_j>` for one time slice.
fn perturbation_block(basis: &EigenBasis, slice: &[f64]) -> DMatrix<f64> {
    let modes = basis.modes();
    let w = basis.grid().quad_weights();
    let weighted = DMatrix::from_fn(modes.nrows(), modes.ncols(), |i, j| {
        w[i] * slice[i] * modes[(i, j)]
    });
    let mut block = modes.tr_mul(&weighted);
    // symmetrize away rounding in the product
    let sym = (&block + block.transpose()) * 0.5;
    block.copy_from(&sym);
    block
}

impl GalerkinSystem {
    pub fn assemble(
        basis: Arc<EigenBasis>,
        e: &Perturbation,
        f: &Forcing,
        time_grid: Arc<TimeGrid>,
    ) -> Result<Self> {
        let grid = basis.grid();
        check_field_shape(f.values(), grid, &time_grid, "forcing")?;
        let forcing_coeffs = forcing_coefficients(&basis, f, &time_grid)?;
        Self::with_forcing_coeffs(basis, e, forcing_coeffs, time_grid)
    }

    /// Assemble with forcing coefficients that were already projected.
    pub fn with_forcing_coeffs(
        basis: Arc<EigenBasis>,
        e: &Perturbation,
        forcing_coeffs: DMatrix<f64>,
        time_grid: Arc<TimeGrid>,
    ) -> Result<Self> {
        let grid = basis.grid();
        check_field_shape(e.values(), grid, &time_grid, "perturbation")?;
        let worst = sup_lq_norm(e.values(), e.q(), grid)?;
        if worst > e.bound_m() + MQ_SLACK {
            return Err(validation(format!(
                "perturbation leaves the admissible ball: {worst} > {}",
                e.bound_m()
            )));
        }
        let n = basis.n_modes();
        if forcing_coeffs.nrows() != n || forcing_coeffs.ncols() != time_grid.n_nodes() {
            return Err(validation("forcing coefficient matrix has the wrong shape"));
        }
        let perturbed = !e.is_zero();
        let perturbation: Vec<DMatrix<f64>> = if perturbed {
            (0..time_grid.n_nodes())
                .into_par_iter()
                .map(|i| perturbation_block(&basis, e.values().column(i).as_slice()))
                .collect()
        } else {
            vec![DMatrix::zeros(n, n); time_grid.n_nodes()]
        };
        let perturbation_mid = perturbation
            .windows(2)
            .map(|w| (&w[0] + &w[1]) * 0.5)
            .collect();
        let steps = time_grid.n_steps();
        let forcing_mid = DMatrix::from_fn(n, steps, |j, i| {
            0.5 * (forcing_coeffs[(j, i)] + forcing_coeffs[(j, i + 1)])
        });
        let weights = StepWeights::new(basis.lambdas(), time_grid.dt());
        Ok(Self {
            basis,
            time_grid,
            perturbation,
            perturbation_mid,
            forcing_coeffs,
            forcing_mid,
            perturbed,
            weights,
        })
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    pub fn time_grid(&self) -> &Arc<TimeGrid> {
        &self.time_grid
    }

    pub fn n_modes(&self) -> usize {
        self.basis.n_modes()
    }

    /// `E(t_i) = B(t_i) - diag(lambda)`.
    pub fn perturbation_block(&self, i: usize) -> &DMatrix<f64> {
        &self.perturbation[i]
    }

    /// `B(t_i)`.
    pub fn coupling(&self, i: usize) -> DMatrix<f64> {
        let mut b = self.perturbation[i].clone();
        for (j, l) in self.basis.lambdas().iter().enumerate() {
            b[(j, j)] += l;
        }
        b
    }

    pub fn forcing_coeffs(&self) -> &DMatrix<f64> {
        &self.forcing_coeffs
    }

    /// One step from node `i` to `i + 1`.
    fn step(&self, i: usize, u: &DVector<f64>, with_forcing: bool) -> DVector<f64> {
        let w = &self.weights;
        let mut g0 = if self.perturbed {
            -self.perturbation[i].tr_mul(u)
        } else {
            DVector::zeros(u.len())
        };
        if with_forcing {
            g0 += self.forcing_coeffs.column(i);
        }
        let stage = w.decay_half.component_mul(u) + w.stage.component_mul(&g0);
        let mut g1 = if self.perturbed {
            -self.perturbation_mid[i].tr_mul(&stage)
        } else {
            DVector::zeros(u.len())
        };
        if with_forcing {
            g1 += self.forcing_mid.column(i);
        }
        w.decay.component_mul(u) + w.first.component_mul(&g0) + w.second.component_mul(&g1)
    }

    fn check_inputs(&self, initial: &DVector<f64>, span: TimeSpan) -> Result<()> {
        if initial.len() != self.n_modes() {
            return Err(validation(format!(
                "initial vector has {} entries, system has {} modes",
                initial.len(),
                self.n_modes()
            )));
        }
        if span.start > span.end || span.end > self.time_grid.n_steps() {
            return Err(validation(format!(
                "time span {}..={} outside 0..={}",
                span.start,
                span.end,
                self.time_grid.n_steps()
            )));
        }
        Ok(())
    }

    fn run(
        &self,
        initial: &DVector<f64>,
        span: TimeSpan,
        with_forcing: bool,
        mut visit: impl FnMut(&DVector<f64>),
    ) -> Result<DVector<f64>> {
        self.check_inputs(initial, span)?;
        let mut u = initial.clone();
        visit(&u);
        for i in span.start..span.end {
            u = self.step(i, &u, with_forcing);
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::IntegrationFailure { time_index: i + 1 });
            }
            visit(&u);
        }
        Ok(u)
    }

    /// Integrate `u' = -B^T u + f` over `span` starting from `initial`.
    pub fn propagate(&self, initial: &DVector<f64>, span: TimeSpan) -> Result<SpectralTrajectory> {
        self.propagate_with(initial, span, true)
    }

    /// Same as [`propagate`](Self::propagate) with `f = 0`.
    pub fn propagate_homogeneous(&self, initial: &DVector<f64>, span: TimeSpan) -> Result<SpectralTrajectory> {
        self.propagate_with(initial, span, false)
    }

    pub fn propagate_with(
        &self,
        initial: &DVector<f64>,
        span: TimeSpan,
        with_forcing: bool,
    ) -> Result<SpectralTrajectory> {
        let mut cols = Vec::with_capacity(span.end.saturating_sub(span.start) + 1);
        self.run(initial, span, with_forcing, |u| cols.push(u.clone()))?;
        Ok(SpectralTrajectory {
            coeffs: DMatrix::from_columns(&cols),
            basis: self.basis.clone(),
            time_grid: self.time_grid.clone(),
            start_index: span.start,
        })
    }

    /// State at `T` only, starting at `t = 0`.
    pub fn advance(&self, initial: &DVector<f64>, with_forcing: bool) -> Result<DVector<f64>> {
        self.run(initial, TimeSpan::full(&self.time_grid), with_forcing, |_| {})
    }
}

/// Columnwise projection of `f(., t_i)` onto the basis.
pub fn forcing_coefficients(basis: &EigenBasis, f: &Forcing, tg: &TimeGrid) -> Result<DMatrix<f64>> {
    check_field_shape(f.values(), basis.grid(), tg, "forcing")?;
    let w = basis.grid().quad_weights();
    let weighted = DMatrix::from_fn(f.values().nrows(), f.values().ncols(), |i, j| {
        w[i] * f.values()[(i, j)]
    });
    Ok(basis.modes().tr_mul(&weighted))
}

/// Spectral coefficients `u_j(t_i)` on consecutive time nodes.
#[derive(Debug, Clone)]
pub struct SpectralTrajectory {
    coeffs: DMatrix<f64>,
    basis: Arc<EigenBasis>,
    time_grid: Arc<TimeGrid>,
    start_index: usize,
}

impl SpectralTrajectory {
    pub fn new(
        coeffs: DMatrix<f64>,
        basis: Arc<EigenBasis>,
        time_grid: Arc<TimeGrid>,
        start_index: usize,
    ) -> Result<Self> {
        if coeffs.nrows() != basis.n_modes() {
            return Err(validation("trajectory rows must match the number of modes"));
        }
        if coeffs.ncols() == 0 || start_index + coeffs.ncols() > time_grid.n_nodes() {
            return Err(validation("trajectory columns do not fit the time grid"));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(validation("trajectory contains non-finite coefficients"));
        }
        Ok(Self {
            coeffs,
            basis,
            time_grid,
            start_index,
        })
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    pub fn time_grid(&self) -> &Arc<TimeGrid> {
        &self.time_grid
    }

    /// Index of the first column on the time grid.
    pub fn start_index(&self) -> usize {
        self.start_index
    }

    pub fn n_columns(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn times(&self) -> &[f64] {
        &self.time_grid.times()[self.start_index..self.start_index + self.n_columns()]
    }

    pub fn initial(&self) -> DVector<f64> {
        self.coeffs.column(0).into_owned()
    }

    pub fn terminal(&self) -> DVector<f64> {
        self.coeffs.column(self.n_columns() - 1).into_owned()
    }

    /// Node samples of `u(., t)` for column `i`.
    pub fn field(&self, i: usize) -> Vec<f64> {
        (self.basis.modes() * self.coeffs.column(i)).as_slice().to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::dirichlet_laplacian_basis;
    use std::f64::consts::PI;

    fn setup(n_nodes: usize, modes: usize, steps: usize) -> (Arc<EigenBasis>, Arc<TimeGrid>) {
        let grid = SpatialGrid::new(1.0, n_nodes).unwrap();
        let basis = Arc::new(dirichlet_laplacian_basis(modes, &grid).unwrap());
        (basis, Arc::new(TimeGrid::new(1.0, steps).unwrap()))
    }

    fn phi_reference(order: i32, z: f64) -> f64 {
        // sum_k z^k / (k + order)!
        let mut fact: f64 = (1..=order).map(f64::from).product();
        let mut sum = 0.0;
        let mut power = 1.0;
        for k in 0..40 {
            if k > 0 {
                fact *= f64::from(k + order);
                power *= z;
            }
            sum += power / fact;
        }
        sum
    }

    #[test]
    fn phi_functions_match_series() {
        for z in [-0.9, -0.1, -0.0999, -1e-5, -1e-6, 0.0, 1e-6, 0.05, 0.1, 0.5] {
            assert!((phi1(z) - phi_reference(1, z)).abs() < 1e-14, "phi1({z})");
            assert!((phi2(z) - phi_reference(2, z)).abs() < 1e-14, "phi2({z})");
        }
        assert!((phi1(-2.0) - (1.0 - (-2.0f64).exp()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_perturbation_gives_diagonal_coupling() {
        let (basis, tg) = setup(65, 5, 10);
        let e = Perturbation::zero(basis.grid(), &tg, 2.0, 1.0).unwrap();
        let f = Forcing::zero(basis.grid(), &tg);
        let sys = GalerkinSystem::assemble(basis.clone(), &e, &f, tg).unwrap();
        for i in [0, 5, 10] {
            let b = sys.coupling(i);
            assert_eq!(b, DMatrix::from_diagonal(basis.lambdas()));
        }
    }

    #[test]
    fn constant_perturbation_shifts_diagonal() {
        let (basis, tg) = setup(65, 5, 4);
        let eps = 0.3;
        let e = Perturbation::constant(eps, basis.grid(), &tg, 2.0, 1.0).unwrap();
        let sys = GalerkinSystem::assemble(basis.clone(), &e, &Forcing::zero(basis.grid(), &tg), tg).unwrap();
        let want = DMatrix::from_diagonal(&basis.lambdas().add_scalar(eps));
        assert!((sys.coupling(2) - want).abs().max() < 1e-10);
    }

    #[test]
    fn cosine_perturbation_off_diagonal() {
        let (basis, tg) = setup(2001, 2, 2);
        let e = Perturbation::from_fn(|x, _| (PI * x).cos(), basis.grid(), &tg, 2.0, 1.0).unwrap();
        let sys = GalerkinSystem::assemble(basis.clone(), &e, &Forcing::zero(basis.grid(), &tg), tg).unwrap();
        let block = sys.perturbation_block(1);
        assert!((block[(0, 1)] - 0.5).abs() < 1e-6);
        assert!((block[(0, 1)] - block[(1, 0)]).abs() < 1e-10);
    }

    #[test]
    fn perturbation_outside_ball_rejected() {
        let (basis, tg) = setup(33, 2, 2);
        assert!(Perturbation::constant(2.0, basis.grid(), &tg, 2.0, 1.0).is_err());
        let values = DMatrix::zeros(10, 3);
        assert!(Perturbation::new(values, 2.0, 1.0, basis.grid(), &tg).is_err());
    }

    #[test]
    fn free_decay_is_exact() {
        let (basis, tg) = setup(101, 8, 50);
        let e = Perturbation::zero(basis.grid(), &tg, 2.0, 1.0).unwrap();
        let sys = GalerkinSystem::assemble(basis.clone(), &e, &Forcing::zero(basis.grid(), &tg), tg.clone()).unwrap();
        let a = DVector::from_fn(8, |j, _| 1.0 / (j + 1) as f64);
        let traj = sys.propagate(&a, TimeSpan::full(&tg)).unwrap();
        let end = traj.terminal();
        for j in 0..8 {
            let want = a[j] * (-basis.lambdas()[j]).exp();
            assert!((end[j] - want).abs() <= 1e-12 * want.abs().max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn constant_forcing_variation_of_constants() {
        let (basis, tg) = setup(129, 4, 40);
        let grid = basis.grid().clone();
        let e = Perturbation::zero(&grid, &tg, 2.0, 1.0).unwrap();
        let f = Forcing::from_fn(|x, _| x * (1.0 - x) + (3.0 * PI * x).sin(), &grid, &tg).unwrap();
        let sys = GalerkinSystem::assemble(basis.clone(), &e, &f, tg.clone()).unwrap();
        let fbar = basis.project(&grid.sample(|x| x * (1.0 - x) + (3.0 * PI * x).sin())).unwrap();
        let a = DVector::from_element(4, 0.2);
        let end = sys.advance(&a, true).unwrap();
        for j in 0..4 {
            let l = basis.lambdas()[j];
            let decay = (-l).exp();
            let want = a[j] * decay + fbar[j] * (1.0 - decay) / l;
            assert!((end[j] - want).abs() < 1e-12, "j={j}");
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let (basis, tg) = setup(33, 3, 8);
        let e = Perturbation::constant(0.4, basis.grid(), &tg, 2.0, 1.0).unwrap();
        let sys = GalerkinSystem::assemble(basis.clone(), &e, &Forcing::zero(basis.grid(), &tg), tg.clone()).unwrap();
        let traj = sys.propagate(&DVector::zeros(3), TimeSpan::full(&tg)).unwrap();
        assert!(traj.coeffs().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn partial_span_and_bad_inputs() {
        let (basis, tg) = setup(33, 3, 8);
        let e = Perturbation::zero(basis.grid(), &tg, 2.0, 1.0).unwrap();
        let sys = GalerkinSystem::assemble(basis.clone(), &e, &Forcing::zero(basis.grid(), &tg), tg.clone()).unwrap();
        let traj = sys
            .propagate(&DVector::from_element(3, 1.0), TimeSpan { start: 2, end: 5 })
            .unwrap();
        assert_eq!(traj.n_columns(), 4);
        assert_eq!(traj.times()[0], tg.times()[2]);
        assert!(sys.propagate(&DVector::zeros(2), TimeSpan::full(&tg)).is_err());
        assert!(sys
            .propagate(&DVector::zeros(3), TimeSpan { start: 3, end: 9 })
            .is_err());
    }

    #[test]
    fn blow_up_reports_time_node() {
        let grid = SpatialGrid::new(1.0, 33).unwrap();
        let basis = Arc::new(dirichlet_laplacian_basis(1, &grid).unwrap().shift_spectrum(-1e5));
        let tg = Arc::new(TimeGrid::new(1.0, 10).unwrap());
        let e = Perturbation::zero(&grid, &tg, 2.0, 1.0).unwrap();
        let sys = GalerkinSystem::assemble(basis, &e, &Forcing::zero(&grid, &tg), tg.clone()).unwrap();
        let err = sys.advance(&DVector::from_element(1, 1.0), false).unwrap_err();
        assert!(matches!(err, Error::IntegrationFailure { time_index: 1 }));
    }
}
