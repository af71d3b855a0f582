//! Identification of the perturbation `e(x,t)` and the head coefficients
//! `a_I` from observations of the approximate-periodic solution on
//! `omega x (0, T)`.
//!
//! The map `a_I -> u` is affine for fixed `e`, so the head is obtained by an
//! exact linear least-squares solve. The perturbation is described on a
//! coarse tensor grid of piecewise-linear nodes and updated by projected
//! gradient descent with central finite-difference gradients.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::{check_exponent, lq_norm, EigenBasis, SpatialGrid};
use crate::error::{validation, Error, Result};
use crate::galerkin::{forcing_coefficients, Forcing, GalerkinSystem, Perturbation, TimeGrid};
use crate::periodic::{spectral_norm, SplitIndex, TailSystem, DEFAULT_MU_TARGET};

/// Contiguous set of grid nodes where the solution is observed.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWindow {
    x_mask: Vec<bool>,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl ObservationWindow {
    pub fn from_mask(x_mask: Vec<bool>, grid: &SpatialGrid) -> Result<Self> {
        let n = grid.n_nodes();
        if x_mask.len() != n {
            return Err(validation(format!(
                "observation mask has {} entries, grid has {n} nodes",
                x_mask.len()
            )));
        }
        let indices: Vec<usize> = (0..n).filter(|&i| x_mask[i]).collect();
        if indices.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(validation("observation window must be a contiguous interval"));
        }
        let interior = indices.iter().filter(|&&i| i > 0 && i < n - 1).count();
        if interior < 3 {
            return Err(validation(format!(
                "observation window needs at least 3 interior nodes, has {interior}"
            )));
        }
        // trapezoid rule on the sub-interval spanned by the window
        let h = grid.spacing();
        let mut weights = vec![h; indices.len()];
        weights[0] = 0.5 * h;
        *weights.last_mut().unwrap() = 0.5 * h;
        Ok(Self {
            x_mask,
            indices,
            weights,
        })
    }

    /// Nodes with `x_min <= x <= x_max` (up to rounding of the node positions).
    pub fn interval(grid: &SpatialGrid, x_min: f64, x_max: f64) -> Result<Self> {
        if !(x_min < x_max) {
            return Err(validation(format!("empty observation interval [{x_min}, {x_max}]")));
        }
        let slack = 1e-9 * grid.spacing();
        let mask = grid
            .nodes()
            .iter()
            .map(|&x| x >= x_min - slack && x <= x_max + slack)
            .collect();
        Self::from_mask(mask, grid)
    }

    pub fn full(grid: &SpatialGrid) -> Result<Self> {
        Self::from_mask(vec![true; grid.n_nodes()], grid)
    }

    pub fn x_mask(&self) -> &[bool] {
        &self.x_mask
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Piecewise-linear tensor parameterization of `e(x,t)` on `n_ex x n_et`
/// uniformly spaced nodes; a count of one means constant in that direction.
/// Parameters are stored row-major, `params[ix * n_et + it]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EParameterization {
    pub n_ex: usize,
    pub n_et: usize,
}

impl Default for EParameterization {
    fn default() -> Self {
        Self { n_ex: 5, n_et: 5 }
    }
}

/// Hat-function weights of `count` uniform nodes on `[0, extent]` at `x`.
fn hat_weights(x: f64, extent: f64, count: usize) -> [(usize, f64); 2] {
    if count == 1 {
        return [(0, 1.0), (0, 0.0)];
    }
    let s = (x / extent * (count - 1) as f64).clamp(0.0, (count - 1) as f64);
    let left = (s.floor() as usize).min(count - 2);
    let frac = s - left as f64;
    [(left, 1.0 - frac), (left + 1, frac)]
}

impl EParameterization {
    pub fn new(n_ex: usize, n_et: usize) -> Result<Self> {
        if n_ex == 0 || n_et == 0 {
            return Err(validation("parameterization needs at least one node per axis"));
        }
        Ok(Self { n_ex, n_et })
    }

    pub fn n_params(&self) -> usize {
        self.n_ex * self.n_et
    }

    fn check(&self, params: &[f64], grid: &SpatialGrid, tg: &TimeGrid) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(validation(format!(
                "expected {} e-parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        if self.n_ex > grid.n_nodes() || self.n_et > tg.n_nodes() {
            return Err(validation("e-parameterization is finer than the grid"));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(validation("e-parameters must be finite"));
        }
        Ok(())
    }

    /// Parameter node coordinates `(x, t)` in storage order.
    pub fn node_coordinates(&self, grid: &SpatialGrid, tg: &TimeGrid) -> Vec<(f64, f64)> {
        let coord = |i: usize, count: usize, extent: f64| {
            if count == 1 {
                0.0
            } else {
                extent * i as f64 / (count - 1) as f64
            }
        };
        let mut out = Vec::with_capacity(self.n_params());
        for ix in 0..self.n_ex {
            for it in 0..self.n_et {
                out.push((
                    coord(ix, self.n_ex, grid.length()),
                    coord(it, self.n_et, tg.horizon()),
                ));
            }
        }
        out
    }

    /// Samples of the interpolated field on the grid (nodes x time nodes).
    pub fn expand(&self, params: &[f64], grid: &SpatialGrid, tg: &TimeGrid) -> Result<DMatrix<f64>> {
        self.check(params, grid, tg)?;
        let xw: Vec<_> = grid
            .nodes()
            .iter()
            .map(|&x| hat_weights(x, grid.length(), self.n_ex))
            .collect();
        let tw: Vec<_> = tg
            .times()
            .iter()
            .map(|&t| hat_weights(t, tg.horizon(), self.n_et))
            .collect();
        Ok(DMatrix::from_fn(grid.n_nodes(), tg.n_nodes(), |i, j| {
            let mut v = 0.0;
            for &(ix, wx) in &xw[i] {
                for &(it, wt) in &tw[j] {
                    v += wx * wt * params[ix * self.n_et + it];
                }
            }
            v
        }))
    }

    /// Rescale the spatial profile at each parameter time node into the
    /// `L^q` ball of radius `bound_m`. Slices between parameter time nodes are
    /// convex combinations of these profiles and therefore stay in the ball.
    pub fn project_params(
        &self,
        params: &[f64],
        q: f64,
        bound_m: f64,
        grid: &SpatialGrid,
        tg: &TimeGrid,
    ) -> Result<Vec<f64>> {
        self.check(params, grid, tg)?;
        let mut out = params.to_vec();
        for it in 0..self.n_et {
            let profile: Vec<f64> = grid
                .nodes()
                .iter()
                .map(|&x| {
                    hat_weights(x, grid.length(), self.n_ex)
                        .iter()
                        .map(|&(ix, w)| w * params[ix * self.n_et + it])
                        .sum()
                })
                .collect();
            let norm = lq_norm(&profile, q, grid)?;
            if norm > bound_m {
                let scale = bound_m / norm;
                for ix in 0..self.n_ex {
                    out[ix * self.n_et + it] *= scale;
                }
            }
        }
        Ok(out)
    }
}

/// Rescale each time slice whose `L^q` norm exceeds `bound_m` back onto the sphere.
pub fn project_onto_mq(
    values: &DMatrix<f64>,
    q: f64,
    bound_m: f64,
    grid: &SpatialGrid,
    tg: &TimeGrid,
) -> Result<Perturbation> {
    check_exponent(q)?;
    let mut out = values.clone();
    for mut col in out.column_iter_mut() {
        let norm = lq_norm(col.as_slice(), q, grid)?;
        if norm > bound_m {
            col *= bound_m / norm;
        }
    }
    Perturbation::new(out, q, bound_m, grid, tg)
}

/// Everything that defines one instance of the identification problem.
#[derive(Debug, Clone)]
pub struct IdentificationProblem {
    basis: Arc<EigenBasis>,
    time_grid: Arc<TimeGrid>,
    forcing: Forcing,
    forcing_coeffs: DMatrix<f64>,
    split: SplitIndex,
    window: ObservationWindow,
    target: DMatrix<f64>,
    q: f64,
    bound_m: f64,
    parameterization: EParameterization,
    mu_target: f64,
    observation_modes: DMatrix<f64>,
}

impl IdentificationProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        basis: Arc<EigenBasis>,
        time_grid: Arc<TimeGrid>,
        forcing: Forcing,
        split: SplitIndex,
        window: ObservationWindow,
        target: DMatrix<f64>,
        q: f64,
        bound_m: f64,
        parameterization: EParameterization,
    ) -> Result<Self> {
        check_exponent(q)?;
        if !(bound_m.is_finite() && bound_m > 0.0) {
            return Err(validation("bound M must be positive"));
        }
        if split.n() != basis.n_modes() {
            return Err(validation("split does not match the basis size"));
        }
        if window.x_mask().len() != basis.grid().n_nodes() {
            return Err(validation("observation window does not match the grid"));
        }
        if target.nrows() != window.len() || target.ncols() != time_grid.n_nodes() {
            return Err(validation(format!(
                "target is {}x{}, expected {}x{} (window nodes x time nodes)",
                target.nrows(),
                target.ncols(),
                window.len(),
                time_grid.n_nodes()
            )));
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(validation("target data must be finite"));
        }
        if parameterization.n_ex > basis.grid().n_nodes() || parameterization.n_et > time_grid.n_nodes() {
            return Err(validation("e-parameterization is finer than the grid"));
        }
        let forcing_coeffs = forcing_coefficients(&basis, &forcing, &time_grid)?;
        let modes = basis.modes();
        let observation_modes = DMatrix::from_fn(window.len(), basis.n_modes(), |a, j| {
            modes[(window.indices()[a], j)]
        });
        Ok(Self {
            basis,
            time_grid,
            forcing,
            forcing_coeffs,
            split,
            window,
            target,
            q,
            bound_m,
            parameterization,
            mu_target: DEFAULT_MU_TARGET,
            observation_modes,
        })
    }

    /// Contraction level that every visited `e` must satisfy.
    pub fn with_mu_target(mut self, mu_target: f64) -> Result<Self> {
        if !(mu_target > 0.0 && mu_target < 1.0) {
            return Err(validation("mu_target must lie in (0, 1)"));
        }
        self.mu_target = mu_target;
        Ok(self)
    }

    pub fn with_target(mut self, target: DMatrix<f64>) -> Result<Self> {
        if target.shape() != self.target.shape() || target.iter().any(|v| !v.is_finite()) {
            return Err(validation("replacement target has the wrong shape or non-finite data"));
        }
        self.target = target;
        Ok(self)
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    pub fn time_grid(&self) -> &Arc<TimeGrid> {
        &self.time_grid
    }

    pub fn forcing(&self) -> &Forcing {
        &self.forcing
    }

    pub fn split(&self) -> SplitIndex {
        self.split
    }

    pub fn window(&self) -> &ObservationWindow {
        &self.window
    }

    pub fn target(&self) -> &DMatrix<f64> {
        &self.target
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn bound_m(&self) -> f64 {
        self.bound_m
    }

    pub fn parameterization(&self) -> EParameterization {
        self.parameterization
    }

    pub fn grid(&self) -> &SpatialGrid {
        self.basis.grid()
    }

    /// Perturbation described by `params`, projected into the admissible set.
    pub fn perturbation_from_params(&self, params: &[f64]) -> Result<Perturbation> {
        let projected = self.parameterization.project_params(
            params,
            self.q,
            self.bound_m,
            self.grid(),
            &self.time_grid,
        )?;
        let values = self
            .parameterization
            .expand(&projected, self.grid(), &self.time_grid)?;
        project_onto_mq(&values, self.q, self.bound_m, self.grid(), &self.time_grid)
    }

    fn evaluator(&self, e: &Perturbation) -> Result<Evaluator<'_>> {
        if e.q() != self.q || e.bound_m() != self.bound_m {
            return Err(validation("perturbation was built for a different admissible set"));
        }
        let sys = GalerkinSystem::with_forcing_coeffs(
            self.basis.clone(),
            e,
            self.forcing_coeffs.clone(),
            self.time_grid.clone(),
        )?;
        let tail = TailSystem::build(&sys, self.split)?;
        let (mu, _, _) = spectral_norm(tail.monodromy(), 0, 1000);
        if mu > self.mu_target {
            return Err(Error::ContractionLost {
                mu,
                mu_target: self.mu_target,
            });
        }
        Ok(Evaluator {
            prob: self,
            sys,
            tail,
        })
    }

    /// Solution `u(e, a_I)` restricted to the window (window nodes x time nodes).
    pub fn predict(&self, e: &Perturbation, head: &DVector<f64>) -> Result<DMatrix<f64>> {
        let ev = self.evaluator(e)?;
        ev.observe(head, true)
    }

    /// Quadrature of `(u - target)^2` over the observation window.
    pub fn misfit(&self, observed: &DMatrix<f64>) -> f64 {
        let diff = observed - &self.target;
        self.window_inner(&diff, &diff)
    }

    fn window_inner(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let wx = self.window.weights();
        let wt = self.time_grid.quad_weights();
        let mut sum = 0.0;
        for (j, w_t) in wt.iter().enumerate() {
            let mut col = 0.0;
            for (i, w_x) in wx.iter().enumerate() {
                col += w_x * a[(i, j)] * b[(i, j)];
            }
            sum += w_t * col;
        }
        sum
    }
}

struct Evaluator<'a> {
    prob: &'a IdentificationProblem,
    sys: GalerkinSystem,
    tail: TailSystem,
}

impl Evaluator<'_> {
    fn observe(&self, head: &DVector<f64>, with_forcing: bool) -> Result<DMatrix<f64>> {
        let sol = self.tail.solve(&self.sys, head, with_forcing)?;
        Ok(&self.prob.observation_modes * sol.trajectory.coeffs())
    }

    fn least_squares(&self) -> Result<HeadLeastSquares> {
        let k = self.prob.split.k();
        let base = self.observe(&DVector::zeros(k), true)?;
        let residual = &self.prob.target - &base;
        let sensitivities: Vec<DMatrix<f64>> = (0..k)
            .into_par_iter()
            .map(|i| {
                let mut unit = DVector::zeros(k);
                unit[i] = 1.0;
                self.observe(&unit, false)
            })
            .collect::<Result<_>>()?;
        let mut gram = DMatrix::zeros(k, k);
        let mut rhs = DVector::zeros(k);
        for i in 0..k {
            rhs[i] = self.prob.window_inner(&sensitivities[i], &residual);
            for l in 0..=i {
                let g = self.prob.window_inner(&sensitivities[i], &sensitivities[l]);
                gram[(i, l)] = g;
                gram[(l, i)] = g;
            }
        }
        Ok(HeadLeastSquares { gram, rhs })
    }
}

/// Normal equations `G a = r` of the head least-squares problem.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadLeastSquares {
    pub gram: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl HeadLeastSquares {
    pub fn min_eigenvalue(&self) -> Option<f64> {
        if self.gram.nrows() == 0 {
            return None;
        }
        let eig = SymmetricEigen::new(self.gram.clone());
        Some(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// Reject Gram matrices whose smallest eigenvalue is negligible.
    pub fn check_well_posed(&self) -> Result<Option<f64>> {
        let Some(min_eig) = self.min_eigenvalue() else {
            return Ok(None);
        };
        let k = self.gram.nrows() as f64;
        let threshold = 1e-12 * self.gram.trace() / k;
        if !(min_eig > threshold) {
            return Err(Error::IllPosedObservation { min_eig, threshold });
        }
        Ok(Some(min_eig))
    }

    /// Cholesky solve.
    pub fn solve(&self) -> Result<DVector<f64>> {
        if self.gram.nrows() == 0 {
            return Ok(DVector::zeros(0));
        }
        let chol = self.gram.clone().cholesky().ok_or(Error::IllPosedObservation {
            min_eig: self.min_eigenvalue().unwrap_or(0.0),
            threshold: 0.0,
        })?;
        Ok(chol.solve(&self.rhs))
    }

    /// Conjugate gradients on the normal equations from `start`.
    pub fn solve_from(&self, start: &DVector<f64>, tol: f64, max_iter: usize) -> Result<DVector<f64>> {
        if start.len() != self.rhs.len() {
            return Err(validation("initial head has the wrong length"));
        }
        let mut x = start.clone();
        let mut r = &self.rhs - &self.gram * &x;
        let mut p = r.clone();
        let mut rr = r.norm_squared();
        let stop = tol * self.rhs.norm().max(f64::MIN_POSITIVE);
        for _ in 0..max_iter {
            if rr.sqrt() <= stop {
                break;
            }
            let gp = &self.gram * &p;
            let alpha = rr / p.dot(&gp);
            x += alpha * &p;
            r -= alpha * gp;
            let rr_new = r.norm_squared();
            p = &r + (rr_new / rr) * p;
            rr = rr_new;
        }
        Ok(x)
    }
}

/// Optimal head for a fixed perturbation.
#[derive(Debug, Clone)]
pub struct HeadSolution {
    pub a_star: DVector<f64>,
    /// `None` when there are no head modes.
    pub gram_min_eig: Option<f64>,
    pub normal_equations: HeadLeastSquares,
}

/// Least-squares head `a*` minimizing the window misfit for fixed `e`.
pub fn solve_head_given_e(e: &Perturbation, prob: &IdentificationProblem) -> Result<HeadSolution> {
    let ls = prob.evaluator(e)?.least_squares()?;
    let gram_min_eig = ls.check_well_posed()?;
    let a_star = ls.solve()?;
    Ok(HeadSolution {
        a_star,
        gram_min_eig,
        normal_equations: ls,
    })
}

/// Window misfit of `u(e, a_I)` against the target.
pub fn objective(e: &Perturbation, head: &DVector<f64>, prob: &IdentificationProblem) -> Result<f64> {
    if head.len() != prob.split.k() {
        return Err(validation("head vector does not match the split"));
    }
    Ok(prob.misfit(&prob.predict(e, head)?))
}

#[derive(Debug, Clone)]
pub struct IdentifyConfig {
    /// Initial step length in parameter space along the normalized gradient.
    pub step: f64,
    pub max_outer: usize,
    pub fd_step: f64,
    /// Stop when an accepted step lowers the objective by less than this.
    pub tol: f64,
    /// Smallest step length tried before giving up on a descent direction.
    pub min_step: f64,
    pub initial_params: Vec<f64>,
    /// Hold the head at this value instead of re-solving it.
    pub fixed_head: Option<DVector<f64>>,
    /// Weight of an optional `sum params^2` penalty; zero disables it.
    pub tikhonov: f64,
}

impl IdentifyConfig {
    pub fn new(initial_params: Vec<f64>) -> Self {
        Self {
            step: 0.1,
            max_outer: 200,
            fd_step: 1e-4,
            tol: 1e-16,
            min_step: 1e-8,
            initial_params,
            fixed_head: None,
            tikhonov: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IdentificationResult {
    pub e_star: Perturbation,
    pub e_params: Vec<f64>,
    pub a_star: DVector<f64>,
    pub objective: f64,
    pub gram_min_eig: Option<f64>,
    pub iterations: usize,
    pub objective_history: Vec<f64>,
}

struct Descent<'a> {
    prob: &'a IdentificationProblem,
    config: &'a IdentifyConfig,
}

impl Descent<'_> {
    fn penalty(&self, params: &[f64]) -> f64 {
        self.config.tikhonov * params.iter().map(|p| p * p).sum::<f64>()
    }

    fn project(&self, params: &[f64]) -> Result<Vec<f64>> {
        let p = self.prob;
        p.parameterization
            .project_params(params, p.q, p.bound_m, p.grid(), &p.time_grid)
    }

    /// Objective at `params` with the head either held fixed or re-solved.
    fn evaluate(&self, params: &[f64]) -> Result<Evaluation> {
        let e = self.prob.perturbation_from_params(params)?;
        let (head, gram_min_eig) = match &self.config.fixed_head {
            Some(h) => {
                let ls = self.prob.evaluator(&e)?.least_squares()?;
                (h.clone(), ls.min_eigenvalue())
            }
            None => {
                let sol = solve_head_given_e(&e, self.prob)?;
                (sol.a_star, sol.gram_min_eig)
            }
        };
        let value = objective(&e, &head, self.prob)? + self.penalty(params);
        Ok(Evaluation {
            value,
            head,
            gram_min_eig,
        })
    }

    fn gradient(&self, params: &[f64], center: f64) -> Result<DVector<f64>> {
        let h = self.config.fd_step;
        let grads: Vec<f64> = (0..params.len())
            .into_par_iter()
            .map(|i| {
                let probe = |sign: f64| -> Result<f64> {
                    let mut p = params.to_vec();
                    p[i] += sign * h;
                    let p = self.project(&p)?;
                    let width = p[i] - params[i];
                    if width == 0.0 {
                        return Err(validation("probe collapsed by projection"));
                    }
                    Ok(self.evaluate(&p)?.value)
                };
                match (probe(1.0), probe(-1.0)) {
                    (Ok(up), Ok(down)) => Ok((up - down) / (2.0 * h)),
                    (Ok(up), Err(_)) => Ok((up - center) / h),
                    (Err(_), Ok(down)) => Ok((center - down) / h),
                    (Err(e), Err(_)) => Err(e),
                }
            })
            .collect::<Result<_>>()?;
        Ok(DVector::from_vec(grads))
    }
}

struct Evaluation {
    value: f64,
    head: DVector<f64>,
    gram_min_eig: Option<f64>,
}

/// Projected descent on the e-parameters. Unless the head is fixed, every
/// evaluation uses the optimal head for that `e`, so the objective is the
/// misfit already minimized over `a_I`.
pub fn identify(prob: &IdentificationProblem, config: &IdentifyConfig) -> Result<IdentificationResult> {
    if config.initial_params.len() != prob.parameterization.n_params() {
        return Err(validation(format!(
            "expected {} initial e-parameters, got {}",
            prob.parameterization.n_params(),
            config.initial_params.len()
        )));
    }
    if !(config.step > 0.0 && config.fd_step > 0.0 && config.min_step > 0.0 && config.tol >= 0.0) {
        return Err(validation("step, fd_step and min_step must be positive, tol nonnegative"));
    }
    if let Some(h) = &config.fixed_head {
        if h.len() != prob.split.k() {
            return Err(validation("fixed head does not match the split"));
        }
    }
    let descent = Descent { prob, config };
    let mut params = descent.project(&config.initial_params)?;
    let mut current = descent.evaluate(&params)?;
    let mut history = vec![current.value];
    let mut step = config.step;
    let mut iterations = 0;

    while iterations < config.max_outer && current.value > 0.0 {
        iterations += 1;
        let grad = descent.gradient(&params, current.value)?;
        let gnorm = grad.norm();
        if gnorm == 0.0 || !gnorm.is_finite() {
            break;
        }
        let mut accepted = None;
        let mut contraction_rejections = 0;
        let mut rejections = 0;
        while step >= config.min_step {
            let trial: Vec<f64> = params
                .iter()
                .zip(grad.iter())
                .map(|(p, g)| p - step * g / gnorm)
                .collect();
            let trial = descent.project(&trial)?;
            match descent.evaluate(&trial) {
                Ok(ev) if ev.value < current.value => {
                    accepted = Some((trial, ev));
                    break;
                }
                Ok(_) => rejections += 1,
                Err(Error::ContractionLost { .. }) => contraction_rejections += 1,
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        let Some((trial, next)) = accepted else {
            if contraction_rejections > 0 && rejections == 0 {
                return Err(Error::ContractionBudget {
                    rejections: contraction_rejections,
                });
            }
            break;
        };
        let decrease = current.value - next.value;
        params = trial;
        current = next;
        history.push(current.value);
        step *= 2.0;
        if decrease < config.tol {
            break;
        }
    }

    let e_star = prob.perturbation_from_params(&params)?;
    Ok(IdentificationResult {
        e_star,
        e_params: params,
        a_star: current.head,
        objective: current.value,
        gram_min_eig: current.gram_min_eig,
        iterations,
        objective_history: history,
    })
}
