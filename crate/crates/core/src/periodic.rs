//! Head/tail split of the spectral coefficients and the mixed
//! initial/periodic problem: the first `k` initial coefficients are prescribed,
//! the remaining ones must satisfy `u_j(0) = u_j(T)`.
//!
//! The tail monodromy `J: a_II -> u_II(T)` (zero head, zero forcing) controls
//! everything here. When `||J|| < 1` the affine map `a_II -> u_II(T)` is a
//! contraction and its fixed point is found either by Banach iteration or by
//! solving `(I - J) a_II = c` directly.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{validation, Error, Result};
use crate::galerkin::{GalerkinSystem, SpectralTrajectory, TimeSpan};

/// Default target for the tail contraction estimate.
pub const DEFAULT_MU_TARGET: f64 = 0.75;

/// Lipschitz constant used by the textbook contraction argument.
pub const LIPSCHITZ_MU: f64 = 0.866_025_403_784_438_6;

/// Condition estimate of `I - J` above which the tail problem is treated as singular.
pub const NEAR_SINGULAR_CONDITION: f64 = 1e8;

/// Number of head modes `k` out of `n` total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SplitIndex {
    k: usize,
    n: usize,
}

impl SplitIndex {
    pub fn new(k: usize, n: usize) -> Result<Self> {
        if k >= n {
            return Err(validation(format!("split k = {k} must be below N = {n}")));
        }
        Ok(Self { k, n })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tail_len(&self) -> usize {
        self.n - self.k
    }

    fn check(&self, sys: &GalerkinSystem) -> Result<()> {
        if self.n != sys.n_modes() {
            return Err(validation(format!(
                "split was built for N = {}, system has {} modes",
                self.n,
                sys.n_modes()
            )));
        }
        Ok(())
    }

    fn check_head(&self, head: &DVector<f64>) -> Result<()> {
        if head.len() != self.k {
            return Err(validation(format!(
                "head vector has {} entries, split expects {}",
                head.len(),
                self.k
            )));
        }
        Ok(())
    }

    fn join(&self, head: &DVector<f64>, tail: &DVector<f64>) -> DVector<f64> {
        let mut v = DVector::zeros(self.n);
        v.rows_mut(0, self.k).copy_from(head);
        v.rows_mut(self.k, self.tail_len()).copy_from(tail);
        v
    }

    fn tail_of(&self, v: &DVector<f64>) -> DVector<f64> {
        v.rows(self.k, self.tail_len()).into_owned()
    }
}

/// Empirical operator norm of the tail monodromy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionEstimate {
    pub mu: f64,
    pub split: SplitIndex,
    pub iterations: usize,
    pub converged: bool,
}

/// Matrix of the tail monodromy, one homogeneous propagation per column.
pub fn tail_monodromy_matrix(sys: &GalerkinSystem, split: SplitIndex) -> Result<DMatrix<f64>> {
    split.check(sys)?;
    let m = split.tail_len();
    let columns: Vec<DVector<f64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut init = DVector::zeros(split.n);
            init[split.k + j] = 1.0;
            sys.advance(&init, false).map(|end| split.tail_of(&end))
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_columns(&columns))
}

/// Largest singular value of `j` by power iteration on `J^T J`.
pub fn spectral_norm(j: &DMatrix<f64>, seed: u64, max_iter: usize) -> (f64, usize, bool) {
    let m = j.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0) + 1e-3);
    let norm = v.norm();
    v /= norm;
    let mut previous: Option<f64> = None;
    for it in 1..=max_iter.max(1) {
        let w = j.tr_mul(&(j * &v));
        let rq = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            return (0.0, it, true);
        }
        if let Some(prev) = previous {
            if (rq - prev).abs() < 1e-8 * rq.abs() {
                // one more Rayleigh quotient on the refined iterate
                let v_next = &w / wn;
                let rq_next = v_next.dot(&j.tr_mul(&(j * &v_next)));
                return (rq.max(rq_next).max(0.0).sqrt(), it, true);
            }
        }
        previous = Some(rq);
        v = w / wn;
    }
    (previous.unwrap_or(0.0).max(0.0).sqrt(), max_iter, false)
}

/// Estimate `mu = ||J||_2` for the tail of `split`.
pub fn tail_monodromy_norm(
    sys: &GalerkinSystem,
    split: SplitIndex,
    seed: u64,
    max_iter: usize,
) -> Result<ContractionEstimate> {
    let j = tail_monodromy_matrix(sys, split)?;
    let (mu, iterations, converged) = spectral_norm(&j, seed, max_iter);
    Ok(ContractionEstimate {
        mu,
        split,
        iterations,
        converged,
    })
}

/// Smallest `k <= k_max` whose tail monodromy norm is at most `mu_target`.
pub fn choose_k(sys: &GalerkinSystem, mu_target: f64, k_max: usize, seed: u64) -> Result<SplitIndex> {
    choose_k_detailed(sys, mu_target, k_max, seed).map(|(split, _)| split)
}

/// [`choose_k`] together with every estimate computed during the scan.
pub fn choose_k_detailed(
    sys: &GalerkinSystem,
    mu_target: f64,
    k_max: usize,
    seed: u64,
) -> Result<(SplitIndex, Vec<ContractionEstimate>)> {
    if !(mu_target > 0.0 && mu_target < 1.0) {
        return Err(validation(format!("mu_target must lie in (0, 1), got {mu_target}")));
    }
    let n = sys.n_modes();
    let last = k_max.min(n - 1);
    let mut scanned = Vec::new();
    for k in 0..=last {
        let split = SplitIndex::new(k, n)?;
        let est = tail_monodromy_norm(sys, split, seed, 1000)?;
        scanned.push(est);
        if est.mu <= mu_target {
            return Ok((split, scanned));
        }
    }
    let best_mu = scanned.iter().map(|e| e.mu).fold(f64::INFINITY, f64::min);
    Err(Error::Capacity {
        k_max,
        mu_target,
        best_mu,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    FixedPoint,
    Direct,
}

/// Solution of the mixed initial/periodic problem.
#[derive(Debug, Clone)]
pub struct PeriodicSolution {
    pub trajectory: SpectralTrajectory,
    pub head: DVector<f64>,
    pub tail: DVector<f64>,
    pub residual: f64,
    pub method: SolveMethod,
    /// Contraction estimate used by the fixed-point stopping rule.
    pub mu: Option<f64>,
    /// Condition estimate of `I - J` from the direct solve.
    pub condition: Option<f64>,
    /// `|a^(m+1) - a^(m)|` per fixed-point iteration.
    pub step_norms: Vec<f64>,
}

impl PeriodicSolution {
    pub fn split(&self) -> SplitIndex {
        SplitIndex {
            k: self.head.len(),
            n: self.head.len() + self.tail.len(),
        }
    }
}

/// `max_{j > k} |u_j(T) - u_j(0)|`.
pub fn periodicity_residual(traj: &SpectralTrajectory, split: SplitIndex) -> f64 {
    let coeffs = traj.coeffs();
    let last = coeffs.ncols() - 1;
    (split.k..coeffs.nrows().min(split.n))
        .map(|j| (coeffs[(j, last)] - coeffs[(j, 0)]).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Known contraction estimate; estimated with `seed` when absent.
    pub mu: Option<f64>,
    pub seed: u64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 500,
            mu: None,
            seed: 0,
        }
    }
}

/// Banach iteration `a_II <- u_II(T)` started from `a_II = 0`.
pub fn solve_fixed_point(
    sys: &GalerkinSystem,
    head: &DVector<f64>,
    split: SplitIndex,
    opts: FixedPointOptions,
) -> Result<PeriodicSolution> {
    solve_fixed_point_from(sys, head, split, &DVector::zeros(split.tail_len()), opts)
}

/// Banach iteration from an arbitrary tail guess.
pub fn solve_fixed_point_from(
    sys: &GalerkinSystem,
    head: &DVector<f64>,
    split: SplitIndex,
    start: &DVector<f64>,
    opts: FixedPointOptions,
) -> Result<PeriodicSolution> {
    split.check(sys)?;
    split.check_head(head)?;
    if start.len() != split.tail_len() {
        return Err(validation("initial tail guess has the wrong length"));
    }
    if !(opts.tol > 0.0) {
        return Err(validation("fixed-point tolerance must be positive"));
    }
    let mu = match opts.mu {
        Some(mu) => mu,
        None => tail_monodromy_norm(sys, split, opts.seed, 1000)?.mu,
    };
    if !(mu < 1.0) {
        return Err(Error::NonContraction { step: mu, first: 1.0 });
    }
    // a-posteriori bound |a_m - a*| <= |step| / (1 - mu); also keep the residual below tol
    let threshold = if mu > 0.0 {
        opts.tol * ((1.0 - mu) / mu).min(1.0)
    } else {
        opts.tol
    };
    let mut tail = start.clone();
    let mut step_norms = Vec::new();
    let mut first_step: Option<f64> = None;
    let mut best = (f64::INFINITY, tail.clone());
    for _ in 0..opts.max_iter {
        let init = split.join(head, &tail);
        let end = sys.advance(&init, true)?;
        let next = split.tail_of(&end);
        let step = (&next - &tail).norm();
        step_norms.push(step);
        if step < best.0 {
            best = (step, tail.clone());
        }
        let first = *first_step.get_or_insert(step);
        if step > 2.0 * first && step > opts.tol {
            return Err(Error::NonContraction { step, first });
        }
        if step <= threshold {
            let trajectory = sys.propagate(&init, TimeSpan::full(sys.time_grid()))?;
            let residual = periodicity_residual(&trajectory, split);
            return Ok(PeriodicSolution {
                trajectory,
                head: head.clone(),
                tail,
                residual,
                method: SolveMethod::FixedPoint,
                mu: Some(mu),
                condition: None,
                step_norms,
            });
        }
        tail = next;
    }
    Err(Error::ToleranceNotMet {
        iterations: opts.max_iter,
        last_step: step_norms.last().copied().unwrap_or(f64::NAN),
        best_tail: best.1.as_slice().to_vec(),
    })
}

/// The linear tail problem `(I - J) a_II = c` for one system and split.
#[derive(Debug, Clone)]
pub struct TailSystem {
    split: SplitIndex,
    monodromy: DMatrix<f64>,
    lhs: DMatrix<f64>,
    singular_values: DVector<f64>,
}

impl TailSystem {
    pub fn build(sys: &GalerkinSystem, split: SplitIndex) -> Result<Self> {
        let monodromy = tail_monodromy_matrix(sys, split)?;
        let m = split.tail_len();
        let lhs = DMatrix::identity(m, m) - &monodromy;
        let mut singular_values = lhs.clone().svd(false, false).singular_values;
        singular_values
            .as_mut_slice()
            .sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        Ok(Self {
            split,
            monodromy,
            lhs,
            singular_values,
        })
    }

    pub fn split(&self) -> SplitIndex {
        self.split
    }

    pub fn monodromy(&self) -> &DMatrix<f64> {
        &self.monodromy
    }

    /// `I - J`.
    pub fn lhs(&self) -> &DMatrix<f64> {
        &self.lhs
    }

    /// 2-norm condition number of `I - J` (infinite when singular).
    pub fn condition(&self) -> f64 {
        let max = self.singular_values[0];
        let min = self.singular_values[self.singular_values.len() - 1];
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    /// Affine offset `c = u_II(T)` for initial data `(head, 0)`.
    pub fn offset(&self, sys: &GalerkinSystem, head: &DVector<f64>, with_forcing: bool) -> Result<DVector<f64>> {
        self.split.check_head(head)?;
        let init = self.split.join(head, &DVector::zeros(self.split.tail_len()));
        Ok(self.split.tail_of(&sys.advance(&init, with_forcing)?))
    }

    /// Relative residual of the least-squares solution of `(I - J) a = c`;
    /// near zero means the right-hand side lies in the range of `I - J`.
    pub fn consistency_residual(&self, rhs: &DVector<f64>) -> f64 {
        let svd = self.lhs.clone().svd(true, true);
        let cutoff = self.singular_values[0] * 1e-10;
        let x = svd
            .solve(rhs, cutoff)
            .unwrap_or_else(|_| DVector::zeros(rhs.len()));
        let r = &self.lhs * x - rhs;
        let scale = rhs.norm();
        if scale == 0.0 {
            0.0
        } else {
            r.norm() / scale
        }
    }

    /// Tail `a_II` for `head`; fails when `I - J` is near-singular.
    pub fn solve_tail(&self, sys: &GalerkinSystem, head: &DVector<f64>, with_forcing: bool) -> Result<DVector<f64>> {
        let condition = self.condition();
        if !(condition <= NEAR_SINGULAR_CONDITION) {
            return Err(Error::NearSingular { condition });
        }
        let c = self.offset(sys, head, with_forcing)?;
        self.lhs
            .clone()
            .lu()
            .solve(&c)
            .ok_or(Error::NearSingular { condition })
    }

    /// Full periodic solution for `head`.
    pub fn solve(&self, sys: &GalerkinSystem, head: &DVector<f64>, with_forcing: bool) -> Result<PeriodicSolution> {
        let tail = self.solve_tail(sys, head, with_forcing)?;
        let init = self.split.join(head, &tail);
        let trajectory = sys.propagate_with(&init, TimeSpan::full(sys.time_grid()), with_forcing)?;
        let residual = periodicity_residual(&trajectory, self.split);
        Ok(PeriodicSolution {
            trajectory,
            head: head.clone(),
            tail,
            residual,
            method: SolveMethod::Direct,
            mu: None,
            condition: Some(self.condition()),
            step_norms: Vec::new(),
        })
    }
}

/// Build `J` column by column and solve `(I - J) a_II = c` by LU.
pub fn solve_direct(sys: &GalerkinSystem, head: &DVector<f64>, split: SplitIndex) -> Result<PeriodicSolution> {
    split.check(sys)?;
    split.check_head(head)?;
    TailSystem::build(sys, split)?.solve(sys, head, true)
}
