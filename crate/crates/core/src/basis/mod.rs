//! Dirichlet eigenbasis of the symmetric operator
//! `L0 u = -(a u')' + b u' - (b u)' + c u` on `(0, length)`, together with the
//! quadrature inner product, projections and `L^q` norms built on top of it.
//!
//! In one dimension the two drift terms collapse to `-b' u`, so the discrete
//! operator is the symmetric three-point stencil for `-(a u')' + (c - b') u`
//! on interior nodes.

mod tridiag;

pub use tridiag::SymTridiagonal;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{validation, Error, Result};

/// Uniform grid on `[0, length]` with composite trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    length: f64,
    nodes: Vec<f64>,
    quad_weights: Vec<f64>,
}

impl SpatialGrid {
    pub fn new(length: f64, n_nodes: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(validation(format!("grid length must be positive, got {length}")));
        }
        if n_nodes < 3 {
            return Err(validation(format!("grid needs at least 3 nodes, got {n_nodes}")));
        }
        let h = length / (n_nodes - 1) as f64;
        let mut nodes: Vec<f64> = (0..n_nodes).map(|i| i as f64 * h).collect();
        nodes[n_nodes - 1] = length;
        let mut quad_weights = vec![h; n_nodes];
        quad_weights[0] = 0.5 * h;
        quad_weights[n_nodes - 1] = 0.5 * h;
        Ok(Self {
            length,
            nodes,
            quad_weights,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn spacing(&self) -> f64 {
        self.length / (self.n_nodes() - 1) as f64
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    /// Quadrature inner product of two node-sampled fields.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.quad_weights
            .iter()
            .zip(u.iter().zip(v))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.n_nodes() {
            return Err(validation(format!(
                "{what} has {len} samples, grid has {} nodes",
                self.n_nodes()
            )));
        }
        Ok(())
    }
}

/// Coefficients of `L0` sampled on grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl OperatorSpec {
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>) -> Self {
        Self { a, b, c }
    }

    pub fn constant(grid: &SpatialGrid, a: f64, b: f64, c: f64) -> Self {
        let n = grid.n_nodes();
        Self::new(vec![a; n], vec![b; n], vec![c; n])
    }

    /// The Dirichlet Laplacian `-u''`.
    pub fn laplacian(grid: &SpatialGrid) -> Self {
        Self::constant(grid, 1.0, 0.0, 0.0)
    }

    pub fn from_fns<A, B, C>(grid: &SpatialGrid, a: A, b: B, c: C) -> Self
    where
        A: Fn(f64) -> f64,
        B: Fn(f64) -> f64,
        C: Fn(f64) -> f64,
    {
        Self::new(grid.sample(a), grid.sample(b), grid.sample(c))
    }

    /// Smallest sample of the principal coefficient.
    pub fn ellipticity_floor(&self) -> f64 {
        self.a.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn validate(&self, grid: &SpatialGrid) -> Result<()> {
        grid.check_len(self.a.len(), "coefficient a")?;
        grid.check_len(self.b.len(), "coefficient b")?;
        grid.check_len(self.c.len(), "coefficient c")?;
        let all = self.a.iter().chain(&self.b).chain(&self.c);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(validation("operator coefficients must be finite"));
        }
        let floor = self.ellipticity_floor();
        if floor <= 0.0 {
            return Err(validation(format!(
                "ellipticity violated: min a(x) = {floor} must be positive"
            )));
        }
        Ok(())
    }

    /// Three-point discretization of `L0` on the interior nodes.
    pub fn discretize(&self, grid: &SpatialGrid) -> Result<SymTridiagonal> {
        self.validate(grid)?;
        let n = grid.n_nodes();
        let h = grid.spacing();
        let h2 = h * h;
        let m = n - 2;
        let half = |i: usize| 0.5 * (self.a[i] + self.a[i + 1]);
        let mut diag = Vec::with_capacity(m);
        let mut upper = Vec::with_capacity(m.saturating_sub(1));
        let mut lower = Vec::with_capacity(m.saturating_sub(1));
        for i in 1..n - 1 {
            let db = (self.b[i + 1] - self.b[i - 1]) / (2.0 * h);
            diag.push((half(i - 1) + half(i)) / h2 + self.c[i] - db);
            if i + 1 < n - 1 {
                // coupling of row i to i+1, and of row i+1 back to i
                upper.push(-half(i) / h2);
                lower.push(-0.5 * (self.a[i + 1] + self.a[i]) / h2);
            }
        }
        for (k, (u, l)) in upper.iter().zip(&lower).enumerate() {
            if (u - l).abs() > 1e-12 * u.abs().max(1.0) {
                return Err(Error::Internal(format!(
                    "discrete operator is not symmetric at interior row {k}"
                )));
            }
        }
        Ok(SymTridiagonal::new(diag, upper))
    }

    /// Apply the discrete operator to a node field; boundary entries are zero.
    pub fn apply(&self, grid: &SpatialGrid, u: &[f64]) -> Result<Vec<f64>> {
        grid.check_len(u.len(), "field")?;
        let t = self.discretize(grid)?;
        let n = grid.n_nodes();
        let interior = t.matvec(&u[1..n - 1]);
        let mut out = vec![0.0; n];
        out[1..n - 1].copy_from_slice(&interior);
        Ok(out)
    }
}

/// Eigenpairs `(lambda_j, X_j)` of `L0`, orthonormal in the quadrature inner
/// product. Column `j` of `modes` samples `X_{j+1}` on the grid nodes.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    lambdas: DVector<f64>,
    modes: DMatrix<f64>,
    grid: SpatialGrid,
}

fn check_resolution(grid: &SpatialGrid, n_modes: usize) -> Result<()> {
    if n_modes == 0 {
        return Err(validation("n_modes must be at least 1"));
    }
    let ratio = n_modes as f64 * PI * grid.spacing() / grid.length();
    if ratio > PI / 2.0 {
        return Err(Error::Resolution {
            mode: n_modes,
            ratio,
        });
    }
    Ok(())
}

/// Analytic sine basis of the Dirichlet Laplacian on `(0, length)`.
pub fn dirichlet_laplacian_basis(n_modes: usize, grid: &SpatialGrid) -> Result<EigenBasis> {
    check_resolution(grid, n_modes)?;
    let length = grid.length();
    let n = grid.n_nodes();
    let amp = (2.0 / length).sqrt();
    let lambdas = DVector::from_fn(n_modes, |k, _| ((k + 1) as f64 * PI / length).powi(2));
    let modes = DMatrix::from_fn(n, n_modes, |i, k| {
        if i == 0 || i == n - 1 {
            0.0
        } else {
            // integer form keeps sin(k pi i / (n-1)) free of node rounding
            let arg = PI * ((k + 1) * i) as f64 / (n - 1) as f64;
            amp * arg.sin()
        }
    });
    Ok(EigenBasis {
        lambdas,
        modes,
        grid: grid.clone(),
    })
}

/// Lowest `n_modes` eigenpairs of the finite-difference discretization of `L0`.
pub fn solve_operator_eigenproblem(
    op: &OperatorSpec,
    grid: &SpatialGrid,
    n_modes: usize,
) -> Result<EigenBasis> {
    check_resolution(grid, n_modes)?;
    let t = op.discretize(grid)?;
    let m = t.dim();
    let n = grid.n_nodes();
    let scale = grid.spacing().sqrt().recip();
    let mut lambdas = Vec::with_capacity(n_modes);
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(n_modes);
    for k in 0..n_modes {
        let lambda = t.eigenvalue(k);
        let start: Vec<f64> = (0..m)
            .map(|i| 1.0 + 0.5 * ((i * (k + 3)) as f64 * 0.618).sin())
            .collect();
        let mut v = t.eigenvector(lambda, &start);
        // re-orthogonalize against lower modes (interior weights are uniform)
        for _ in 0..2 {
            for prev in &vectors {
                let dot: f64 = prev.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(prev).for_each(|(x, p)| *x -= dot * p);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
        }
        // fix sign so the first significant entry is positive
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-8) {
            if *first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        lambdas.push(lambda);
        vectors.push(v);
    }
    let modes = DMatrix::from_fn(n, n_modes, |i, k| {
        if i == 0 || i == n - 1 {
            0.0
        } else {
            vectors[k][i - 1] * scale
        }
    });
    let basis = EigenBasis {
        lambdas: DVector::from_vec(lambdas),
        modes,
        grid: grid.clone(),
    };
    if basis.lambdas.as_slice().windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Internal("eigenvalues out of order".into()));
    }
    Ok(basis)
}

impl EigenBasis {
    pub fn n_modes(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &DVector<f64> {
        &self.lambdas
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// Node samples of `X_{j+1}`.
    pub fn mode(&self, j: usize) -> Vec<f64> {
        self.modes.column(j).iter().copied().collect()
    }

    /// Same eigenvectors with every eigenvalue moved by `delta`, i.e. the basis
    /// of `L0 + delta` (a constant potential does not change the modes).
    pub fn shift_spectrum(&self, delta: f64) -> Self {
        Self {
            lambdas: self.lambdas.add_scalar(delta),
            modes: self.modes.clone(),
            grid: self.grid.clone(),
        }
    }

    /// First `n_modes` eigenpairs.
    pub fn truncate(&self, n_modes: usize) -> Result<Self> {
        if n_modes == 0 || n_modes > self.n_modes() {
            return Err(validation(format!(
                "cannot truncate {} modes to {n_modes}",
                self.n_modes()
            )));
        }
        Ok(Self {
            lambdas: self.lambdas.rows(0, n_modes).into_owned(),
            modes: self.modes.columns(0, n_modes).into_owned(),
            grid: self.grid.clone(),
        })
    }

    /// Largest deviation of the quadrature Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let w = DVector::from_column_slice(self.grid.quad_weights());
        let weighted = DMatrix::from_fn(self.modes.nrows(), self.modes.ncols(), |i, j| {
            w[i] * self.modes[(i, j)]
        });
        let gram = self.modes.transpose() * weighted;
        let n = gram.nrows();
        (gram - DMatrix::identity(n, n)).abs().max()
    }

    pub fn project(&self, samples: &[f64]) -> Result<DVector<f64>> {
        self.grid.check_len(samples.len(), "field")?;
        let weighted = DVector::from_iterator(
            samples.len(),
            samples
                .iter()
                .zip(self.grid.quad_weights())
                .map(|(s, w)| s * w),
        );
        Ok(self.modes.tr_mul(&weighted))
    }

    pub fn synthesize(&self, coefficients: &[f64]) -> Result<Vec<f64>> {
        if coefficients.len() > self.n_modes() {
            return Err(validation(format!(
                "{} coefficients supplied for a basis of {} modes",
                coefficients.len(),
                self.n_modes()
            )));
        }
        let k = coefficients.len();
        let field = self.modes.columns(0, k) * DVector::from_column_slice(coefficients);
        Ok(field.as_slice().to_vec())
    }
}

/// `(sum_i w_i |f_i|^q)^(1/q)` with trapezoid weights.
pub fn lq_norm(slice: &[f64], q: f64, grid: &SpatialGrid) -> Result<f64> {
    check_exponent(q)?;
    grid.check_len(slice.len(), "slice")?;
    let sum: f64 = slice
        .iter()
        .zip(grid.quad_weights())
        .map(|(v, w)| w * v.abs().powf(q))
        .sum();
    Ok(sum.powf(q.recip()))
}

/// One spatial dimension requires `q > 3/2`; the boundary value is accepted.
pub fn check_exponent(q: f64) -> Result<()> {
    if !(q.is_finite() && q >= 1.5) {
        return Err(validation(format!("exponent q must be finite and >= 1.5, got {q}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> SpatialGrid {
        SpatialGrid::new(1.0, n).unwrap()
    }

    #[test]
    fn grid_weights_sum_to_length() {
        let g = SpatialGrid::new(2.5, 17).unwrap();
        let s: f64 = g.quad_weights().iter().sum();
        assert!((s - 2.5).abs() < 1e-12 * 2.5);
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(*g.nodes().last().unwrap(), 2.5);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(SpatialGrid::new(0.0, 10).is_err());
        assert!(SpatialGrid::new(1.0, 2).is_err());
    }

    #[test]
    fn laplacian_basis_spectrum() {
        let b = dirichlet_laplacian_basis(3, &unit_grid(101)).unwrap();
        let want = [9.8696, 39.478, 88.826];
        for (got, want) in b.lambdas().iter().zip(want) {
            assert!((got - want).abs() < 1e-3);
        }
        assert!(b.orthonormality_defect() < 1e-10);
    }

    #[test]
    fn single_mode_is_normalized() {
        let g = unit_grid(51);
        let b = dirichlet_laplacian_basis(1, &g).unwrap();
        let x1 = b.mode(0);
        assert!((g.inner(&x1, &x1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn laplacian_basis_rayleigh_on_length_two() {
        // finite-difference Rayleigh quotient of the analytic mode
        let g = SpatialGrid::new(2.0, 2001).unwrap();
        let b = dirichlet_laplacian_basis(2, &g).unwrap();
        let x1 = b.mode(0);
        let h = g.spacing();
        let mut num = 0.0;
        for i in 1..g.n_nodes() - 1 {
            let second = (x1[i + 1] - 2.0 * x1[i] + x1[i - 1]) / (h * h);
            num += h * (-second) * x1[i];
        }
        let rq = num / g.inner(&x1, &x1);
        let want = PI * PI / 4.0;
        assert!((b.lambdas()[0] - want).abs() < 1e-12);
        assert!((rq - want).abs() / want < 1e-6);
    }

    #[test]
    fn under_resolved_modes_rejected() {
        let g = unit_grid(11);
        assert!(dirichlet_laplacian_basis(5, &g).is_ok());
        assert!(matches!(
            dirichlet_laplacian_basis(6, &g),
            Err(Error::Resolution { .. })
        ));
        assert!(dirichlet_laplacian_basis(0, &g).is_err());
    }

    #[test]
    fn fd_laplacian_matches_analytic() {
        let g = unit_grid(1001);
        let b = solve_operator_eigenproblem(&OperatorSpec::laplacian(&g), &g, 10).unwrap();
        for k in 0..10 {
            let want = ((k + 1) as f64 * PI).powi(2);
            assert!((b.lambdas()[k] - want).abs() / want < 1e-3);
        }
        assert!(b.orthonormality_defect() < 1e-10);
        let n = g.n_nodes();
        for j in 0..10 {
            assert_eq!(b.modes()[(0, j)], 0.0);
            assert_eq!(b.modes()[(n - 1, j)], 0.0);
        }
    }

    #[test]
    fn constant_potential_shifts_spectrum() {
        let g = unit_grid(201);
        let base = solve_operator_eigenproblem(&OperatorSpec::laplacian(&g), &g, 6).unwrap();
        let shifted =
            solve_operator_eigenproblem(&OperatorSpec::constant(&g, 1.0, 0.0, 5.0), &g, 6).unwrap();
        for k in 0..6 {
            let d = shifted.lambdas()[k] - base.lambdas()[k];
            assert!((d - 5.0).abs() < 1e-9 * base.lambdas()[k], "k={k}: {d}");
        }
    }

    #[test]
    fn linear_drift_acts_as_unit_negative_potential() {
        let g = unit_grid(1001);
        let op = OperatorSpec::from_fns(&g, |_| 1.0, |x| x, |_| 0.0);
        let b = solve_operator_eigenproblem(&op, &g, 8).unwrap();
        for k in 0..8 {
            let want = ((k + 1) as f64 * PI).powi(2) - 1.0;
            assert!((b.lambdas()[k] - want).abs() / want < 1e-3);
        }
    }

    #[test]
    fn ellipticity_violation_rejected() {
        let g = unit_grid(21);
        let op = OperatorSpec::from_fns(&g, |x| x - 0.5, |_| 0.0, |_| 0.0);
        assert!(matches!(
            solve_operator_eigenproblem(&op, &g, 2),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn negative_eigenvalues_are_kept() {
        let g = unit_grid(201);
        let op = OperatorSpec::constant(&g, 1.0, 0.0, -30.0);
        let b = solve_operator_eigenproblem(&op, &g, 3).unwrap();
        assert!(b.lambdas()[0] < 0.0);
        assert!(b.lambdas()[1] > 0.0);
    }

    #[test]
    fn projection_examples() {
        let g = unit_grid(1001);
        let b = dirichlet_laplacian_basis(6, &g).unwrap();
        let c = b.project(&b.mode(2)).unwrap();
        for (j, v) in c.iter().enumerate() {
            let want = if j == 2 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-10);
        }
        let x1 = b.mode(0);
        let x2 = b.mode(1);
        let mix: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| 2.0 * a - b).collect();
        let c = b.project(&mix).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-10 && (c[1] + 1.0).abs() < 1e-10);
        assert!(c.iter().skip(2).all(|v| v.abs() < 1e-10));

        // closed-form sine coefficients of x(1-x)
        let c = b.project(&g.sample(|x| x * (1.0 - x))).unwrap();
        for k in 1..=6 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let want = 2.0 * 2f64.sqrt() * (1.0 - sign) / (k as f64 * PI).powi(3);
            assert!((c[k - 1] - want).abs() < 1e-6, "k={k}: {} vs {want}", c[k - 1]);
        }
        let k1 = 4.0 * 2f64.sqrt() / PI.powi(3);
        assert!((c[0] - k1).abs() / k1 < 1e-5);
        assert!(b.project(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn synthesize_examples() {
        let g = unit_grid(101);
        let b = dirichlet_laplacian_basis(4, &g).unwrap();
        assert!(b.synthesize(&[0.0; 4]).unwrap().iter().all(|v| *v == 0.0));
        let f = b.synthesize(&[1.0]).unwrap();
        assert!((f[50] - 2f64.sqrt()).abs() < 1e-14);
        assert!(b.synthesize(&[0.0; 5]).is_err());
    }

    #[test]
    fn lq_norm_examples() {
        let g = unit_grid(2001);
        let two = vec![2.0; g.n_nodes()];
        for q in [1.5, 2.0, 3.0, 7.5] {
            assert!((lq_norm(&two, q, &g).unwrap() - 2.0).abs() < 1e-12);
        }
        let s = g.sample(|x| 2f64.sqrt() * (PI * x).sin());
        assert!((lq_norm(&s, 2.0, &g).unwrap() - 1.0).abs() < 1e-10);
        let lin = g.sample(|x| x);
        assert!((lq_norm(&lin, 3.0, &g).unwrap() - 0.25f64.powf(1.0 / 3.0)).abs() < 1e-6);
        assert!(lq_norm(&two, 1.2, &g).is_err());
        assert!(lq_norm(&two, f64::INFINITY, &g).is_err());
    }
}
