//! JSON run configuration.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Deserialize;

use super::output::read_matrix_csv;
use super::CliError;
use crate::basis::{dirichlet_laplacian_basis, solve_operator_eigenproblem, EigenBasis, OperatorSpec, SpatialGrid};
use crate::galerkin::TimeGrid;
use crate::periodic::DEFAULT_MU_TARGET;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub operator: OperatorConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub perturbation: FieldSource,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_bound_m")]
    pub bound_m: f64,
    #[serde(default)]
    pub forcing: FieldSource,
    /// Prescribed head coefficients; missing entries are zero.
    #[serde(default)]
    pub head: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub identify: Option<IdentifyBlock>,
    #[serde(default)]
    pub example34: Option<Example34Block>,
    #[serde(default)]
    pub output: OutputNames,
    /// Directory that relative file paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_modes() -> usize {
    16
}

fn default_q() -> f64 {
    2.0
}

fn default_bound_m() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub length: f64,
    pub n_nodes: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            length: 1.0,
            n_nodes: 201,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Constant(f64),
    Samples(Vec<f64>),
}

impl Coefficient {
    fn samples(&self, grid: &SpatialGrid, name: &str) -> Result<Vec<f64>, CliError> {
        match self {
            Coefficient::Constant(v) => Ok(vec![*v; grid.n_nodes()]),
            Coefficient::Samples(s) if s.len() == grid.n_nodes() => Ok(s.clone()),
            Coefficient::Samples(s) => Err(CliError::Config(format!(
                "operator.{name} has {} samples, grid has {} nodes",
                s.len(),
                grid.n_nodes()
            ))),
        }
    }

    fn constant(&self) -> Option<f64> {
        match self {
            Coefficient::Constant(v) => Some(*v),
            Coefficient::Samples(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    /// Finite-difference eigenvectors of the configured operator.
    FiniteDifference,
    /// Sine basis; needs `a = 1` and constant `b`, `c`.
    Analytic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    #[serde(default = "one")]
    pub a: Coefficient,
    #[serde(default = "zero")]
    pub b: Coefficient,
    #[serde(default = "zero")]
    pub c: Coefficient,
    #[serde(default = "default_basis")]
    pub basis: BasisKind,
}

fn one() -> Coefficient {
    Coefficient::Constant(1.0)
}

fn zero() -> Coefficient {
    Coefficient::Constant(0.0)
}

fn default_basis() -> BasisKind {
    BasisKind::FiniteDifference
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            a: one(),
            b: zero(),
            c: zero(),
            basis: default_basis(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub horizon: f64,
    pub n_steps: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            n_steps: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum KSetting {
    Fixed(usize),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "auto_k")]
    pub k: KSetting,
    #[serde(default = "default_mu_target")]
    pub mu_target: f64,
    /// Largest k tried by the automatic scan (default N - 1).
    #[serde(default)]
    pub k_max: Option<usize>,
}

fn auto_k() -> KSetting {
    KSetting::Auto(AutoTag::Auto)
}

fn default_mu_target() -> f64 {
    DEFAULT_MU_TARGET
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            k: auto_k(),
            mu_target: default_mu_target(),
            k_max: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeProfile {
    #[default]
    Constant,
    Linear,
}

/// `amplitude * sin(mode * pi * x / length) * tau(t)` with `tau = 1` or `tau = t`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeTerm {
    pub mode: usize,
    pub amplitude: f64,
    #[serde(default)]
    pub time: TimeProfile,
}

impl ModeTerm {
    pub fn eval(&self, x: f64, t: f64, length: f64) -> f64 {
        let tau = match self.time {
            TimeProfile::Constant => 1.0,
            TimeProfile::Linear => t,
        };
        self.amplitude * (self.mode as f64 * PI * x / length).sin() * tau
    }
}

/// Space-time field: zero, constant, a sum of sine terms, or a CSV file
/// with one row per grid node and one column per time node.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSource {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    Modes {
        terms: Vec<ModeTerm>,
    },
    File {
        path: PathBuf,
    },
}

impl FieldSource {
    pub fn sample(&self, grid: &SpatialGrid, tg: &TimeGrid, base_dir: &Path) -> Result<DMatrix<f64>, CliError> {
        let (n, m) = (grid.n_nodes(), tg.n_nodes());
        match self {
            FieldSource::Zero => Ok(DMatrix::zeros(n, m)),
            FieldSource::Constant { value } => Ok(DMatrix::from_element(n, m, *value)),
            FieldSource::Modes { terms } => {
                if terms.iter().any(|t| t.mode == 0) {
                    return Err(CliError::Config("mode numbers start at 1".into()));
                }
                Ok(DMatrix::from_fn(n, m, |i, j| {
                    terms
                        .iter()
                        .map(|term| term.eval(grid.nodes()[i], tg.times()[j], grid.length()))
                        .sum()
                }))
            }
            FieldSource::File { path } => {
                let full = base_dir.join(path);
                if !full.is_file() {
                    return Err(CliError::Config(format!("file {} does not exist", full.display())));
                }
                let values = read_matrix_csv(&full)?;
                if values.shape() != (n, m) {
                    return Err(CliError::Config(format!(
                        "{} is {}x{}, expected {n}x{m}",
                        full.display(),
                        values.nrows(),
                        values.ncols()
                    )));
                }
                Ok(values)
            }
        }
    }

    fn check_file(&self, base_dir: &Path) -> Result<(), CliError> {
        if let FieldSource::File { path } = self {
            let full = base_dir.join(path);
            if !full.is_file() {
                return Err(CliError::Config(format!("file {} does not exist", full.display())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    FixedPoint,
    Direct,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    #[serde(default = "default_method")]
    pub method: MethodChoice,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_method() -> MethodChoice {
    MethodChoice::FixedPoint
}

fn default_tol() -> f64 {
    1e-9
}

fn default_max_iter() -> usize {
    500
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            method: default_method(),
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSource {
    /// CSV with one row per window node and one column per time node.
    File { path: PathBuf },
    /// Synthetic data from a known perturbation and head.
    Twin {
        e_true: FieldSource,
        #[serde(default)]
        a_true: Vec<f64>,
        #[serde(default)]
        noise: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub x_min: f64,
    pub x_max: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamGridConfig {
    pub n_ex: usize,
    pub n_et: usize,
}

impl Default for ParamGridConfig {
    fn default() -> Self {
        Self { n_ex: 5, n_et: 5 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifyBlock {
    pub target: TargetSource,
    #[serde(default)]
    pub window: Option<WindowConfig>,
    #[serde(default)]
    pub parameterization: ParamGridConfig,
    /// Constant initial value of every e-parameter.
    #[serde(default)]
    pub initial_e: f64,
    /// Hold the head at `a_true` (twin targets only).
    #[serde(default)]
    pub fix_head: bool,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    #[serde(default = "default_identify_tol")]
    pub tol: f64,
    #[serde(default)]
    pub tikhonov: f64,
}

fn default_step() -> f64 {
    0.1
}

fn default_max_outer() -> usize {
    200
}

fn default_fd_step() -> f64 {
    1e-4
}

fn default_identify_tol() -> f64 {
    1e-16
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example34Block {
    /// Index of the neutral mode: the potential is chosen as `(k pi)^2`.
    pub k: usize,
    pub forcing: Vec<ModeTerm>,
    /// Head for the solvable split; defaults to zeros.
    #[serde(default)]
    pub head: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputNames {
    #[serde(default = "n_trajectory")]
    pub trajectory: String,
    #[serde(default = "n_summary")]
    pub summary: String,
    #[serde(default = "n_field")]
    pub field: String,
    #[serde(default = "n_choose_k")]
    pub choose_k: String,
    #[serde(default = "n_result")]
    pub identify_result: String,
    #[serde(default = "n_e_params")]
    pub e_params: String,
    #[serde(default = "n_example34")]
    pub example34: String,
}

fn n_trajectory() -> String {
    "trajectory.csv".into()
}
fn n_summary() -> String {
    "summary.json".into()
}
fn n_field() -> String {
    "field.csv".into()
}
fn n_choose_k() -> String {
    "choose_k.json".into()
}
fn n_result() -> String {
    "identify_result.json".into()
}
fn n_e_params() -> String {
    "e_params.csv".into()
}
fn n_example34() -> String {
    "example34.json".into()
}

impl Default for OutputNames {
    fn default() -> Self {
        Self {
            trajectory: n_trajectory(),
            summary: n_summary(),
            field: n_field(),
            choose_k: n_choose_k(),
            identify_result: n_result(),
            e_params: n_e_params(),
            example34: n_example34(),
        }
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Config(msg.into()))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("malformed config: {e}")))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed config: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks that do not need any numerical work.
    pub fn validate(&self) -> Result<(), CliError> {
        ensure(
            self.schema_version == SCHEMA_VERSION,
            format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version),
        )?;
        ensure(self.grid.length.is_finite() && self.grid.length > 0.0, "grid.length must be positive")?;
        ensure(self.grid.n_nodes >= 3, "grid.n_nodes must be at least 3")?;
        ensure(self.time.horizon.is_finite() && self.time.horizon > 0.0, "time.horizon must be positive")?;
        ensure(self.time.n_steps >= 1, "time.n_steps must be at least 1")?;
        ensure(self.modes >= 1, "modes must be at least 1")?;
        ensure(
            self.split.mu_target > 0.0 && self.split.mu_target < 1.0,
            "split.mu_target must lie in (0, 1)",
        )?;
        if let KSetting::Fixed(k) = self.split.k {
            ensure(k < self.modes, format!("split.k = {k} must be below modes = {}", self.modes))?;
        }
        ensure(self.q.is_finite() && self.q >= 1.5, "q must be finite and >= 1.5")?;
        ensure(self.bound_m.is_finite() && self.bound_m > 0.0, "bound_m must be positive")?;
        ensure(self.head.iter().all(|v| v.is_finite()), "head must be finite")?;
        ensure(
            self.solve.tol > 0.0 && self.solve.max_iter >= 1,
            "solve.tol must be positive and solve.max_iter at least 1",
        )?;
        self.perturbation.check_file(&self.base_dir)?;
        self.forcing.check_file(&self.base_dir)?;
        if self.operator.basis == BasisKind::Analytic {
            ensure(
                self.operator.a.constant() == Some(1.0)
                    && self.operator.b.constant().is_some()
                    && self.operator.c.constant().is_some(),
                "analytic basis requires a = 1 and constant b, c",
            )?;
        }
        if let Some(id) = &self.identify {
            if let TargetSource::File { path } = &id.target {
                let full = self.base_dir.join(path);
                ensure(full.is_file(), format!("target file {} does not exist", full.display()))?;
            }
            if let TargetSource::Twin { e_true, noise, .. } = &id.target {
                e_true.check_file(&self.base_dir)?;
                ensure(noise.is_finite() && *noise >= 0.0, "twin noise must be nonnegative")?;
            }
            ensure(
                id.step > 0.0 && id.fd_step > 0.0 && id.tol >= 0.0 && id.tikhonov >= 0.0,
                "identify step sizes must be positive",
            )?;
            ensure(
                id.parameterization.n_ex >= 1 && id.parameterization.n_et >= 1,
                "parameterization needs at least one node per axis",
            )?;
        }
        if let Some(ex) = &self.example34 {
            ensure(ex.k >= 1, "example34.k must be at least 1")?;
            ensure(ex.k < self.modes, "example34.k must be below modes")?;
            ensure(ex.head.len() <= ex.k, "example34.head is longer than k")?;
            ensure(ex.forcing.iter().all(|t| t.mode >= 1), "mode numbers start at 1")?;
        }
        Ok(())
    }

    pub fn spatial_grid(&self) -> Result<SpatialGrid, CliError> {
        Ok(SpatialGrid::new(self.grid.length, self.grid.n_nodes)?)
    }

    pub fn time_grid(&self) -> Result<TimeGrid, CliError> {
        Ok(TimeGrid::new(self.time.horizon, self.time.n_steps)?)
    }

    pub fn eigen_basis(&self, grid: &SpatialGrid) -> Result<EigenBasis, CliError> {
        let op = &self.operator;
        match op.basis {
            BasisKind::FiniteDifference => {
                let spec = OperatorSpec::new(
                    op.a.samples(grid, "a")?,
                    op.b.samples(grid, "b")?,
                    op.c.samples(grid, "c")?,
                );
                Ok(solve_operator_eigenproblem(&spec, grid, self.modes)?)
            }
            BasisKind::Analytic => {
                // constant b contributes nothing; constant c shifts the spectrum
                let c = op.c.constant().unwrap_or(0.0);
                Ok(dirichlet_laplacian_basis(self.modes, grid)?.shift_spectrum(c))
            }
        }
    }

    /// Head of length `k`, zero-padded.
    pub fn head_for(&self, k: usize) -> Result<nalgebra::DVector<f64>, CliError> {
        ensure(
            self.head.len() <= k,
            format!("head has {} entries but split k = {k}", self.head.len()),
        )?;
        let mut v = nalgebra::DVector::zeros(k);
        for (i, h) in self.head.iter().enumerate() {
            v[i] = *h;
        }
        Ok(v)
    }
}
