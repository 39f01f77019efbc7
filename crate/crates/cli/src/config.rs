//! TOML run configuration. Every field has a default, so an empty file is a
//! valid configuration describing the 64x64 synthetic experiment.

use std::path::{Path, PathBuf};

use locsparse_core::admm::SolverParams;
use locsparse_core::dictionary::{build_kinetic_dictionary, normalize_columns, ColumnNorm, DecayGrid, InputCurve};
use locsparse_core::experiments::{default_regions, make_phantom, Phantom, Region, RegionShape, DEFAULT_SUPPORT_RTOL};
use locsparse_core::{Conv2dOperator, DictionaryMatrix, ForwardOperator, SpatialShape};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::matrix_io::read_matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub problem: ProblemConfig,
    pub dictionary: DictionaryConfig,
    pub operator: OperatorConfig,
    pub solver: SolverConfig,
    pub phantom: PhantomConfig,
    pub sweep: SweepConfig,
    pub analysis: AnalysisConfig,
    pub io: IoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            out: PathBuf::from("out"),
            problem: ProblemConfig::default(),
            dictionary: DictionaryConfig::default(),
            operator: OperatorConfig::default(),
            solver: SolverConfig::default(),
            phantom: PhantomConfig::default(),
            sweep: SweepConfig::default(),
            analysis: AnalysisConfig::default(),
            io: IoConfig::default(),
        }
    }
}

/// Image size and measurement noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub rows: usize,
    pub cols: usize,
    pub noise_sigma: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig { rows: 64, cols: 64, noise_sigma: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    /// `(t / tau0) exp(1 - t / tau0)`
    Gamma,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    Raw,
    L2,
    L1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionaryConfig {
    pub samples: usize,
    pub t_end: f64,
    pub curve: CurveKind,
    pub tau0: f64,
    pub decay_min: f64,
    pub decay_max: f64,
    pub atoms: usize,
    pub normalization: NormKind,
    /// 2-norm of every atom when `normalization = "l2"`; ignored otherwise.
    pub atom_norm: f64,
    /// Reads the `T x N` matrix from this file instead of building kinetic
    /// atoms; `normalization` and `atom_norm` still apply.
    pub matrix: Option<PathBuf>,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        DictionaryConfig {
            samples: 32,
            t_end: 8.0,
            curve: CurveKind::Gamma,
            tau0: 0.25,
            decay_min: 0.1,
            decay_max: 10.0,
            atoms: 8,
            normalization: NormKind::L2,
            atom_norm: 0.6,
            matrix: None,
        }
    }
}

impl DictionaryConfig {
    pub fn time_grid(&self) -> Result<Vec<f64>> {
        if self.samples < 2 || !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(CliError::Config("dictionary needs samples >= 2 and t_end > 0".into()));
        }
        let h = self.t_end / (self.samples - 1) as f64;
        Ok((0..self.samples).map(|k| k as f64 * h).collect())
    }

    pub fn build(&self) -> Result<DictionaryMatrix> {
        let raw = match &self.matrix {
            Some(path) => DictionaryMatrix::from_values(read_matrix(path)?)
                .map_err(|e| CliError::format(path, e.to_string()))?,
            None => {
                let grid = self.time_grid()?;
                let curve = match self.curve {
                    CurveKind::Gamma => InputCurve::gamma_variate(&grid, self.tau0),
                    CurveKind::Constant => InputCurve::constant(grid.len(), 1.0),
                }
                .map_err(config)?;
                let decays = DecayGrid::log_spaced(self.decay_min, self.decay_max, self.atoms).map_err(config)?;
                build_kinetic_dictionary(&curve, &decays, &grid).map_err(config)?
            }
        };
        let grid = raw.time_grid().to_vec();
        let b = match self.normalization {
            NormKind::Raw => raw,
            NormKind::L2 => normalize_columns(&raw, ColumnNorm::L2)?,
            NormKind::L1 => normalize_columns(&raw, ColumnNorm::L1)?,
        };
        let s = self.atom_norm;
        if !(s > 0.0 && s.is_finite()) {
            return Err(CliError::Config(format!("dictionary.atom_norm must be positive, got {s}")));
        }
        if self.normalization != NormKind::L2 || s == 1.0 {
            return Ok(b);
        }
        DictionaryMatrix::new(b.values() * s, grid).map_err(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    /// Periodic convolution with a normalized Gaussian kernel.
    Conv2d,
    Identity,
    /// Matrix read from `operator.matrix`.
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConfig {
    pub kind: OperatorKind,
    pub kernel_size: usize,
    pub kernel_sigma: f64,
    pub matrix: Option<PathBuf>,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            kind: OperatorKind::Conv2d,
            kernel_size: 5,
            kernel_sigma: 1.0,
            matrix: None,
        }
    }
}

/// Mirrors [`SolverParams`]; defaults are the same.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub v_cap: f64,
    pub beta: f64,
    pub lambda0: f64,
    pub mu0: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub tau_incr: f64,
    pub tau_decr: f64,
    pub max_iter: usize,
    pub adapt_freeze_iter: usize,
    pub penalty_range: f64,
    /// Relative threshold for the support passed to the second pass.
    pub support_rtol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let p = SolverParams::default();
        SolverConfig {
            v_cap: p.v_cap,
            beta: p.beta,
            lambda0: p.lambda0,
            mu0: p.mu0,
            eps_abs: p.eps_abs,
            eps_rel: p.eps_rel,
            eta1: p.eta1,
            eta2: p.eta2,
            tau_incr: p.tau_incr,
            tau_decr: p.tau_decr,
            max_iter: p.max_iter,
            adapt_freeze_iter: p.adapt_freeze_iter,
            penalty_range: p.penalty_range,
            support_rtol: DEFAULT_SUPPORT_RTOL,
        }
    }
}

impl SolverConfig {
    pub fn params(&self) -> SolverParams {
        SolverParams {
            v_cap: self.v_cap,
            beta: self.beta,
            lambda0: self.lambda0,
            mu0: self.mu0,
            eps_abs: self.eps_abs,
            eps_rel: self.eps_rel,
            eta1: self.eta1,
            eta2: self.eta2,
            tau_incr: self.tau_incr,
            tau_decr: self.tau_decr,
            max_iter: self.max_iter,
            adapt_freeze_iter: self.adapt_freeze_iter,
            penalty_range: self.penalty_range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ShapeConfig {
    Disk { center: [f64; 2], radius: f64 },
    Annulus { center: [f64; 2], inner: f64, outer: f64 },
    Rectangle { row0: usize, col0: usize, row1: usize, col1: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub shape: ShapeConfig,
    pub atom: usize,
    pub value: f64,
}

impl RegionConfig {
    fn region(&self) -> Region {
        let shape = match self.shape {
            ShapeConfig::Disk { center, radius } => RegionShape::Disk { center: (center[0], center[1]), radius },
            ShapeConfig::Annulus { center, inner, outer } => RegionShape::Annulus {
                center: (center[0], center[1]),
                inner,
                outer,
            },
            ShapeConfig::Rectangle { row0, col0, row1, col1 } => RegionShape::Rectangle { row0, col0, row1, col1 },
        };
        Region {
            shape,
            basis_index: self.atom,
            value: self.value,
        }
    }
}

/// Without `regions` the phantom is a centred disk inside an annulus.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub regions: Option<Vec<RegionConfig>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Strictly decreasing.
    pub v_caps: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { v_caps: vec![1e-1, 1e-2, 1e-3, 1e-5, 1e-7] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub source_tol: f64,
    pub source_max_iter: usize,
    /// Atoms within this distance of a row maximum of `AᵀWB` count as tied.
    pub tie_tol: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            source_tol: 1e-6,
            source_max_iter: 500,
            tie_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixFormat {
    Lspm,
    Csv,
}

impl MatrixFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MatrixFormat::Lspm => "lspm",
            MatrixFormat::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    /// Format of matrices written to `out`.
    pub format: MatrixFormat,
    /// Measured data `W`; synthesized from the phantom when absent.
    pub data: Option<PathBuf>,
    /// Coefficients for `forward`; the phantom when absent.
    pub coefficients: Option<PathBuf>,
}

impl Default for IoConfig {
    fn default() -> Self {
        IoConfig {
            format: MatrixFormat::Lspm,
            data: None,
            coefficients: None,
        }
    }
}

fn config(e: locsparse_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Fails for seeds above `i64::MAX`, which TOML integers cannot hold.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn shape(&self) -> SpatialShape {
        SpatialShape::new(self.problem.rows, self.problem.cols)
    }

    /// Checks everything the commands need up front so bad settings fail
    /// before any work is done.
    pub fn validate(&self) -> Result<()> {
        if self.problem.rows == 0 || self.problem.cols == 0 {
            return Err(CliError::Config("problem.rows and problem.cols must be positive".into()));
        }
        if !(self.problem.noise_sigma >= 0.0 && self.problem.noise_sigma.is_finite()) {
            return Err(CliError::Config("problem.noise_sigma must be finite and >= 0".into()));
        }
        let b = self.dictionary.build()?;
        self.solver.params().validate().map_err(config)?;
        if !(self.solver.support_rtol > 0.0 && self.solver.support_rtol < 1.0) {
            return Err(CliError::Config("solver.support_rtol must lie in (0, 1)".into()));
        }
        let caps = &self.sweep.v_caps;
        if caps.is_empty() || caps.iter().any(|v| !(*v > 0.0 && v.is_finite())) || caps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(CliError::Config("sweep.v_caps must be positive and strictly decreasing".into()));
        }
        let a = &self.analysis;
        if !(a.source_tol > 0.0) || a.source_max_iter == 0 || !(a.tie_tol >= 0.0) {
            return Err(CliError::Config("analysis needs source_tol > 0, source_max_iter > 0, tie_tol >= 0".into()));
        }
        if self.operator.kind != OperatorKind::Dense {
            self.operator()?;
        } else if self.operator.matrix.is_none() {
            return Err(CliError::Config("operator.kind = \"dense\" needs operator.matrix".into()));
        }
        self.phantom(b.atoms())?;
        Ok(())
    }

    pub fn operator(&self) -> Result<ForwardOperator> {
        let shape = self.shape();
        let op = &self.operator;
        match op.kind {
            OperatorKind::Conv2d => {
                if op.kernel_size == 0 || op.kernel_size > shape.m1.min(shape.m2) {
                    return Err(CliError::Config(format!(
                        "operator.kernel_size must lie in 1..={}",
                        shape.m1.min(shape.m2)
                    )));
                }
                Ok(ForwardOperator::Conv2d(
                    Conv2dOperator::gaussian(op.kernel_size, op.kernel_sigma, shape).map_err(config)?,
                ))
            }
            OperatorKind::Identity => Ok(ForwardOperator::identity(shape.pixels())),
            OperatorKind::Dense => {
                let path = op
                    .matrix
                    .as_ref()
                    .ok_or_else(|| CliError::Config("operator.kind = \"dense\" needs operator.matrix".into()))?;
                let m = read_matrix(path)?;
                if m.ncols() != shape.pixels() {
                    return Err(CliError::Config(format!(
                        "operator matrix has {} columns, the image has {} pixels",
                        m.ncols(),
                        shape.pixels()
                    )));
                }
                Ok(ForwardOperator::dense(m).map_err(config)?)
            }
        }
    }

    pub fn phantom(&self, atoms: usize) -> Result<Phantom> {
        let shape = self.shape();
        let regions = match &self.phantom.regions {
            Some(rs) => rs.iter().map(RegionConfig::region).collect(),
            None => default_regions(shape),
        };
        make_phantom(shape, atoms, &regions).map_err(config)
    }
}
