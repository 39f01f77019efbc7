use std::path::{Path, PathBuf};

use locsparse_core::admm::{debias_on_support, solve, SolveReport, StopReason};
use locsparse_core::dictionary::{check_scaling_condition, mutual_incoherence, ScalingViolation};
use locsparse_core::experiments::{sweep_v, synthesize, SweepTable};
use locsparse_core::recovery::{check_source_condition_with, extract_support, predict_asymptotic_support};
use locsparse_core::{add_gaussian_noise, apply_forward, CoefficientMatrix, DataMatrix, DictionaryMatrix, ForwardOperator};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::matrix_io::{read_matrix, write_atomic, write_matrix};

pub const SWEEP_HEADER: [&str; 6] = [
    "v_cap",
    "wrong_pixel_percent",
    "weighted_percent",
    "false_positive_percent",
    "iterations",
    "converged",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GenDict,
    GenPhantom,
    Forward,
    Solve { two_pass: bool },
    Sweep,
    Analyze,
}

/// Runs `cmd` and returns the files it wrote.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    match cmd {
        Command::GenDict => gen_dict(cfg),
        Command::GenPhantom => gen_phantom(cfg),
        Command::Forward => forward(cfg),
        Command::Solve { two_pass } => solve_cmd(cfg, two_pass),
        Command::Sweep => sweep(cfg),
        Command::Analyze => analyze(cfg),
    }
}

fn out_path(cfg: &RunConfig, stem: &str) -> PathBuf {
    cfg.out.join(format!("{stem}.{}", cfg.io.format.extension()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn gen_dict(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let b = cfg.dictionary.build()?;
    let path = out_path(cfg, "dictionary");
    write_matrix(&path, b.values())?;
    Ok(vec![path])
}

fn gen_phantom(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let b = cfg.dictionary.build()?;
    let ph = cfg.phantom(b.atoms())?;
    let path = out_path(cfg, "phantom");
    write_matrix(&path, ph.u_true.values())?;
    Ok(vec![path])
}

struct Setup {
    a: ForwardOperator,
    b: DictionaryMatrix,
}

fn setup(cfg: &RunConfig) -> Result<Setup> {
    Ok(Setup {
        a: cfg.operator()?,
        b: cfg.dictionary.build()?,
    })
}

/// `io.data` if given, otherwise the phantom pushed through the model with
/// `problem.noise_sigma` noise.
fn data(cfg: &RunConfig, s: &Setup) -> Result<DataMatrix> {
    match &cfg.io.data {
        Some(path) => {
            let w = read_matrix(path)?;
            if w.shape() != (s.a.out_dim(), s.b.samples()) {
                return Err(CliError::format(
                    path,
                    format!("data is {}x{}, expected {}x{}", w.nrows(), w.ncols(), s.a.out_dim(), s.b.samples()),
                ));
            }
            DataMatrix::new(w).map_err(|e| CliError::format(path, e.to_string()))
        }
        None => {
            let ph = cfg.phantom(s.b.atoms())?;
            Ok(synthesize(&s.a, &s.b, &ph, cfg.problem.noise_sigma, cfg.seed)?)
        }
    }
}

fn forward(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let s = setup(cfg)?;
    let u = match &cfg.io.coefficients {
        Some(path) => CoefficientMatrix::new(read_matrix(path)?, cfg.shape()).map_err(|e| CliError::format(path, e.to_string()))?,
        None => cfg.phantom(s.b.atoms())?.u_true,
    };
    let w = add_gaussian_noise(&apply_forward(&s.a, &u, &s.b)?, cfg.problem.noise_sigma, cfg.seed)?;
    let path = out_path(cfg, "data");
    write_matrix(&path, w.values())?;
    Ok(vec![path])
}

#[derive(Debug, Serialize)]
pub struct ReportJson {
    pub iterations: usize,
    pub stop_reason: &'static str,
    pub objective: f64,
    /// `[||R1||, ||R2||, ||S||]` per iteration.
    pub residual_history: Vec<[f64; 3]>,
    pub penalty_history: Vec<PenaltyJson>,
    pub final_tolerances: [f64; 3],
}

#[derive(Debug, Serialize)]
pub struct PenaltyJson {
    pub iter: usize,
    pub lambda: f64,
    pub mu: f64,
}

impl From<&SolveReport> for ReportJson {
    fn from(r: &SolveReport) -> Self {
        ReportJson {
            iterations: r.iterations,
            stop_reason: match r.stop_reason {
                StopReason::Converged => "converged",
                StopReason::MaxIter => "max_iter",
            },
            objective: r.objective,
            residual_history: r.residual_history.iter().map(|x| [x.r1, x.r2, x.s]).collect(),
            penalty_history: r
                .penalty_history
                .iter()
                .map(|p| PenaltyJson { iter: p.iter, lambda: p.lambda, mu: p.mu })
                .collect(),
            final_tolerances: [r.final_tolerances.eps_pri1, r.final_tolerances.eps_pri2, r.final_tolerances.eps_dual],
        }
    }
}

#[derive(Debug, Serialize)]
struct SolveJson {
    seed: u64,
    v_cap: f64,
    beta: f64,
    solve: ReportJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    debias: Option<ReportJson>,
}

fn solve_cmd(cfg: &RunConfig, two_pass: bool) -> Result<Vec<PathBuf>> {
    let s = setup(cfg)?;
    let w = data(cfg, &s)?;
    let params = cfg.solver.params();
    let (u, report) = solve(&s.a, &s.b, &w, &params)?;
    let mut written = vec![out_path(cfg, "coefficients")];
    write_matrix(&written[0], u.values())?;
    let debias = if two_pass {
        let support = extract_support(u.values(), cfg.solver.support_rtol)?;
        let (ud, rep) = debias_on_support(&s.a, &s.b, &w, &support, &params)?;
        let path = out_path(cfg, "coefficients_debiased");
        write_matrix(&path, ud.values())?;
        written.push(path);
        Some(ReportJson::from(&rep))
    } else {
        None
    };
    let path = cfg.out.join("report.json");
    write_json(
        &path,
        &SolveJson {
            seed: cfg.seed,
            v_cap: params.v_cap,
            beta: params.beta,
            solve: ReportJson::from(&report),
            debias,
        },
    )?;
    written.push(path);
    Ok(written)
}

pub fn sweep_csv(table: &SweepTable) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER).unwrap();
    for r in &table.rows {
        w.write_record([
            format!("{:?}", r.v_cap),
            format!("{:?}", r.wrong_pixel_percent),
            format!("{:?}", r.weighted_percent),
            format!("{:?}", r.false_positive_percent),
            r.iterations.to_string(),
            r.converged.to_string(),
        ])
        .unwrap();
    }
    w.into_inner().unwrap()
}

pub fn sweep_table(cfg: &RunConfig) -> Result<SweepTable> {
    let s = setup(cfg)?;
    let ph = cfg.phantom(s.b.atoms())?;
    Ok(sweep_v(&s.a, &s.b, &ph, cfg.problem.noise_sigma, cfg.seed, &cfg.sweep.v_caps, &cfg.solver.params())?)
}

fn sweep(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let table = sweep_table(cfg)?;
    let path = cfg.out.join("sweep.csv");
    write_atomic(&path, &sweep_csv(&table))?;
    Ok(vec![path])
}

#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ViolationJson {
    Norm { column: usize, norm: f64 },
    InnerProduct { used: usize, other: usize, value: f64 },
}

#[derive(Debug, Serialize)]
struct SourceJson {
    satisfied: bool,
    residual: f64,
    iterations: usize,
    max_iter: usize,
}

#[derive(Debug, Serialize)]
struct AnalysisJson {
    incoherence: f64,
    /// Atoms used by the phantom, the support the scaling check refers to.
    support_atoms: Vec<usize>,
    scaling_satisfied: bool,
    scaling_violations: Vec<ViolationJson>,
    source_condition: SourceJson,
    /// Per pixel, the atoms maximizing the row of `AᵀWB`.
    predicted_support: Vec<Vec<usize>>,
}

fn analyze(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let s = setup(cfg)?;
    let ph = cfg.phantom(s.b.atoms())?;
    let w = data(cfg, &s)?;
    let incoherence = mutual_incoherence(&s.b)?;
    let mut used: Vec<usize> = ph.labels.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let scaling = check_scaling_condition(&s.b, &used)?;
    let a = &cfg.analysis;
    let source = check_source_condition_with(ph.u_true.values(), &s.a, &s.b, a.source_tol, a.source_max_iter)?;
    let scale = (s.a.adjoint(w.values())? * s.b.values()).amax();
    let predicted = predict_asymptotic_support(&s.a, &w, &s.b, a.tie_tol * scale.max(f64::MIN_POSITIVE))?;
    let report = AnalysisJson {
        incoherence,
        support_atoms: used,
        scaling_satisfied: scaling.satisfied,
        scaling_violations: scaling
            .violations
            .iter()
            .map(|v| match *v {
                ScalingViolation::Norm { column, norm } => ViolationJson::Norm { column, norm },
                ScalingViolation::InnerProduct { used, other, value } => ViolationJson::InnerProduct { used, other, value },
            })
            .collect(),
        source_condition: SourceJson {
            satisfied: source.satisfied,
            residual: source.residual,
            iterations: source.iterations,
            max_iter: a.source_max_iter,
        },
        predicted_support: predicted.active,
    };
    let path = cfg.out.join("analysis.json");
    write_json(&path, &report)?;
    Ok(vec![path])
}
