//! Kinetic-modelling dictionaries.
//!
//! Each atom is the input curve convolved with an exponential decay,
//! `b_j(t) = ∫_0^t C_A(s) exp(-k_j (t - s)) ds`, sampled on the time grid.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{bail, Error, Result};
use crate::model::{DictionaryMatrix, Mat, Normalization};

/// Arterial input curve sampled on the dictionary time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InputCurve {
    samples: Vec<f64>,
    description: String,
}

impl InputCurve {
    pub fn new(samples: Vec<f64>, description: impl Into<String>) -> Result<Self> {
        if samples.iter().any(|x| !x.is_finite() || *x < 0.0) {
            bail!(InvalidParameter, "input curve samples must be finite and >= 0");
        }
        Ok(InputCurve {
            samples,
            description: description.into(),
        })
    }

    /// `t exp(-t / tau0)` scaled so the continuous peak (at `t = tau0`) is 1.
    pub fn gamma_variate(time_grid: &[f64], tau0: f64) -> Result<Self> {
        if !(tau0 > 0.0) || !tau0.is_finite() {
            bail!(InvalidParameter, "tau0 must be positive, got {tau0}");
        }
        let samples = time_grid
            .iter()
            .map(|&t| (t / tau0) * libm::exp(1.0 - t / tau0))
            .collect();
        Self::new(samples, alloc::format!("gamma variate, tau0 = {tau0}"))
    }

    pub fn constant(len: usize, value: f64) -> Result<Self> {
        Self::new(alloc::vec![value; len], "constant")
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

/// Decay rates `k_j`, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayGrid {
    params: Vec<f64>,
}

impl DecayGrid {
    pub fn new(params: Vec<f64>) -> Result<Self> {
        if params.iter().any(|x| !x.is_finite() || *x < 0.0) {
            bail!(InvalidParameter, "decay rates must be finite and >= 0");
        }
        if params.windows(2).any(|w| w[1] <= w[0]) {
            bail!(InvalidParameter, "decay rates must be strictly increasing");
        }
        Ok(DecayGrid { params })
    }

    /// `n` geometrically spaced rates from `min` to `max`.
    pub fn log_spaced(min: f64, max: f64, n: usize) -> Result<Self> {
        if !(min > 0.0 && max > min) || n < 2 {
            bail!(InvalidParameter, "need 0 < min < max and n >= 2");
        }
        let (lo, hi) = (libm::log(min), libm::log(max));
        let params = (0..n)
            .map(|i| libm::exp(lo + (hi - lo) * i as f64 / (n - 1) as f64))
            .collect();
        Self::new(params)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }
}

/// Trapezoidal quadrature of the kinetic convolution on `time_grid`.
///
/// The integral runs from the first grid point, so grids normally start at 0.
pub fn build_kinetic_dictionary(
    curve: &InputCurve,
    decays: &DecayGrid,
    time_grid: &[f64],
) -> Result<DictionaryMatrix> {
    let t = time_grid;
    let n = decays.params().len();
    if t.is_empty() || n == 0 {
        bail!(Dimension, "time grid and decay grid must be nonempty");
    }
    if curve.samples().len() != t.len() {
        bail!(
            Dimension,
            "input curve has {} samples, time grid has {}",
            curve.samples().len(),
            t.len()
        );
    }
    let ca = curve.samples();
    let mut b = Mat::zeros(t.len(), n);
    for (j, &k) in decays.params().iter().enumerate() {
        for i in 1..t.len() {
            let f = |m: usize| ca[m] * libm::exp(-k * (t[i] - t[m]));
            let mut acc = 0.0;
            for m in 0..i {
                acc += 0.5 * (t[m + 1] - t[m]) * (f(m) + f(m + 1));
            }
            b[(i, j)] = acc;
        }
    }
    DictionaryMatrix::new(b, t.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnNorm {
    L2,
    L1,
}

fn column_norm(b: &Mat, j: usize, mode: ColumnNorm) -> f64 {
    match mode {
        ColumnNorm::L2 => b.column(j).norm(),
        ColumnNorm::L1 => b.column(j).iter().map(|x| x.abs()).sum(),
    }
}

pub fn normalize_columns(b: &DictionaryMatrix, mode: ColumnNorm) -> Result<DictionaryMatrix> {
    let mut v = b.values().clone();
    for j in 0..v.ncols() {
        let s = column_norm(&v, j, mode);
        if s == 0.0 {
            return Err(Error::ZeroColumn(j));
        }
        v.column_mut(j).scale_mut(1.0 / s);
    }
    let flag = match mode {
        ColumnNorm::L2 => Normalization::L2,
        ColumnNorm::L1 => Normalization::L1,
    };
    DictionaryMatrix::with_normalization(v, b.time_grid().to_vec(), flag)
}

/// `max_{i != j} |<b_i, b_j>| / ||b_i||^2`.
pub fn mutual_incoherence(b: &DictionaryMatrix) -> Result<f64> {
    let v = b.values();
    let n = v.ncols();
    if n < 2 {
        bail!(Dimension, "mutual incoherence needs at least two atoms");
    }
    let gram = v.tr_mul(v);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        if gram[(i, i)] == 0.0 {
            return Err(Error::ZeroColumn(i));
        }
        for j in 0..n {
            if i != j {
                worst = worst.max(gram[(i, j)].abs() / gram[(i, i)]);
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScalingViolation {
    /// A used atom whose 2-norm is not 1.
    Norm { column: usize, norm: f64 },
    /// A used atom with `|<b_used, b_other>| > 1`.
    InnerProduct { used: usize, other: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub satisfied: bool,
    pub violations: Vec<ScalingViolation>,
}

pub const SCALING_TOL: f64 = 1e-9;

/// Checks `||b_J(i)|| = 1` and `|<b_J(i), b_j>| <= 1` for every index used by `support`.
pub fn check_scaling_condition(b: &DictionaryMatrix, support: &[usize]) -> Result<ScalingReport> {
    let v = b.values();
    let n = v.ncols();
    let mut used: Vec<usize> = support.to_vec();
    used.sort_unstable();
    used.dedup();
    if let Some(&j) = used.iter().find(|&&j| j >= n) {
        bail!(Dimension, "support index {j} out of range for {n} atoms");
    }
    let mut violations = Vec::new();
    for &j in &used {
        let norm = v.column(j).norm();
        if (norm - 1.0).abs() > SCALING_TOL {
            violations.push(ScalingViolation::Norm { column: j, norm });
        }
        for other in (0..n).filter(|&o| o != j) {
            let value = v.column(j).dot(&v.column(other));
            if value.abs() > 1.0 + SCALING_TOL {
                violations.push(ScalingViolation::InnerProduct { used: j, other, value });
            }
        }
    }
    Ok(ScalingReport {
        satisfied: violations.is_empty(),
        violations,
    })
}

/// Parameters of a gamma-variate input curve and log-spaced decay grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticSpec {
    pub samples: usize,
    pub t_end: f64,
    pub tau0: f64,
    pub decay_min: f64,
    pub decay_max: f64,
    pub atoms: usize,
}

impl Default for KineticSpec {
    fn default() -> Self {
        KineticSpec {
            samples: 32,
            t_end: 8.0,
            tau0: 0.25,
            decay_min: 0.1,
            decay_max: 10.0,
            atoms: 8,
        }
    }
}

impl KineticSpec {
    /// Uniform grid `0, ..., t_end`.
    pub fn time_grid(&self) -> Result<Vec<f64>> {
        if self.samples < 2 || !(self.t_end > 0.0) {
            bail!(InvalidParameter, "need at least two samples and t_end > 0");
        }
        let h = self.t_end / (self.samples - 1) as f64;
        Ok((0..self.samples).map(|k| k as f64 * h).collect())
    }

    /// Raw (unnormalized) dictionary.
    pub fn build(&self) -> Result<DictionaryMatrix> {
        let grid = self.time_grid()?;
        let curve = InputCurve::gamma_variate(&grid, self.tau0)?;
        let decays = DecayGrid::log_spaced(self.decay_min, self.decay_max, self.atoms)?;
        build_kinetic_dictionary(&curve, &decays, &grid)
    }
}
