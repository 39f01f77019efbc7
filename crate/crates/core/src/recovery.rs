//! Optimality certificates and recovery checks for the `l1,inf` model.
//!
//! A matrix `P` is a subgradient of `J(U) = ||U||_{1,inf}` iff it lives on the
//! rows where `U` attains its maximal row sum (the set `I`), equals
//! `w_i sign(u_ij)` on the nonzeros of those rows, lies in `[-w_i, w_i]` on
//! their zeros, and the weights satisfy `w >= 0`, `sum w = 1` (`<= 1` at `U = 0`).
//! Adding the constraint `U >= 0` relaxes the zero entries: they only need
//! `p_ij <= w_i` on max rows and `p_ij <= 0` elsewhere.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::linalg::QR;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dictionary::{normalize_columns, ColumnNorm};
use crate::error::{bail, Error, Result};
use crate::fft::Fft2;
use crate::model::{
    apply_forward, norm_l1_inf, CoefficientMatrix, DataMatrix, DictionaryMatrix, ForwardOperator, Mat,
    SpatialShape,
};

/// Per-row active basis indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportMap {
    pub active: Vec<Vec<usize>>,
    /// Index of the largest active entry, `None` for empty rows.
    pub argmax: Vec<Option<usize>>,
    pub zero_tol: f64,
}

impl SupportMap {
    pub fn empty(rows: usize, zero_tol: f64) -> Self {
        SupportMap {
            active: vec![Vec::new(); rows],
            argmax: vec![None; rows],
            zero_tol,
        }
    }

    pub fn rows(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.iter().all(|r| r.is_empty())
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.active[i].contains(&j)
    }

    /// Whether every active entry of `self` is also active in `other`.
    pub fn is_subset_of(&self, other: &SupportMap) -> bool {
        self.rows() == other.rows()
            && self
                .active
                .iter()
                .zip(&other.active)
                .all(|(a, b)| a.iter().all(|j| b.contains(j)))
    }

    fn from_rows(rows: impl Iterator<Item = (Vec<usize>, Option<usize>)>, zero_tol: f64) -> Self {
        let (active, argmax) = rows.unzip();
        SupportMap {
            active,
            argmax,
            zero_tol,
        }
    }
}

/// Entries with `u_ij > rel_tol * max(U)`.
pub fn extract_support(u: &Mat, rel_tol: f64) -> Result<SupportMap> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        bail!(InvalidParameter, "rel_tol must lie in (0, 1), got {rel_tol}");
    }
    let top = u.max();
    if !(top > 0.0) {
        return Ok(SupportMap::empty(u.nrows(), 0.0));
    }
    let thr = rel_tol * top;
    Ok(SupportMap::from_rows(
        u.row_iter().map(|r| {
            let active: Vec<usize> = (0..r.len()).filter(|&j| r[j] > thr).collect();
            let arg = active.iter().copied().reduce(|a, b| if r[b] > r[a] { b } else { a });
            (active, arg)
        }),
        thr,
    ))
}

/// Rows of `Y = AᵀWB` and, per row, every index within `tie_tol` of the row maximum.
pub fn predict_asymptotic_support(
    a: &ForwardOperator,
    w: &DataMatrix,
    b: &DictionaryMatrix,
    tie_tol: f64,
) -> Result<SupportMap> {
    if w.values().ncols() != b.samples() {
        bail!(Dimension, "data has {} columns, dictionary {} samples", w.values().ncols(), b.samples());
    }
    let y = a.adjoint(w.values())? * b.values();
    Ok(SupportMap::from_rows(
        y.row_iter().map(|r| {
            let top = r.max();
            let active: Vec<usize> = (0..r.len()).filter(|&j| r[j] >= top - tie_tol).collect();
            let arg = active.iter().copied().find(|&j| r[j] == top);
            (active, arg)
        }),
        tie_tol,
    ))
}

/// Max-row set and weights of a subgradient of the `l1,inf` norm.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgradientCertificate {
    pub max_row_set: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub member: bool,
    pub certificate: SubgradientCertificate,
    /// Largest deviation from the characterization.
    pub violation: f64,
}

// Relative thresholds for deciding which rows attain the maximum and which
// entries count as zero.
const MAX_ROW_RTOL: f64 = 1e-9;
const ZERO_RTOL: f64 = 1e-12;

struct Structure {
    zero: bool,
    max_rows: Vec<usize>,
    is_max: Vec<bool>,
    zero_tol: f64,
}

fn structure(u: &Mat) -> Structure {
    let top = norm_l1_inf(u);
    let zero_tol = ZERO_RTOL * u.amax();
    if top == 0.0 {
        return Structure {
            zero: true,
            max_rows: (0..u.nrows()).collect(),
            is_max: vec![true; u.nrows()],
            zero_tol,
        };
    }
    let sums: Vec<f64> = u.row_iter().map(|r| r.iter().map(|x| x.abs()).sum()).collect();
    let is_max: Vec<bool> = sums.iter().map(|s| *s >= top * (1.0 - MAX_ROW_RTOL)).collect();
    Structure {
        zero: false,
        max_rows: (0..u.nrows()).filter(|&i| is_max[i]).collect(),
        is_max,
        zero_tol,
    }
}

fn check_shapes(p: &Mat, u: &Mat) -> Result<()> {
    if p.shape() != u.shape() {
        bail!(Dimension, "P is {:?}, U is {:?}", p.shape(), u.shape());
    }
    Ok(())
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Tests `P ∈ ∂||U||_{1,inf}`, recovering `w_i = max_j |p_ij|` on the max rows.
pub fn subgradient_membership(p: &Mat, u: &Mat, tol: f64) -> Result<Membership> {
    check_shapes(p, u)?;
    let st = structure(u);
    let mut viol: f64 = 0.0;
    let mut weights = Vec::with_capacity(st.max_rows.len());
    for i in 0..u.nrows() {
        let row_abs_max = p.row(i).amax();
        if !st.is_max[i] {
            viol = viol.max(row_abs_max);
            continue;
        }
        let w = row_abs_max;
        weights.push(w);
        for j in 0..u.ncols() {
            if u[(i, j)].abs() > st.zero_tol {
                viol = viol.max((p[(i, j)] - w * sign(u[(i, j)])).abs());
            }
        }
    }
    let total: f64 = weights.iter().sum();
    viol = viol.max(if st.zero { (total - 1.0).max(0.0) } else { (total - 1.0).abs() });
    Ok(Membership {
        member: viol <= tol,
        certificate: SubgradientCertificate {
            max_row_set: st.max_rows,
            weights,
        },
        violation: viol,
    })
}

/// Tests `P ∈ ∂(||.||_{1,inf} + indicator{U >= 0})(U)`.
///
/// On a max row the weight is read off the positive entries (or the largest
/// entry if the row has none); zeros there only need `p_ij <= w_i`.
pub fn nonneg_subgradient_membership(p: &Mat, u: &Mat, tol: f64) -> Result<Membership> {
    check_shapes(p, u)?;
    if u.iter().any(|x| *x < 0.0) {
        bail!(InvalidParameter, "U must be nonnegative");
    }
    let st = structure(u);
    let mut viol: f64 = 0.0;
    let mut weights = Vec::with_capacity(st.max_rows.len());
    for i in 0..u.nrows() {
        let positive: Vec<usize> = (0..u.ncols()).filter(|&j| u[(i, j)] > st.zero_tol).collect();
        if !st.is_max[i] {
            for j in 0..u.ncols() {
                let x = p[(i, j)];
                viol = viol.max(if positive.contains(&j) { x.abs() } else { x.max(0.0) });
            }
            continue;
        }
        let w = if positive.is_empty() {
            p.row(i).max().max(0.0)
        } else {
            positive.iter().map(|&j| p[(i, j)]).sum::<f64>() / positive.len() as f64
        };
        viol = viol.max((-w).max(0.0));
        for j in 0..u.ncols() {
            let x = p[(i, j)];
            viol = viol.max(if positive.contains(&j) { (x - w).abs() } else { (x - w).max(0.0) });
        }
        weights.push(w.max(0.0));
    }
    let total: f64 = weights.iter().sum();
    viol = viol.max(if st.zero { (total - 1.0).max(0.0) } else { (total - 1.0).abs() });
    Ok(Membership {
        member: viol <= tol,
        certificate: SubgradientCertificate {
            max_row_set: st.max_rows,
            weights,
        },
        violation: viol,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceCondition {
    pub satisfied: bool,
    /// `Q` with `AᵀQB ∈ ∂J(U)`, present when satisfied.
    pub q: Option<Mat>,
    /// Frobenius distance between the last range iterate and the subdifferential.
    pub residual: f64,
    pub iterations: usize,
}

pub const SOURCE_CONDITION_MAX_ITER: usize = 5000;

/// Searches for `Q` with `AᵀQB ∈ ∂||U_hat||_{1,inf}` by alternating projections
/// between the range `{AᵀQB}` and the subdifferential. A positive answer is a
/// proof that `U_hat` has minimal `l1,inf` norm among solutions of
/// `A U Bᵀ = A U_hat Bᵀ`; a negative answer may just mean the budget ran out.
pub fn check_source_condition(
    u_hat: &Mat,
    a: &ForwardOperator,
    b: &DictionaryMatrix,
    tol: f64,
) -> Result<SourceCondition> {
    check_source_condition_with(u_hat, a, b, tol, SOURCE_CONDITION_MAX_ITER)
}

pub fn check_source_condition_with(
    u_hat: &Mat,
    a: &ForwardOperator,
    b: &DictionaryMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<SourceCondition> {
    if u_hat.nrows() != a.in_dim() || u_hat.ncols() != b.atoms() {
        bail!(
            Dimension,
            "U_hat is {:?}, expected {}x{}",
            u_hat.shape(),
            a.in_dim(),
            b.atoms()
        );
    }
    let range = RangeProjector::new(a, b.values())?;
    let st = structure(u_hat);
    let mut x = range.project(&project_subdifferential(&Mat::zeros(u_hat.nrows(), u_hat.ncols()), u_hat, &st));
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let c = project_subdifferential(&x, u_hat, &st);
        residual = (&x - &c).norm();
        if residual <= tol {
            break;
        }
        x = range.project(&c);
    }
    let satisfied = residual <= tol;
    Ok(SourceCondition {
        satisfied,
        q: if satisfied { Some(range.coefficients(&x)) } else { None },
        residual,
        iterations,
    })
}

/// Orthogonal projection onto `{AᵀQB}` and recovery of `Q`.
enum RangeProjector {
    Dense {
        pi_a: Mat,
        at_pinv: Mat,
        pi_b: Mat,
        b_pinv: Mat,
    },
    Spectral {
        fft: Fft2,
        // 1 / conj(K^) where the symbol is nonzero, 0 elsewhere
        inv: Vec<Complex64>,
        pi_b: Mat,
        b_pinv: Mat,
    },
}

const RANK_RTOL: f64 = 1e-10;

impl RangeProjector {
    fn new(a: &ForwardOperator, b: &Mat) -> Result<Self> {
        let b_pinv = b
            .clone()
            .pseudo_inverse(RANK_RTOL * b.amax().max(f64::MIN_POSITIVE))
            .map_err(|e| Error::Numerical(e.into()))?;
        let pi_b = &b_pinv * b;
        Ok(match a {
            ForwardOperator::Dense(m) => {
                // (Aᵀ)⁺ = (A⁺)ᵀ and the projector onto range(Aᵀ) is A⁺A.
                let a_pinv = m
                    .clone()
                    .pseudo_inverse(RANK_RTOL * m.amax().max(f64::MIN_POSITIVE))
                    .map_err(|e| Error::Numerical(e.into()))?;
                RangeProjector::Dense {
                    pi_a: &a_pinv * m,
                    at_pinv: a_pinv.transpose(),
                    pi_b,
                    b_pinv,
                }
            }
            ForwardOperator::Conv2d(c) => {
                let top = c.spectrum().iter().map(|z| z.norm()).fold(0.0, f64::max);
                let inv = c
                    .spectrum()
                    .iter()
                    .map(|z| {
                        if z.norm() > RANK_RTOL * top {
                            Complex64::new(1.0, 0.0) / z.conj()
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    })
                    .collect();
                RangeProjector::Spectral {
                    fft: c.fft().clone(),
                    inv,
                    pi_b,
                    b_pinv,
                }
            }
        })
    }

    fn spectral(fft: &Fft2, x: &Mat, f: impl Fn(usize, Complex64) -> Complex64) -> Mat {
        let mut out = Mat::zeros(x.nrows(), x.ncols());
        let mut buf = vec![Complex64::new(0.0, 0.0); x.nrows()];
        for j in 0..x.ncols() {
            for (z, v) in buf.iter_mut().zip(x.column(j).iter()) {
                *z = Complex64::new(*v, 0.0);
            }
            fft.forward(&mut buf);
            for (k, z) in buf.iter_mut().enumerate() {
                *z = f(k, *z);
            }
            fft.inverse(&mut buf);
            for (o, z) in out.column_mut(j).iter_mut().zip(&buf) {
                *o = z.re;
            }
        }
        out
    }

    fn project(&self, x: &Mat) -> Mat {
        match self {
            RangeProjector::Dense { pi_a, pi_b, .. } => pi_a * x * pi_b,
            RangeProjector::Spectral { fft, inv, pi_b, .. } => {
                let zero = Complex64::new(0.0, 0.0);
                Self::spectral(fft, &(x * pi_b), |k, z| if inv[k] == zero { zero } else { z })
            }
        }
    }

    /// `Q = (Aᵀ)⁺ X B⁺`.
    fn coefficients(&self, x: &Mat) -> Mat {
        match self {
            RangeProjector::Dense { at_pinv, b_pinv, .. } => at_pinv * x * b_pinv,
            RangeProjector::Spectral { fft, inv, b_pinv, .. } => {
                Self::spectral(fft, &(x * b_pinv), |k, z| z * inv[k])
            }
        }
    }
}

/// Data of one max row for the weight search: `a = sum_{j in S} x_ij s_ij`,
/// `|S|`, and `|x_ij|` for the free entries sorted descending.
struct RowData {
    a: f64,
    fixed: usize,
    free: Vec<f64>,
}

impl RowData {
    /// Minimizer over `w >= 0` of `f(w) + nu w`, with
    /// `f(w) = sum_S (x - w s)^2 + sum_free dist(x, [-w, w])^2`.
    fn weight(&self, nu: f64) -> f64 {
        // f'(w) = 2 (|S| w - a) - 2 sum_free (|x| - w)_+ is increasing and
        // piecewise linear with breaks at the free magnitudes.
        let mut acc = 0.0;
        for k in 0..=self.free.len() {
            if k > 0 {
                acc += self.free[k - 1];
            }
            let slope = (self.fixed + k) as f64;
            if slope == 0.0 {
                continue;
            }
            let w = (self.a + acc - 0.5 * nu) / slope;
            let lower = self.free.get(k).copied().unwrap_or(0.0);
            if w >= lower {
                return w.max(0.0);
            }
        }
        0.0
    }
}

/// Euclidean projection of `x` onto `∂||U||_{1,inf}`.
fn project_subdifferential(x: &Mat, u: &Mat, st: &Structure) -> Mat {
    let mut out = Mat::zeros(x.nrows(), x.ncols());
    let rows: Vec<RowData> = st
        .max_rows
        .iter()
        .map(|&i| {
            let mut a = 0.0;
            let mut fixed = 0;
            let mut free = Vec::new();
            for j in 0..x.ncols() {
                if u[(i, j)].abs() > st.zero_tol {
                    a += x[(i, j)] * sign(u[(i, j)]);
                    fixed += 1;
                } else {
                    free.push(x[(i, j)].abs());
                }
            }
            free.sort_by(|p, q| q.total_cmp(p));
            RowData { a, fixed, free }
        })
        .collect();
    let total = |nu: f64| rows.iter().map(|r| r.weight(nu)).sum::<f64>();
    // Sum of weights is nonincreasing in nu; find nu with sum = 1
    // (or nu = 0 if the sum already fits when U = 0).
    let nu = if st.zero && total(0.0) <= 1.0 {
        0.0
    } else {
        let mut hi = 1.0;
        while total(hi) > 1.0 {
            hi *= 2.0;
        }
        let mut lo = if st.zero { 0.0 } else { -1.0 };
        while total(lo) < 1.0 {
            lo *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.abs().max(lo.abs()).max(1.0) {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    for (&i, r) in st.max_rows.iter().zip(&rows) {
        let w = r.weight(nu);
        for j in 0..x.ncols() {
            out[(i, j)] = if u[(i, j)].abs() > st.zero_tol {
                w * sign(u[(i, j)])
            } else {
                x[(i, j)].clamp(-w, w)
            };
        }
    }
    out
}

/// A synthetic problem with known ground truth.
#[derive(Debug, Clone)]
pub struct Instance {
    pub a: ForwardOperator,
    pub b: DictionaryMatrix,
    pub u_hat: CoefficientMatrix,
    pub w: DataMatrix,
    /// Active atom of each row of `u_hat`.
    pub support: Vec<usize>,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Square invertible `A` (singular values in `[0.5, 1.5]`), Gaussian `B` with
/// unit columns, one positive coefficient in `[0.5, 1.5]` per row, `W = A U Bᵀ`.
pub fn build_recovery_instance(m: usize, n: usize, t: usize, seed: u64) -> Result<Instance> {
    if m == 0 || n == 0 || t < n {
        bail!(InvalidParameter, "need M >= 1, N >= 1 and T >= N (got {m}, {n}, {t})");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q1 = QR::new(gaussian(&mut rng, m, m)).q();
    let q2 = QR::new(gaussian(&mut rng, m, m)).q();
    let s = Mat::from_diagonal(&nalgebra::DVector::from_fn(m, |_, _| rng.random_range(0.5..1.5)));
    let a = ForwardOperator::dense(q1 * s * q2)?;
    let b = normalize_columns(&DictionaryMatrix::from_values(gaussian(&mut rng, t, n))?, ColumnNorm::L2)?;
    let mut u = Mat::zeros(m, n);
    let mut support = Vec::with_capacity(m);
    for i in 0..m {
        let j = rng.random_range(0..n);
        u[(i, j)] = rng.random_range(0.5..1.5);
        support.push(j);
    }
    let u_hat = CoefficientMatrix::nonnegative(u, SpatialShape::flat(m))?;
    let w = apply_forward(&a, &u_hat, &b)?;
    Ok(Instance {
        a,
        b,
        u_hat,
        w,
        support,
    })
}

/// The single-measurement counterexample: two pixels share atom 0, the larger
/// coefficient sits behind the smaller sensitivity.
#[derive(Debug, Clone)]
pub struct NegativeInstance {
    pub instance: Instance,
    /// Same data, all mass moved to the pixel with the larger sensitivity.
    pub alternative: Mat,
}

pub fn build_negative_instance(seed: u64) -> Result<NegativeInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a0 = rng.random_range(5.0..8.0);
    let a1 = rng.random_range(0.5..1.0);
    let c0 = rng.random_range(0.2..0.5);
    let c1 = rng.random_range(0.8..1.2);
    let raw = Mat::from_fn(3, 2, |_, _| rng.random_range(0.1..1.0));
    let b = normalize_columns(&DictionaryMatrix::from_values(raw)?, ColumnNorm::L2)?;
    let a = ForwardOperator::dense(Mat::from_row_slice(1, 2, &[a0, a1]))?;
    let u_hat = CoefficientMatrix::nonnegative(
        Mat::from_row_slice(2, 2, &[c0, 0.0, c1, 0.0]),
        SpatialShape::flat(2),
    )?;
    let w = apply_forward(&a, &u_hat, &b)?;
    let alternative = Mat::from_row_slice(2, 2, &[(a0 * c0 + a1 * c1) / a0, 0.0, 0.0, 0.0]);
    Ok(NegativeInstance {
        instance: Instance {
            a,
            b,
            u_hat,
            w,
            support: vec![0, 0],
        },
        alternative,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FidelityMode {
    L2,
    KullbackLeibler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneDRecovery {
    pub recovered: bool,
    /// Candidate subgradient entries `p_n`, one per atom.
    pub p: Vec<f64>,
}

const ONE_D_TOL: f64 = 1e-10;

/// Whether `c e_j` with `c = 1 - (alpha + beta)` is the regularized
/// reconstruction of the single-atom signal `w = b_j`.
///
/// The candidate subgradient is `p_n = (1 - c)/(alpha + beta) <g b_j, g b_n>`
/// with weights `g`; recovery needs `p_j = 1` and `|p_n| <= 1`. In L2 mode `g`
/// defaults to ones. In KL mode `g = 1/sqrt(w)`, so `p_n = ||b_n||_1` for
/// nonnegative atoms.
pub fn check_1d_recovery(
    b: &DictionaryMatrix,
    j: usize,
    alpha_plus_beta: f64,
    gamma: Option<&[f64]>,
    mode: FidelityMode,
) -> Result<OneDRecovery> {
    let v = b.values();
    let t = v.nrows();
    if j >= v.ncols() {
        bail!(Dimension, "atom {j} out of range for {} atoms", v.ncols());
    }
    if !(alpha_plus_beta > 0.0 && alpha_plus_beta < 1.0) {
        bail!(InvalidParameter, "alpha + beta must lie in (0, 1), got {alpha_plus_beta}");
    }
    if let Some(g) = gamma {
        if g.len() != t {
            bail!(Dimension, "gamma has {} entries, expected {t}", g.len());
        }
    }
    let g2: Vec<f64> = match mode {
        FidelityMode::L2 => (0..t).map(|k| gamma.map_or(1.0, |g| g[k] * g[k])).collect(),
        FidelityMode::KullbackLeibler => {
            let w = v.column(j);
            if w.iter().any(|x| *x <= 0.0) {
                bail!(InvalidParameter, "KL mode needs strictly positive data b_{j}");
            }
            let g2: Vec<f64> = w.iter().map(|x| 1.0 / x).collect();
            if let Some(g) = gamma {
                if g.iter().zip(&g2).any(|(a, b)| (a * a - b).abs() > 1e-12 * b) {
                    bail!(InvalidParameter, "KL mode requires gamma = 1/sqrt(w)");
                }
            }
            g2
        }
    };
    let c = 1.0 - alpha_plus_beta;
    let scale = (1.0 - c) / alpha_plus_beta;
    let p: Vec<f64> = (0..v.ncols())
        .map(|n| scale * (0..t).map(|k| g2[k] * v[(k, j)] * v[(k, n)]).sum::<f64>())
        .collect();
    let recovered = (p[j] - 1.0).abs() <= ONE_D_TOL
        && p.iter().enumerate().all(|(n, x)| n == j || x.abs() <= 1.0 + ONE_D_TOL);
    Ok(OneDRecovery { recovered, p })
}
