//! Domain types, mixed matrix norms and the forward model `W = A U Bᵀ`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, Dyn};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{bail, Error, Result};
use crate::fft::Fft2;

pub type Mat = DMatrix<f64>;

/// Image size; pixel `(r, c)` is row `r * m2 + c` of a coefficient matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpatialShape {
    pub m1: usize,
    pub m2: usize,
}

impl SpatialShape {
    pub fn new(m1: usize, m2: usize) -> Self {
        SpatialShape { m1, m2 }
    }

    /// Treats `m` pixels as an `m x 1` image.
    pub fn flat(m: usize) -> Self {
        SpatialShape { m1: m, m2: 1 }
    }

    pub fn pixels(&self) -> usize {
        self.m1 * self.m2
    }
}

fn check_finite(m: &Mat, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// The `M x N` coefficient matrix `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    values: Mat,
    shape: SpatialShape,
    nonnegative: bool,
}

impl CoefficientMatrix {
    pub fn new(values: Mat, shape: SpatialShape) -> Result<Self> {
        check_finite(&values, "coefficient matrix")?;
        if shape.pixels() != values.nrows() {
            bail!(
                Dimension,
                "spatial shape {}x{} does not match {} rows",
                shape.m1,
                shape.m2,
                values.nrows()
            );
        }
        Ok(CoefficientMatrix {
            values,
            shape,
            nonnegative: false,
        })
    }

    /// Like [`CoefficientMatrix::new`] but also checks and records `U >= 0`.
    pub fn nonnegative(values: Mat, shape: SpatialShape) -> Result<Self> {
        let mut u = Self::new(values, shape)?;
        if let Some(x) = u.values.iter().find(|x| **x < 0.0) {
            bail!(InvalidParameter, "negative entry {x} in nonnegative matrix");
        }
        u.nonnegative = true;
        Ok(u)
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn into_values(self) -> Mat {
        self.values
    }

    pub fn shape(&self) -> SpatialShape {
        self.shape
    }

    pub fn is_nonnegative(&self) -> bool {
        self.nonnegative
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Normalization {
    Raw,
    L2,
    L1,
}

/// The `T x N` temporal dictionary `B`, one basis vector per column.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryMatrix {
    values: Mat,
    time_grid: Vec<f64>,
    normalization: Normalization,
}

impl DictionaryMatrix {
    pub fn new(values: Mat, time_grid: Vec<f64>) -> Result<Self> {
        Self::with_normalization(values, time_grid, Normalization::Raw)
    }

    /// Uses the sample index `0, 1, ..., T-1` as time grid.
    pub fn from_values(values: Mat) -> Result<Self> {
        let grid = (0..values.nrows()).map(|k| k as f64).collect();
        Self::new(values, grid)
    }

    pub(crate) fn with_normalization(
        values: Mat,
        time_grid: Vec<f64>,
        normalization: Normalization,
    ) -> Result<Self> {
        check_finite(&values, "dictionary")?;
        if values.nrows() == 0 || values.ncols() == 0 {
            bail!(Dimension, "dictionary must be nonempty");
        }
        if time_grid.len() != values.nrows() {
            bail!(
                Dimension,
                "time grid has {} samples, dictionary has {} rows",
                time_grid.len(),
                values.nrows()
            );
        }
        if time_grid.iter().any(|t| !t.is_finite()) || time_grid.windows(2).any(|w| w[1] <= w[0])
        {
            bail!(InvalidParameter, "time grid must be finite and strictly increasing");
        }
        Ok(DictionaryMatrix {
            values,
            time_grid,
            normalization,
        })
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn time_grid(&self) -> &[f64] {
        &self.time_grid
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn atoms(&self) -> usize {
        self.values.ncols()
    }
}

/// Measured data `W`, `L x T`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Mat,
}

impl DataMatrix {
    pub fn new(values: Mat) -> Result<Self> {
        check_finite(&values, "data matrix")?;
        Ok(DataMatrix { values })
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn into_values(self) -> Mat {
        self.values
    }
}

/// Periodic 2-D convolution on `m1 x m2` images.
#[derive(Debug, Clone)]
pub struct Conv2dOperator {
    m1: usize,
    m2: usize,
    kernel: Mat,
    fft: Fft2,
    // DFT of the periodically embedded kernel, the symbol of A.
    spectrum: Vec<Complex64>,
}

impl PartialEq for Conv2dOperator {
    fn eq(&self, other: &Self) -> bool {
        self.m1 == other.m1 && self.m2 == other.m2 && self.kernel == other.kernel
    }
}

impl Conv2dOperator {
    /// The kernel is centred at `(k1 / 2, k2 / 2)`.
    pub fn new(kernel: Mat, shape: SpatialShape) -> Result<Self> {
        check_finite(&kernel, "convolution kernel")?;
        let (k1, k2) = kernel.shape();
        if k1 == 0 || k2 == 0 || k1 > shape.m1 || k2 > shape.m2 {
            bail!(
                Dimension,
                "kernel {k1}x{k2} does not fit image {}x{}",
                shape.m1,
                shape.m2
            );
        }
        let (m1, m2) = (shape.m1, shape.m2);
        let mut embed = vec![Complex64::new(0.0, 0.0); m1 * m2];
        for a in 0..k1 {
            for b in 0..k2 {
                let r = (a + m1 - k1 / 2) % m1;
                let c = (b + m2 - k2 / 2) % m2;
                embed[r * m2 + c] += kernel[(a, b)];
            }
        }
        let fft = Fft2::new(m1, m2);
        fft.forward(&mut embed);
        Ok(Conv2dOperator {
            m1,
            m2,
            kernel,
            fft,
            spectrum: embed,
        })
    }

    /// Sampled Gaussian `size x size`, normalized to unit sum.
    pub fn gaussian(size: usize, sigma: f64, shape: SpatialShape) -> Result<Self> {
        if size == 0 || !(sigma > 0.0) || !sigma.is_finite() {
            bail!(InvalidParameter, "gaussian kernel needs size > 0 and sigma > 0");
        }
        let c = (size / 2) as f64;
        let mut k = Mat::from_fn(size, size, |a, b| {
            let d2 = (a as f64 - c) * (a as f64 - c) + (b as f64 - c) * (b as f64 - c);
            libm::exp(-d2 / (2.0 * sigma * sigma))
        });
        let s = k.sum();
        k /= s;
        Self::new(k, shape)
    }

    pub fn delta(shape: SpatialShape) -> Self {
        Self::new(Mat::from_element(1, 1, 1.0), shape).expect("1x1 kernel always fits")
    }

    pub(crate) fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    pub(crate) fn fft(&self) -> &Fft2 {
        &self.fft
    }

    pub fn kernel(&self) -> &Mat {
        &self.kernel
    }

    pub fn shape(&self) -> SpatialShape {
        SpatialShape::new(self.m1, self.m2)
    }

    fn stencil(&self, x: &[f64], out: &mut [f64], flip: bool) {
        let (m1, m2) = (self.m1, self.m2);
        let (k1, k2) = self.kernel.shape();
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut cols = vec![0usize; m2];
        for a in 0..k1 {
            let da = a as isize - (k1 / 2) as isize;
            for b in 0..k2 {
                let w = self.kernel[(a, b)];
                if w == 0.0 {
                    continue;
                }
                let db = b as isize - (k2 / 2) as isize;
                // convolution reads x[p - d], the adjoint reads y[p + d]
                let (sa, sb) = if flip { (da, db) } else { (-da, -db) };
                for (c, slot) in cols.iter_mut().enumerate() {
                    *slot = (c as isize + sb).rem_euclid(m2 as isize) as usize;
                }
                for r in 0..m1 {
                    let rr = (r as isize + sa).rem_euclid(m1 as isize) as usize;
                    let src = &x[rr * m2..(rr + 1) * m2];
                    let dst = &mut out[r * m2..(r + 1) * m2];
                    for (o, &cc) in dst.iter_mut().zip(cols.iter()) {
                        *o += w * src[cc];
                    }
                }
            }
        }
    }

    pub fn apply_image(&self, x: &[f64], out: &mut [f64]) {
        self.stencil(x, out, false);
    }

    pub fn adjoint_image(&self, y: &[f64], out: &mut [f64]) {
        self.stencil(y, out, true);
    }
}

/// The spatial operator `A`.
#[derive(Debug, Clone, PartialEq)]
pub enum ForwardOperator {
    /// `L x M` matrix.
    Dense(Mat),
    Conv2d(Conv2dOperator),
}

impl ForwardOperator {
    pub fn dense(a: Mat) -> Result<Self> {
        check_finite(&a, "forward operator")?;
        if a.nrows() == 0 || a.ncols() == 0 {
            bail!(Dimension, "dense operator must be nonempty");
        }
        Ok(ForwardOperator::Dense(a))
    }

    pub fn identity(m: usize) -> Self {
        ForwardOperator::Dense(Mat::identity(m, m))
    }

    /// Number of pixels `M`.
    pub fn in_dim(&self) -> usize {
        match self {
            ForwardOperator::Dense(a) => a.ncols(),
            ForwardOperator::Conv2d(c) => c.m1 * c.m2,
        }
    }

    /// Number of measurements `L`.
    pub fn out_dim(&self) -> usize {
        match self {
            ForwardOperator::Dense(a) => a.nrows(),
            ForwardOperator::Conv2d(c) => c.m1 * c.m2,
        }
    }

    /// `A X` for `X` with `M` rows.
    pub fn apply(&self, x: &Mat) -> Result<Mat> {
        if x.nrows() != self.in_dim() {
            bail!(Dimension, "operator expects {} rows, got {}", self.in_dim(), x.nrows());
        }
        Ok(match self {
            ForwardOperator::Dense(a) => a * x,
            ForwardOperator::Conv2d(c) => columnwise(x, |s, d| c.apply_image(s, d)),
        })
    }

    /// `Aᵀ Y` for `Y` with `L` rows.
    pub fn adjoint(&self, y: &Mat) -> Result<Mat> {
        if y.nrows() != self.out_dim() {
            bail!(Dimension, "adjoint expects {} rows, got {}", self.out_dim(), y.nrows());
        }
        Ok(match self {
            ForwardOperator::Dense(a) => a.tr_mul(y),
            ForwardOperator::Conv2d(c) => columnwise(y, |s, d| c.adjoint_image(s, d)),
        })
    }

    /// Solver for `(AᵀA + mu I) X = R`.
    pub fn normal_solver(&self, mu: f64) -> Result<NormalSolver> {
        if !(mu > 0.0) {
            bail!(InvalidParameter, "mu must be positive, got {mu}");
        }
        Ok(match self {
            ForwardOperator::Dense(a) => {
                let mut g = a.tr_mul(a);
                for i in 0..g.nrows() {
                    g[(i, i)] += mu;
                }
                let chol = Cholesky::new(g)
                    .ok_or_else(|| Error::Numerical("AᵀA + mu I not positive definite".into()))?;
                NormalSolver::Dense(chol)
            }
            ForwardOperator::Conv2d(c) => NormalSolver::Spectral {
                fft: c.fft.clone(),
                inv_symbol: c.spectrum.iter().map(|z| 1.0 / (z.norm_sqr() + mu)).collect(),
            },
        })
    }
}

fn columnwise(x: &Mat, f: impl Fn(&[f64], &mut [f64])) -> Mat {
    let mut out = Mat::zeros(x.nrows(), x.ncols());
    for j in 0..x.ncols() {
        f(x.column(j).as_slice(), out.column_mut(j).as_mut_slice());
    }
    out
}

/// Cached inverse of `AᵀA + mu I`.
#[derive(Debug, Clone)]
pub enum NormalSolver {
    Dense(Cholesky<f64, Dyn>),
    Spectral { fft: Fft2, inv_symbol: Vec<f64> },
}

impl NormalSolver {
    pub fn solve(&self, rhs: &Mat) -> Mat {
        match self {
            NormalSolver::Dense(chol) => chol.solve(rhs),
            NormalSolver::Spectral { fft, inv_symbol } => {
                let m = rhs.nrows();
                assert_eq!(m, inv_symbol.len());
                let mut out = Mat::zeros(m, rhs.ncols());
                let mut buf = vec![Complex64::new(0.0, 0.0); m];
                // The operator is real, so two columns ride in one complex transform.
                let mut j = 0;
                while j < rhs.ncols() {
                    let re = rhs.column(j);
                    let has_im = j + 1 < rhs.ncols();
                    for i in 0..m {
                        let im = if has_im { rhs[(i, j + 1)] } else { 0.0 };
                        buf[i] = Complex64::new(re[i], im);
                    }
                    fft.forward(&mut buf);
                    for (z, s) in buf.iter_mut().zip(inv_symbol) {
                        *z *= *s;
                    }
                    fft.inverse(&mut buf);
                    for i in 0..m {
                        out[(i, j)] = buf[i].re;
                        if has_im {
                            out[(i, j + 1)] = buf[i].im;
                        }
                    }
                    j += 2;
                }
                out
            }
        }
    }
}

/// `max_i sum_j |u_ij|`.
pub fn norm_l1_inf(u: &Mat) -> f64 {
    u.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `sum_i max_j |p_ij|`, the dual norm of [`norm_l1_inf`].
pub fn norm_inf_1(p: &Mat) -> f64 {
    p.row_iter()
        .map(|r| r.iter().fold(0.0, |m: f64, x| m.max(x.abs())))
        .sum()
}

/// Largest number of entries with `|u_ij| > zero_tol` in any row.
pub fn norm_l0_inf(u: &Mat, zero_tol: f64) -> usize {
    u.row_iter()
        .map(|r| r.iter().filter(|x| x.abs() > zero_tol).count())
        .max()
        .unwrap_or(0)
}

/// `A U Bᵀ`, evaluated in whichever order is cheaper.
pub fn apply_forward(
    a: &ForwardOperator,
    u: &CoefficientMatrix,
    b: &DictionaryMatrix,
) -> Result<DataMatrix> {
    let (uv, bv) = (u.values(), b.values());
    if uv.ncols() != bv.ncols() {
        bail!(
            Dimension,
            "U has {} columns, B has {} atoms",
            uv.ncols(),
            bv.ncols()
        );
    }
    let w = if uv.ncols() <= bv.nrows() {
        a.apply(uv)? * bv.transpose()
    } else {
        a.apply(&(uv * bv.transpose()))?
    };
    DataMatrix::new(w)
}

/// `W + eta` with i.i.d. `N(0, sigma^2)` entries drawn from ChaCha20 seeded by
/// `seed`, filled in row-major order.
pub fn add_gaussian_noise(w: &DataMatrix, sigma: f64, seed: u64) -> Result<DataMatrix> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        bail!(InvalidParameter, "sigma must be finite and >= 0, got {sigma}");
    }
    if sigma == 0.0 {
        return Ok(w.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(alloc::format!("{e}")))?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = w.values().clone();
    for i in 0..out.nrows() {
        for j in 0..out.ncols() {
            out[(i, j)] += normal.sample(&mut rng);
        }
    }
    DataMatrix::new(out)
}
