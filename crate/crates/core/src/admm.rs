//! Double-split ADMM.
//!
//! The problem
//!
//! ```text
//! min 1/2 ||A U Bᵀ - W||^2 + beta sum(U)   s.t.  U >= 0,  row sums <= v_cap
//! ```
//!
//! is split with `D = U` (carries the constraints and the linear term) and
//! `Z = U Bᵀ` (carries the fidelity). With scaled duals `P`, `Q` one iteration is
//!
//! ```text
//! U <- (lambda (D - P) + mu (Z - Q) B) (lambda I + mu BᵀB)^-1
//! D <- prox(U + P)                         row projection, see `projection`
//! Z <- (AᵀA + mu I)^-1 (AᵀW + mu (U Bᵀ + Q))
//! P <- P - (D - U),   Q <- Q - (Z - U Bᵀ)
//! ```
//!
//! Iteration stops once both primal residuals and the dual residual are below
//! their absolute/relative tolerances. The penalties `lambda`, `mu` are
//! rebalanced against the residuals during the first `adapt_freeze_iter`
//! iterations and kept fixed afterwards.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, Dyn};

use crate::error::{bail, Error, Result};
use crate::model::{CoefficientMatrix, DataMatrix, DictionaryMatrix, ForwardOperator, Mat, NormalSolver, SpatialShape};
use crate::projection::{project_matrix, project_matrix_masked, RowProjectionParams};
use crate::recovery::SupportMap;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    pub v_cap: f64,
    pub beta: f64,
    pub lambda0: f64,
    pub mu0: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Imbalance threshold for `lambda`.
    pub eta1: f64,
    /// Imbalance threshold for `mu`.
    pub eta2: f64,
    /// Factor a penalty is multiplied by when its primal residual dominates.
    pub tau_incr: f64,
    /// Factor a penalty is divided by when the dual residual dominates.
    pub tau_decr: f64,
    pub max_iter: usize,
    pub adapt_freeze_iter: usize,
    /// Adaptation keeps each penalty within `[p0 / range, p0 * range]` of its
    /// initial value.
    pub penalty_range: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            v_cap: 1.0,
            beta: 0.1,
            lambda0: 0.5,
            mu0: 0.1,
            eps_abs: 1e-6,
            eps_rel: 1e-4,
            eta1: 10.0,
            eta2: 10.0,
            tau_incr: 2.0,
            tau_decr: 2.0,
            max_iter: 10_000,
            adapt_freeze_iter: 100,
            penalty_range: 100.0,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        RowProjectionParams::new(self.v_cap, self.beta, self.lambda0)?;
        let positive = [
            ("mu0", self.mu0),
            ("eps_abs", self.eps_abs),
            ("eps_rel", self.eps_rel),
        ];
        for (name, x) in positive {
            if !(x > 0.0) || !x.is_finite() {
                bail!(InvalidParameter, "{name} must be finite and > 0, got {x}");
            }
        }
        let above_one = [
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("tau_incr", self.tau_incr),
            ("tau_decr", self.tau_decr),
            ("penalty_range", self.penalty_range),
        ];
        for (name, x) in above_one {
            if !(x > 1.0) || !x.is_finite() {
                bail!(InvalidParameter, "{name} must be finite and > 1, got {x}");
            }
        }
        if self.max_iter == 0 {
            bail!(InvalidParameter, "max_iter must be positive");
        }
        Ok(())
    }

    fn projection(&self, lambda: f64) -> RowProjectionParams {
        RowProjectionParams {
            v_cap: self.v_cap,
            beta: self.beta,
            lambda,
        }
    }
}

/// All ADMM iterates. `d_old` and `z_old` hold the previous `D` and `Z` for the
/// dual residual; `ubt` caches `U Bᵀ` for the current `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub u: Mat,
    pub d: Mat,
    pub z: Mat,
    pub p: Mat,
    pub q: Mat,
    pub ubt: Mat,
    pub d_old: Mat,
    pub z_old: Mat,
    pub lambda: f64,
    pub mu: f64,
    pub r1: Mat,
    pub r2: Mat,
    pub s: Mat,
    pub iter: usize,
}

impl SolverState {
    /// All-zero iterates for `M` pixels, `N` atoms and `T` samples.
    pub fn zeros(m: usize, n: usize, t: usize, lambda: f64, mu: f64) -> Self {
        let mn = Mat::zeros(m, n);
        let mt = Mat::zeros(m, t);
        SolverState {
            u: mn.clone(),
            d: mn.clone(),
            z: mt.clone(),
            p: mn.clone(),
            q: mt.clone(),
            ubt: mt.clone(),
            d_old: mn.clone(),
            z_old: mt.clone(),
            lambda,
            mu,
            r1: mn.clone(),
            r2: mt,
            s: mn,
            iter: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualNorms {
    pub r1: f64,
    pub r2: f64,
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub eps_pri1: f64,
    pub eps_pri2: f64,
    pub eps_dual: f64,
}

impl Tolerances {
    pub fn satisfied_by(&self, r: &ResidualNorms) -> bool {
        r.r1 <= self.eps_pri1 && r.r2 <= self.eps_pri2 && r.s <= self.eps_dual
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIter,
}

/// Penalties in effect from iteration `iter` on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyChange {
    pub iter: usize,
    pub lambda: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub residual_history: Vec<ResidualNorms>,
    /// Starts with the initial penalties, then one entry per change.
    pub penalty_history: Vec<PenaltyChange>,
    pub objective: f64,
    pub final_tolerances: Tolerances,
}

/// Cholesky factor of `lambda I + mu BᵀB`.
pub fn u_factorization(b: &Mat, lambda: f64, mu: f64) -> Result<Cholesky<f64, Dyn>> {
    let mut g = b.tr_mul(b) * mu;
    for i in 0..g.nrows() {
        g[(i, i)] += lambda;
    }
    Cholesky::new(g).ok_or_else(|| Error::Numerical("lambda I + mu BᵀB not positive definite".into()))
}

/// `U = (lambda (D - P) + mu (Z - Q) B)(lambda I + mu BᵀB)^-1`; refreshes `U Bᵀ`.
pub fn update_u(state: &mut SolverState, b: &Mat, factor: &Cholesky<f64, Dyn>) {
    let rhs = (&state.d - &state.p) * state.lambda + (&state.z - &state.q) * b * state.mu;
    // the system matrix is symmetric, so solve from the left on the transpose
    state.u = factor.solve(&rhs.transpose()).transpose();
    state.ubt = &state.u * b.transpose();
}

/// `D = prox(U + P)`; entries outside `mask` are pinned to zero.
pub fn update_d(state: &mut SolverState, params: &SolverParams, mask: Option<&[Vec<bool>]>) -> Result<()> {
    let g = &state.u + &state.p;
    let p = params.projection(state.lambda);
    let d = match mask {
        Some(m) => project_matrix_masked(&g, &p, m)?,
        None => project_matrix(&g, &p)?,
    };
    state.d_old = core::mem::replace(&mut state.d, d);
    Ok(())
}

/// `Z = (AᵀA + mu I)^-1 (AᵀW + mu (U Bᵀ + Q))`, with `atw = AᵀW` precomputed.
pub fn update_z(state: &mut SolverState, atw: &Mat, solver: &NormalSolver) {
    let rhs = atw + (&state.ubt + &state.q) * state.mu;
    let z = solver.solve(&rhs);
    state.z_old = core::mem::replace(&mut state.z, z);
}

/// `R1 = lambda (D - U)`, `R2 = mu (Z - U Bᵀ)`, `S = lambda (D_old - D) + mu (Z_old - Z) B`.
pub fn compute_residuals(state: &mut SolverState, b: &Mat) -> ResidualNorms {
    state.r1 = (&state.d - &state.u) * state.lambda;
    state.r2 = (&state.z - &state.ubt) * state.mu;
    state.s = (&state.d_old - &state.d) * state.lambda + (&state.z_old - &state.z) * b * state.mu;
    ResidualNorms {
        r1: state.r1.norm(),
        r2: state.r2.norm(),
        s: state.s.norm(),
    }
}

pub fn update_tolerances(state: &SolverState, b: &Mat, eps_abs: f64, eps_rel: f64) -> Tolerances {
    let (m, n) = state.u.shape();
    let t = state.z.ncols();
    let dual = &state.p * state.lambda + &state.q * b * state.mu;
    Tolerances {
        eps_pri1: libm::sqrt((m * n) as f64) * eps_abs + eps_rel * state.u.norm().max(state.d.norm()),
        eps_pri2: libm::sqrt((m * t) as f64) * eps_abs + eps_rel * state.ubt.norm().max(state.z.norm()),
        eps_dual: libm::sqrt((m * n) as f64) * eps_abs + eps_rel * dual.norm(),
    }
}

/// Which penalties [`adapt_penalties`] changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Adapted {
    pub lambda: bool,
    pub mu: bool,
}

/// Rebalances `lambda` against `(R1, S)` and `mu` against `(R2, S)`, rescaling
/// the matching scaled dual so `lambda P` and `mu Q` are unchanged. No-op once
/// `state.iter >= adapt_freeze_iter`.
pub fn adapt_penalties(state: &mut SolverState, r: &ResidualNorms, params: &SolverParams) -> Adapted {
    let mut out = Adapted::default();
    if state.iter >= params.adapt_freeze_iter {
        return out;
    }
    let (lo_l, hi_l) = (params.lambda0 / params.penalty_range, params.lambda0 * params.penalty_range);
    let (lo_m, hi_m) = (params.mu0 / params.penalty_range, params.mu0 * params.penalty_range);
    if r.r1 > params.eta1 * r.s && state.lambda * params.tau_incr <= hi_l {
        state.lambda *= params.tau_incr;
        state.p /= params.tau_incr;
        out.lambda = true;
    } else if r.s > params.eta1 * r.r1 && state.lambda / params.tau_decr >= lo_l {
        state.lambda /= params.tau_decr;
        state.p *= params.tau_decr;
        out.lambda = true;
    }
    if r.r2 > params.eta2 * r.s && state.mu * params.tau_incr <= hi_m {
        state.mu *= params.tau_incr;
        state.q /= params.tau_incr;
        out.mu = true;
    } else if r.s > params.eta2 * r.r2 && state.mu / params.tau_decr >= lo_m {
        state.mu /= params.tau_decr;
        state.q *= params.tau_decr;
        out.mu = true;
    }
    out
}

/// `P <- P - (D - U)`, `Q <- Q - (Z - U Bᵀ)`.
pub fn dual_updates(state: &mut SolverState) {
    state.p -= &state.d - &state.u;
    state.q -= &state.z - &state.ubt;
}

/// `||P|| ||R1|| + ||Q|| ||R2|| + d ||S||`, a bound on the objective gap given
/// an estimate `d` of the distance to a minimizer. Diagnostic only.
pub fn suboptimality_bound(state: &SolverState, d_estimate: f64) -> f64 {
    state.p.norm() * state.r1.norm() + state.q.norm() * state.r2.norm() + d_estimate * state.s.norm()
}

/// `1/2 ||A U Bᵀ - W||^2 + beta sum(U)`.
pub fn objective(a: &ForwardOperator, b: &Mat, w: &Mat, u: &Mat, beta: f64) -> Result<f64> {
    let r = a.apply(&(u * b.transpose()))? - w;
    Ok(0.5 * r.norm_squared() + beta * u.sum())
}

fn spatial_shape(a: &ForwardOperator) -> SpatialShape {
    match a {
        ForwardOperator::Conv2d(c) => c.shape(),
        ForwardOperator::Dense(m) => SpatialShape::flat(m.ncols()),
    }
}

/// ADMM driver that owns the iterates and the cached factorizations.
pub struct Admm<'a> {
    a: &'a ForwardOperator,
    b: &'a Mat,
    w: &'a Mat,
    params: SolverParams,
    mask: Option<Vec<Vec<bool>>>,
    atw: Mat,
    u_factor: Cholesky<f64, Dyn>,
    z_solver: NormalSolver,
    state: SolverState,
    history: Vec<ResidualNorms>,
    penalties: Vec<PenaltyChange>,
    tolerances: Tolerances,
}

impl<'a> Admm<'a> {
    pub fn new(
        a: &'a ForwardOperator,
        b: &'a DictionaryMatrix,
        w: &'a DataMatrix,
        params: SolverParams,
    ) -> Result<Self> {
        params.validate()?;
        let (b, w) = (b.values(), w.values());
        if w.nrows() != a.out_dim() || w.ncols() != b.nrows() {
            bail!(
                Dimension,
                "data is {}x{}, expected {}x{}",
                w.nrows(),
                w.ncols(),
                a.out_dim(),
                b.nrows()
            );
        }
        let (m, n, t) = (a.in_dim(), b.ncols(), b.nrows());
        let state = SolverState::zeros(m, n, t, params.lambda0, params.mu0);
        Ok(Admm {
            a,
            b,
            w,
            atw: a.adjoint(w)?,
            u_factor: u_factorization(b, params.lambda0, params.mu0)?,
            z_solver: a.normal_solver(params.mu0)?,
            mask: None,
            history: Vec::new(),
            penalties: vec![PenaltyChange {
                iter: 0,
                lambda: params.lambda0,
                mu: params.mu0,
            }],
            tolerances: Tolerances {
                eps_pri1: 0.0,
                eps_pri2: 0.0,
                eps_dual: 0.0,
            },
            params,
            state,
        })
    }

    /// Restricts `D` (and hence the result) to entries where `mask` is true.
    pub fn with_mask(mut self, mask: Vec<Vec<bool>>) -> Result<Self> {
        let (m, n) = self.state.d.shape();
        if mask.len() != m || mask.iter().any(|r| r.len() != n) {
            bail!(Dimension, "mask must be {m}x{n}");
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    /// Runs one iteration and reports whether all residuals are within tolerance.
    pub fn step(&mut self) -> Result<bool> {
        let st = &mut self.state;
        update_u(st, self.b, &self.u_factor);
        update_d(st, &self.params, self.mask.as_deref())?;
        update_z(st, &self.atw, &self.z_solver);
        let r = compute_residuals(st, self.b);
        dual_updates(st);
        st.iter += 1;
        self.tolerances = update_tolerances(st, self.b, self.params.eps_abs, self.params.eps_rel);
        self.history.push(r);
        if ![r.r1, r.r2, r.s].iter().all(|x| x.is_finite()) {
            bail!(Numerical, "residuals became non-finite at iteration {}", st.iter);
        }
        if self.tolerances.satisfied_by(&r) {
            return Ok(true);
        }
        let changed = adapt_penalties(st, &r, &self.params);
        if changed.lambda || changed.mu {
            self.u_factor = u_factorization(self.b, st.lambda, st.mu)?;
            if changed.mu {
                self.z_solver = self.a.normal_solver(st.mu)?;
            }
            self.penalties.push(PenaltyChange {
                iter: st.iter,
                lambda: st.lambda,
                mu: st.mu,
            });
        }
        Ok(false)
    }

    /// Iterates until convergence or `max_iter`, returning the feasible `D` iterate.
    pub fn run(mut self) -> Result<(CoefficientMatrix, SolveReport)> {
        let mut stop = StopReason::MaxIter;
        while self.state.iter < self.params.max_iter {
            if self.step()? {
                stop = StopReason::Converged;
                break;
            }
        }
        let objective = objective(self.a, self.b, self.w, &self.state.d, self.params.beta)?;
        let report = SolveReport {
            iterations: self.state.iter,
            stop_reason: stop,
            residual_history: self.history,
            penalty_history: self.penalties,
            objective,
            final_tolerances: self.tolerances,
        };
        let u = CoefficientMatrix::nonnegative(self.state.d, spatial_shape(self.a))?;
        Ok((u, report))
    }
}

/// Solves the capped, `beta`-weighted nonnegative fit from all-zero iterates.
pub fn solve(
    a: &ForwardOperator,
    b: &DictionaryMatrix,
    w: &DataMatrix,
    params: &SolverParams,
) -> Result<(CoefficientMatrix, SolveReport)> {
    Admm::new(a, b, w, params.clone())?.run()
}

/// Nonnegative least squares restricted to `support`: the same ADMM with
/// `beta = 0`, an inactive cap of `1e6 max(1, ||W||)` and all entries outside
/// the support pinned to zero. Tolerances and iteration limits come from `params`.
pub fn debias_on_support(
    a: &ForwardOperator,
    b: &DictionaryMatrix,
    w: &DataMatrix,
    support: &SupportMap,
    params: &SolverParams,
) -> Result<(CoefficientMatrix, SolveReport)> {
    let (m, n) = (a.in_dim(), b.atoms());
    if support.active.len() != m {
        bail!(Dimension, "support has {} rows, expected {m}", support.active.len());
    }
    let mut mask = vec![vec![false; n]; m];
    for (row, active) in mask.iter_mut().zip(&support.active) {
        for &j in active {
            if j >= n {
                bail!(Dimension, "support index {j} out of range for {n} atoms");
            }
            row[j] = true;
        }
    }
    let mut p = params.clone();
    p.beta = 0.0;
    p.v_cap = 1e6 * w.values().norm().max(1.0);
    if support.is_empty() {
        let u = CoefficientMatrix::nonnegative(Mat::zeros(m, n), spatial_shape(a))?;
        let report = SolveReport {
            iterations: 0,
            stop_reason: StopReason::Converged,
            residual_history: Vec::new(),
            penalty_history: Vec::new(),
            objective: 0.5 * w.values().norm_squared(),
            final_tolerances: Tolerances {
                eps_pri1: 0.0,
                eps_pri2: 0.0,
                eps_dual: 0.0,
            },
        };
        return Ok((u, report));
    }
    Admm::new(a, b, w, p)?.with_mask(mask)?.run()
}
