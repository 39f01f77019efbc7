//! Prox of `beta * sum(d) + indicator{d >= 0, sum(d) <= v_cap}`, row by row.
//!
//! For a row `g` this returns the minimizer of
//! `lambda/2 ||d - g||^2 + beta sum_j d_j` subject to `d >= 0`, `sum_j d_j <= v_cap`.
//! The shrinkage by `beta / lambda` is applied first; if the clipped result
//! already fits under the cap it is the answer, otherwise the row is projected
//! onto the face `sum_j d_j = v_cap` with a sort-and-threshold step.

use alloc::vec::Vec;

use crate::error::{bail, Error, Result};
use crate::model::Mat;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowProjectionParams {
    pub v_cap: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl RowProjectionParams {
    pub fn new(v_cap: f64, beta: f64, lambda: f64) -> Result<Self> {
        let p = RowProjectionParams { v_cap, beta, lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_cap > 0.0) || self.v_cap.is_nan() {
            bail!(InvalidParameter, "v_cap must be > 0, got {}", self.v_cap);
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            bail!(InvalidParameter, "lambda must be finite and > 0, got {}", self.lambda);
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            bail!(InvalidParameter, "beta must be finite and >= 0, got {}", self.beta);
        }
        Ok(())
    }
}

/// Reusable buffers so the matrix version does not allocate per row.
#[derive(Debug, Default)]
struct Scratch {
    h: Vec<f64>,
    order: Vec<usize>,
}

fn project_into(g: &[f64], p: &RowProjectionParams, out: &mut [f64], s: &mut Scratch) {
    let shift = p.beta / p.lambda;
    s.h.clear();
    s.h.extend(g.iter().map(|x| x - shift));
    let clipped: f64 = s.h.iter().map(|x| x.max(0.0)).sum();
    if clipped <= p.v_cap {
        for (o, h) in out.iter_mut().zip(&s.h) {
            *o = h.max(0.0);
        }
        return;
    }
    s.order.clear();
    s.order.extend(0..s.h.len());
    let h = &s.h;
    // stable: ties keep index order
    s.order.sort_by(|&a, &b| h[b].total_cmp(&h[a]));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &idx) in s.order.iter().enumerate() {
        cumsum += h[idx];
        let t = (cumsum - p.v_cap) / (j + 1) as f64;
        if h[idx] - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    let mut total = 0.0;
    for (o, x) in out.iter_mut().zip(h) {
        *o = (x - theta).max(0.0);
        total += *o;
    }
    // cancellation in `cumsum` can leave the sum a few ulps of |h| above the cap
    if total > p.v_cap {
        let scale = p.v_cap / total;
        out.iter_mut().for_each(|o| *o *= scale);
    }
}

fn check_row(g: &[f64]) -> Result<()> {
    if g.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("projection input"))
    }
}

pub fn project_row(g: &[f64], p: &RowProjectionParams) -> Result<Vec<f64>> {
    p.validate()?;
    check_row(g)?;
    let mut out = alloc::vec![0.0; g.len()];
    project_into(g, p, &mut out, &mut Scratch::default());
    Ok(out)
}

/// Applies [`project_row`] to every row; the result is entrywise nonnegative.
pub fn project_matrix(g: &Mat, p: &RowProjectionParams) -> Result<Mat> {
    project_rows(g, p, None)
}

/// As [`project_matrix`], but entries with `mask[(i, j)] == false` are fixed to
/// zero and the remaining entries of each row are projected on their own.
pub fn project_matrix_masked(g: &Mat, p: &RowProjectionParams, mask: &[Vec<bool>]) -> Result<Mat> {
    if mask.len() != g.nrows() || mask.iter().any(|r| r.len() != g.ncols()) {
        bail!(Dimension, "mask shape does not match {}x{}", g.nrows(), g.ncols());
    }
    project_rows(g, p, Some(mask))
}

fn project_rows(g: &Mat, p: &RowProjectionParams, mask: Option<&[Vec<bool>]>) -> Result<Mat> {
    p.validate()?;
    if !g.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("projection input"));
    }
    let (m, n) = g.shape();
    let mut out = Mat::zeros(m, n);
    let mut scratch = Scratch::default();
    let mut row = Vec::with_capacity(n);
    let mut res = alloc::vec![0.0; n];
    let mut cols = Vec::with_capacity(n);
    for i in 0..m {
        row.clear();
        cols.clear();
        for j in 0..n {
            if mask.is_none_or(|mk| mk[i][j]) {
                row.push(g[(i, j)]);
                cols.push(j);
            }
        }
        project_into(&row, p, &mut res[..row.len()], &mut scratch);
        for (k, &j) in cols.iter().enumerate() {
            out[(i, j)] = res[k];
        }
    }
    Ok(out)
}
