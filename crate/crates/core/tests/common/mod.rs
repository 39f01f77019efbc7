#![allow(dead_code)]

use locsparse_core::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

pub fn inner(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn l1_inf(u: &Mat) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..u.nrows() {
        let mut s = 0.0;
        for j in 0..u.ncols() {
            s += u[(i, j)].abs();
        }
        best = best.max(s);
    }
    best
}

pub fn inf_1(p: &Mat) -> f64 {
    let mut s = 0.0;
    for i in 0..p.nrows() {
        let mut m: f64 = 0.0;
        for j in 0..p.ncols() {
            m = m.max(p[(i, j)].abs());
        }
        s += m;
    }
    s
}

/// Minimizer of `lambda/2 ||d - g||^2 + beta sum d` over `d >= 0, sum d <= v`
/// by enumerating every positive set and both states of the cap, keeping
/// the KKT points and returning the one with the lowest objective.
pub fn projection_oracle(g: &[f64], v: f64, beta: f64, lambda: f64) -> Vec<f64> {
    let n = g.len();
    let shift = beta / lambda;
    let obj = |d: &[f64]| {
        0.5 * lambda * d.iter().zip(g).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
            + beta * d.iter().sum::<f64>()
    };
    let slack = 1e-12;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << n) {
        let set: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        for cap_active in [false, true] {
            let theta = if cap_active {
                if set.is_empty() {
                    continue;
                }
                let s: f64 = set.iter().map(|&j| g[j] - shift).sum();
                (s - v) / set.len() as f64
            } else {
                0.0
            };
            if theta < -slack {
                continue;
            }
            let mut d = vec![0.0; n];
            for &j in &set {
                d[j] = g[j] - shift - theta;
            }
            let ok_pos = set.iter().all(|&j| d[j] >= -slack);
            let ok_zero = (0..n)
                .filter(|j| !set.contains(j))
                .all(|j| g[j] - shift - theta <= slack);
            let total: f64 = d.iter().sum();
            let ok_cap = if cap_active {
                (total - v).abs() <= 1e-9 * v.max(1.0)
            } else {
                total <= v + slack
            };
            if ok_pos && ok_zero && ok_cap {
                for x in d.iter_mut() {
                    *x = x.max(0.0);
                }
                let f = obj(&d);
                if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                    best = Some((f, d));
                }
            }
        }
    }
    best.expect("some KKT point always exists").1
}

/// A random element of the subdifferential of `l1,inf` at `u`.
pub fn random_certificate(u: &Mat, seed: u64) -> Mat {
    let mut r = rng(seed);
    let top = l1_inf(u);
    let mut p = Mat::zeros(u.nrows(), u.ncols());
    let rows: Vec<usize> = if top == 0.0 {
        (0..u.nrows()).collect()
    } else {
        (0..u.nrows())
            .filter(|&i| u.row(i).iter().map(|x| x.abs()).sum::<f64>() >= top * (1.0 - 1e-12))
            .collect()
    };
    let raw: Vec<f64> = rows.iter().map(|_| r.random_range(0.0..1.0)).collect();
    let total: f64 = raw.iter().sum::<f64>().max(1e-300);
    let budget = if top == 0.0 { r.random_range(0.0..1.0) } else { 1.0 };
    for (k, &i) in rows.iter().enumerate() {
        let w = raw[k] / total * budget;
        for j in 0..u.ncols() {
            p[(i, j)] = if u[(i, j)] > 0.0 {
                w
            } else if u[(i, j)] < 0.0 {
                -w
            } else {
                r.random_range(-w..=w)
            };
        }
    }
    p
}
