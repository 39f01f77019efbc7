//! Complex FFT for arbitrary lengths.
//!
//! Power-of-two lengths use an iterative radix-2 transform; other lengths go
//! through Bluestein's chirp-z algorithm on a padded power-of-two transform.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

/// A precomputed 1-D transform of fixed length.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    plan: Plan,
}

#[derive(Debug, Clone)]
enum Plan {
    Trivial,
    Radix2 {
        twiddles: Vec<Complex64>,
    },
    Bluestein {
        inner: Box<Fft>,
        chirp: Vec<Complex64>,
        kernel: Vec<Complex64>,
    },
}

fn expi(theta: f64) -> Complex64 {
    Complex64::new(libm::cos(theta), libm::sin(theta))
}

impl Fft {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "fft length must be positive");
        let plan = if n == 1 {
            Plan::Trivial
        } else if n.is_power_of_two() {
            let twiddles = (0..n / 2)
                .map(|k| expi(-2.0 * PI * k as f64 / n as f64))
                .collect();
            Plan::Radix2 { twiddles }
        } else {
            let m = (2 * n - 1).next_power_of_two();
            let inner = Fft::new(m);
            // k^2 mod 2n keeps the chirp phase argument small.
            let chirp: Vec<Complex64> = (0..n)
                .map(|k| {
                    let k2 = (k as u128 * k as u128 % (2 * n as u128)) as f64;
                    expi(-PI * k2 / n as f64)
                })
                .collect();
            let mut kernel = vec![Complex64::new(0.0, 0.0); m];
            kernel[0] = chirp[0].conj();
            for k in 1..n {
                kernel[k] = chirp[k].conj();
                kernel[m - k] = chirp[k].conj();
            }
            inner.forward(&mut kernel);
            Plan::Bluestein {
                inner: Box::new(inner),
                chirp,
                kernel,
            }
        };
        Fft { n, plan }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized forward transform, `X_k = sum_j x_j exp(-2 pi i jk/n)`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n);
        match &self.plan {
            Plan::Trivial => {}
            Plan::Radix2 { twiddles } => radix2(buf, twiddles),
            Plan::Bluestein {
                inner,
                chirp,
                kernel,
            } => {
                let m = inner.len();
                let mut a = vec![Complex64::new(0.0, 0.0); m];
                for k in 0..self.n {
                    a[k] = buf[k] * chirp[k];
                }
                inner.forward(&mut a);
                for (x, k) in a.iter_mut().zip(kernel) {
                    *x *= k;
                }
                inner.inverse(&mut a);
                for k in 0..self.n {
                    buf[k] = a[k] * chirp[k];
                }
            }
        }
    }

    /// Inverse transform including the `1/n` factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        for x in buf.iter_mut() {
            *x = x.conj();
        }
        self.forward(buf);
        let s = 1.0 / self.n as f64;
        for x in buf.iter_mut() {
            *x = x.conj() * s;
        }
    }
}

fn radix2(buf: &mut [Complex64], twiddles: &[Complex64]) {
    let n = buf.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = twiddles[k * step];
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len *= 2;
    }
}

/// 2-D transform over a row-major `rows x cols` buffer.
#[derive(Debug, Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fft: Fft,
    col_fft: Fft,
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        Fft2 {
            rows,
            cols,
            row_fft: Fft::new(cols),
            col_fft: Fft::new(rows),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, false);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, true);
    }

    fn run(&self, buf: &mut [Complex64], inverse: bool) {
        assert_eq!(buf.len(), self.rows * self.cols);
        for row in buf.chunks_exact_mut(self.cols) {
            if inverse {
                self.row_fft.inverse(row);
            } else {
                self.row_fft.forward(row);
            }
        }
        let mut col = vec![Complex64::new(0.0, 0.0); self.rows];
        for c in 0..self.cols {
            for r in 0..self.rows {
                col[r] = buf[r * self.cols + c];
            }
            if inverse {
                self.col_fft.inverse(&mut col);
            } else {
                self.col_fft.forward(&mut col);
            }
            for r in 0..self.rows {
                buf[r * self.cols + c] = col[r];
            }
        }
    }
}
