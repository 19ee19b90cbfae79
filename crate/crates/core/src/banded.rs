//! General banded LU with partial pivoting.
//!
//! Storage follows the classic band scheme: row i keeps its entries in a
//! sliding window of width kl+ku+1 starting at column i-kl. Factorization
//! allows the usual kl extra fill-in columns and records row swaps, so the
//! solver copes with the indefinite Jacobians that show up near folds.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    rows: Vec<f64>, // n x (kl + ku + 1), rows[i*mm + (j - i + kl)] = A[i][j]
}

impl BandedMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let mm = kl + ku + 1;
        BandedMatrix { n, kl, ku, rows: vec![0.0; n * mm] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> Option<usize> {
        let mm = self.kl + self.ku + 1;
        if i >= self.n || j >= self.n {
            return None;
        }
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.n - 1);
        if j < lo || j > hi {
            return None;
        }
        Some(i * mm + (j + self.kl - i))
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j).expect("entry outside band");
        self.rows[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j).expect("entry outside band");
        self.rows[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.idx(i, j).map(|k| self.rows[k]).unwrap_or(0.0)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let mm = self.kl + self.ku + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut s = 0.0;
            for j in lo..=hi {
                s += self.rows[i * mm + (j + self.kl - i)] * x[j];
            }
            y[i] = s;
        }
    }

    /// LU-factorize with partial pivoting, consuming the matrix.
    pub fn factor(self) -> Result<BandedLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mm = kl + ku + 1;
        let width = mm + kl; // fill-in room
        let mut a = vec![0.0f64; n * width];
        for i in 0..n {
            for j in 0..mm {
                a[i * width + j] = self.rows[i * mm + j];
            }
        }
        // left-justify the first kl rows (their windows start before column 0)
        for i in 0..kl.min(n) {
            let shift = kl - i;
            for j in shift..mm {
                a[i * width + j - shift] = a[i * width + j];
            }
            for j in (mm - shift)..mm {
                a[i * width + j] = 0.0;
            }
        }
        let mut low = vec![0.0f64; n * kl.max(1)];
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut ipiv = k;
            let mut best = a[k * width].abs();
            for i in (k + 1)..=last {
                let v = a[i * width].abs();
                if v > best {
                    best = v;
                    ipiv = i;
                }
            }
            piv[k] = ipiv;
            if best == 0.0 {
                return Err(Error::Solver(format!("pivot failure at row {k}: zero pivot")));
            }
            if ipiv != k {
                for j in 0..width {
                    a.swap(k * width + j, ipiv * width + j);
                }
            }
            let pivot = a[k * width];
            for i in (k + 1)..=last {
                let m = a[i * width] / pivot;
                low[k * kl.max(1) + (i - k - 1)] = m;
                for j in 1..width {
                    a[i * width + j - 1] = a[i * width + j] - m * a[k * width + j];
                }
                a[i * width + width - 1] = 0.0;
            }
        }
        Ok(BandedLu { n, kl, width, upper: a, low, piv })
    }
}

#[derive(Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    width: usize,
    upper: Vec<f64>,
    low: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let (n, kl, width) = (self.n, self.kl, self.width);
        for k in 0..n {
            let ip = self.piv[k];
            if ip != k {
                b.swap(k, ip);
            }
            let last = (k + kl).min(n - 1);
            for i in (k + 1)..=last {
                b[i] -= self.low[k * kl.max(1) + (i - k - 1)] * b[k];
            }
        }
        let mut l = 1usize;
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in 1..l {
                s -= self.upper[i * width + k] * b[i + k];
            }
            b[i] = s / self.upper[i * width];
            if l < width {
                l += 1;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
