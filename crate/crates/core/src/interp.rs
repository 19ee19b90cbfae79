//! Monotone piecewise-cubic interpolation (Fritsch-Carlson slope limiting).

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>, // node slopes
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(Error::Parameter("interpolant needs >= 2 matching samples".into()));
        }
        if x.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::Parameter("abscissae must be strictly increasing".into()));
        }
        let n = x.len();
        let mut d = vec![0.0; n - 1];
        for i in 0..n - 1 {
            d[i] = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
        }
        let mut m = vec![0.0; n];
        // three-point one-sided endpoint slopes
        m[0] = if n == 2 {
            d[0]
        } else {
            let (h0, h1) = (x[1] - x[0], x[2] - x[1]);
            ((2.0 * h0 + h1) * d[0] - h0 * d[1]) / (h0 + h1)
        };
        m[n - 1] = if n == 2 {
            d[n - 2]
        } else {
            let (h0, h1) = (x[n - 1] - x[n - 2], x[n - 2] - x[n - 3]);
            ((2.0 * h0 + h1) * d[n - 2] - h0 * d[n - 3]) / (h0 + h1)
        };
        for i in 1..n - 1 {
            m[i] = if d[i - 1] * d[i] <= 0.0 {
                0.0
            } else {
                // harmonic mean weighted by interval lengths
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let wa = 2.0 * h1 + h0;
                let wb = h1 + 2.0 * h0;
                (wa + wb) / (wa / d[i - 1] + wb / d[i])
            };
        }
        // clamp endpoint slopes to preserve monotonicity on end intervals
        for (i, di) in [(0usize, d[0]), (n - 1, d[n - 2])] {
            if m[i] * di <= 0.0 {
                m[i] = 0.0;
            } else if m[i].abs() > 3.0 * di.abs() {
                m[i] = 3.0 * di;
            }
        }
        Ok(MonotoneCubic { x, y, m })
    }

    /// Evaluate at `t`; values are held constant outside the sample range.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let mut lo = 0usize;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.x[mid] <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let h = self.x[lo + 1] - self.x[lo];
        let s = (t - self.x[lo]) / h;
        let (y0, y1) = (self.y[lo], self.y[lo + 1]);
        let (m0, m1) = (self.m[lo] * h, self.m[lo + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        y0 * (2.0 * s3 - 3.0 * s2 + 1.0)
            + m0 * (s3 - 2.0 * s2 + s)
            + y1 * (-2.0 * s3 + 3.0 * s2)
            + m1 * (s3 - s2)
    }
}
