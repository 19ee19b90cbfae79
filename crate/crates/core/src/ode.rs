//! Embedded Runge-Kutta integrator (Dormand-Prince 5(4)) for the radial
//! shooting stage. Two-component state, adaptive steps, and an observer that
//! can stop the trajectory once its fate is decided.

use std::ops::ControlFlow;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPoint {
    pub t: f64,
    pub y: [f64; 2],
}

pub struct AdaptiveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions { rtol: 1e-10, atol: 1e-12, h_init: 1e-4, h_max: 0.25, max_steps: 2_000_000 }
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrate y' = f(t, y) from (t0, y0) toward t_end.
///
/// The observer sees every accepted step and may break with a verdict.
/// Returns the verdict if one was produced, otherwise the final point.
pub fn integrate<V>(
    f: impl Fn(f64, [f64; 2]) -> [f64; 2],
    t0: f64,
    y0: [f64; 2],
    t_end: f64,
    opts: &AdaptiveOptions,
    mut observer: impl FnMut(StepPoint) -> ControlFlow<V>,
) -> Result<StepPoint, V> {
    let mut t = t0;
    let mut y = y0;
    let mut h = opts.h_init.min(t_end - t0);
    let mut k1 = f(t, y);
    for _ in 0..opts.max_steps {
        if t >= t_end {
            return Ok(StepPoint { t, y });
        }
        h = h.min(t_end - t).min(opts.h_max);
        let k2 = f(t + A21 * h, add(y, h, [(A21, k1)]));
        let k3 = f(t + 0.3 * h, add(y, h, [(A31, k1), (A32, k2)]));
        let k4 = f(t + 0.8 * h, add(y, h, [(A41, k1), (A42, k2), (A43, k3)]));
        let k5 = f(t + 8.0 / 9.0 * h, add(y, h, [(A51, k1), (A52, k2), (A53, k3), (A54, k4)]));
        let y6 = add(y, h, [(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]);
        let k6 = f(t + h, y6);
        let y_new = add(y, h, [(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)]);
        let k7 = f(t + h, y_new);
        let err = {
            let e0 = h * (E1 * k1[0] + E3 * k3[0] + E4 * k4[0] + E5 * k5[0] + E6 * k6[0] + E7 * k7[0]);
            let e1 = h * (E1 * k1[1] + E3 * k3[1] + E4 * k4[1] + E5 * k5[1] + E6 * k6[1] + E7 * k7[1]);
            let s0 = opts.atol + opts.rtol * y[0].abs().max(y_new[0].abs());
            let s1 = opts.atol + opts.rtol * y[1].abs().max(y_new[1].abs());
            ((e0 / s0).powi(2) + (e1 / s1).powi(2)).sqrt() / std::f64::consts::SQRT_2
        };
        if err <= 1.0 {
            t += h;
            y = y_new;
            k1 = k7; // FSAL
            if let ControlFlow::Break(v) = observer(StepPoint { t, y }) {
                return Err(v);
            }
        }
        let factor = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
        h *= factor.clamp(0.2, 5.0);
        if !(h > 0.0) || !h.is_finite() {
            return Ok(StepPoint { t, y });
        }
    }
    Ok(StepPoint { t, y })
}

#[inline]
fn add<const K: usize>(y: [f64; 2], h: f64, terms: [(f64, [f64; 2]); K]) -> [f64; 2] {
    let mut out = y;
    for (c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}
