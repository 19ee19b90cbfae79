//! Scalar ground state U of -ΔU + U = U^3 and its two-parameter scaled
//! family U_{λ,μ}(r) = sqrt(λ/μ) U(sqrt(λ) r).
//!
//! The solve is two-stage: shooting with bisection on U(0) gives a profile
//! well inside Newton's basin, then Newton on the production grid drives the
//! discrete residual to roundoff. The reported central value extrapolates to
//! r = 0 through the first three staggered nodes and removes the leading
//! O(h^2) grid bias with a second solve at half resolution.

use std::ops::ControlFlow;
use std::sync::Arc;

use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::grid::{self, RadialField, RadialGrid};
use crate::interp::MonotoneCubic;
use crate::ode::{self, AdaptiveOptions, StepPoint};
use crate::operator::BandedOperator;

const SHOOT_BRACKET: (f64, f64) = (1.0, 10.0);
const SHOOT_R_END: f64 = 25.0;

#[derive(Debug, Clone)]
pub struct GroundState {
    field: RadialField,
    central_value: f64,
    sobolev_s: f64,
    mass: f64,
    l4: f64,
    residual_inf: f64,
}

impl GroundState {
    pub fn field(&self) -> &RadialField {
        &self.field
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.field.grid()
    }

    /// U(0), extrapolated to the origin and corrected for grid bias.
    pub fn central_value(&self) -> f64 {
        self.central_value
    }

    /// S = |U|_4^2, the sharp H^1 -> L^4 embedding constant.
    pub fn sobolev_s(&self) -> f64 {
        self.sobolev_s
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn l4(&self) -> f64 {
        self.l4
    }

    pub fn residual_inf(&self) -> f64 {
        self.residual_inf
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shot {
    Crossed,
    Turned,
    Undecided,
}

fn classify_shot(u0: f64, r_end: f64) -> Shot {
    let r0 = 1e-6;
    let c = u0 - u0 * u0 * u0;
    let y0 = [u0 + c * r0 * r0 / 6.0, c * r0 / 3.0];
    let res = ode::integrate(
        |r, y| [y[1], y[0] - y[0] * y[0] * y[0] - 2.0 * y[1] / r],
        r0,
        y0,
        r_end,
        &AdaptiveOptions::default(),
        |p: StepPoint| {
            if p.y[0] < 0.0 {
                ControlFlow::Break(Shot::Crossed)
            } else if p.y[1] > 0.0 && p.y[0] < 1.0 {
                ControlFlow::Break(Shot::Turned)
            } else {
                ControlFlow::Continue(())
            }
        },
    );
    match res {
        Err(shot) => shot,
        Ok(_) => Shot::Undecided,
    }
}

/// Bisection on U(0): trajectories that cross zero bracket the ground state
/// from above, trajectories that turn upward bracket it from below.
fn shoot_central_value(r_end: f64) -> Result<f64> {
    let (mut lo, mut hi) = SHOOT_BRACKET;
    if classify_shot(hi, r_end) != Shot::Crossed {
        return Err(Error::Config(
            "shooting bracket not found: upper trajectory did not cross zero (grid too small?)".into(),
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match classify_shot(mid, r_end) {
            Shot::Crossed => hi = mid,
            _ => lo = mid,
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Integrate once more at the bisected U(0) and keep the profile, cut before
/// the unstable mode contaminates it, with an e^{-r}/r tail beyond.
fn shooting_profile(u0: f64, r_end: f64) -> Result<MonotoneCubic> {
    let r0 = 1e-6;
    let c = u0 - u0 * u0 * u0;
    let y0 = [u0 + c * r0 * r0 / 6.0, c * r0 / 3.0];
    let mut rs = vec![0.0];
    let mut us = vec![u0];
    let res = ode::integrate(
        |r, y| [y[1], y[0] - y[0] * y[0] * y[0] - 2.0 * y[1] / r],
        r0,
        y0,
        r_end,
        &AdaptiveOptions { h_max: 0.05, ..Default::default() },
        |p: StepPoint| {
            // stop once the trajectory stops decaying (contamination) or dies
            if p.y[0] <= 1e-13 || (p.y[1] > 0.0 && p.y[0] < 1.0) {
                ControlFlow::Break(())
            } else {
                rs.push(p.t);
                us.push(p.y[0]);
                ControlFlow::Continue(())
            }
        },
    );
    let _ = res;
    // drop the last stretch where the growing mode may already be visible
    let keep = (rs.len() as f64 * 0.9) as usize;
    rs.truncate(keep.max(8));
    us.truncate(keep.max(8));
    MonotoneCubic::new(rs, us)
}

fn sample_profile(profile: &MonotoneCubic, r_match: f64, r: f64) -> f64 {
    if r <= r_match {
        profile.eval(r)
    } else {
        let u_m = profile.eval(r_match);
        u_m * (r_match / r) * (-(r - r_match)).exp()
    }
}

/// Newton iteration for -Δu + u = u^3 on the grid. The linearization
/// -Δ + 1 - 3u^2 is indefinite (one negative direction), so the step uses
/// the pivoted banded LU rather than the definite solver.
fn newton_refine(grid: &Arc<RadialGrid>, mut u: Vec<f64>) -> Result<(RadialField, f64)> {
    let n = grid.len();
    let lap = BandedOperator::laplacian_plus_const(grid.clone(), 1.0)?;
    let mut best_res = f64::INFINITY;
    let mut stall = 0;
    for _ in 0..80 {
        let mut res = vec![0.0; n];
        let mut res_inf = 0.0f64;
        for i in 0..n {
            res[i] = scalar_residual_at(&lap, &u, i, 0.0, 1.0);
            res_inf = res_inf.max(res[i].abs());
        }
        // stop at convergence, or once the residual bounces on the roundoff
        // floor instead of improving
        if res_inf >= best_res {
            stall += 1;
        } else {
            stall = 0;
        }
        if res_inf < 1e-12 || stall >= 2 {
            let uf = RadialField::from_values_unchecked(grid.clone(), u);
            return Ok((uf, res_inf));
        }
        best_res = best_res.min(res_inf);
        let mut jac = BandedMatrix::new(n, 1, 1);
        for i in 0..n {
            let (lo, diag, hi) = lap.row(i);
            if i > 0 {
                jac.set(i, i - 1, lo);
            }
            jac.set(i, i, diag - 3.0 * u[i] * u[i]);
            if i + 1 < n {
                jac.set(i, i + 1, hi);
            }
        }
        let lu = jac.factor()?;
        let mut step: Vec<f64> = res.iter().map(|r| -r).collect();
        lu.solve_in_place(&mut step);
        for i in 0..n {
            u[i] += step[i];
        }
    }
    Err(Error::NonConvergence { iterations: 80, residual: best_res })
}

/// Compensated residual of -Δu + (1 + shift) u - mu u³ at one node; the
/// stencil terms are O(u/h²) and cancel to the residual scale, so they are
/// summed with Neumaier compensation.
#[inline]
fn scalar_residual_at(lap: &BandedOperator, u: &[f64], i: usize, shift: f64, mu: f64) -> f64 {
    let n = u.len();
    let (lo, diag, hi) = lap.row(i);
    let um = if i > 0 { u[i - 1] } else { 0.0 };
    let up = if i + 1 < n { u[i + 1] } else { 0.0 };
    let terms = [
        lo * um,
        diag * u[i],
        hi * up,
        shift * u[i],
        -mu * u[i] * u[i] * u[i],
    ];
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for t in terms {
        let x = s + t;
        if s.abs() >= t.abs() {
            c += (s - x) + t;
        } else {
            c += (t - x) + s;
        }
        s = x;
    }
    s + c
}

/// Quadratic fit through the first three staggered nodes, evaluated at r=0.
pub(crate) fn extrapolate_to_origin(grid: &RadialGrid, values: &[f64]) -> f64 {
    let r = grid.nodes();
    let (x0, x1, x2) = (r[0], r[1], r[2]);
    let (y0, y1, y2) = (values[0], values[1], values[2]);
    // Lagrange basis at 0
    y0 * (x1 * x2) / ((x1 - x0) * (x2 - x0))
        + y1 * (x0 * x2) / ((x0 - x1) * (x2 - x1))
        + y2 * (x0 * x1) / ((x0 - x2) * (x1 - x2))
}

fn solve_on_grid(grid: &Arc<RadialGrid>, profile: &MonotoneCubic, r_match: f64) -> Result<(RadialField, f64)> {
    let guess: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&r| sample_profile(profile, r_match, r))
        .collect();
    newton_refine(grid, guess)
}

fn diagnostics(field: &RadialField, central_value: f64, residual_inf: f64) -> Result<GroundState> {
    let mass = grid::l2_norm(field);
    let l4 = grid::l4_norm4(field).powf(0.25);
    let sobolev_s = l4 * l4;
    let gs = GroundState { field: field.clone(), central_value, sobolev_s, mass, l4, residual_inf };
    // invariant checks
    let v = gs.field.values();
    if v.iter().any(|&x| x <= 0.0) {
        return Err(Error::Degeneracy("ground state lost positivity".into()));
    }
    if v.windows(2).any(|p| p[1] >= p[0]) {
        return Err(Error::Degeneracy("ground state is not strictly decreasing".into()));
    }
    if residual_inf > 1e-8 {
        return Err(Error::Accuracy(format!(
            "ground-state residual {residual_inf:.3e} exceeds 1e-8; refine the grid"
        )));
    }
    let h1 = grid::grad_norm2(&gs.field) + mass * mass;
    let rel = (h1 - sobolev_s * sobolev_s).abs() / h1;
    if rel > 1e-3 {
        return Err(Error::Accuracy(format!(
            "embedding-constant identity off by {rel:.3e}; refine the grid"
        )));
    }
    Ok(gs)
}

/// Interpolant of a sampled radial profile including the origin, with the
/// r = 0 value taken from the field's own quadratic extrapolation so the
/// data stays kink-free.
pub(crate) fn field_profile(field: &RadialField) -> Result<MonotoneCubic> {
    let g = field.grid();
    let mut xs = Vec::with_capacity(g.len() + 1);
    let mut ys = Vec::with_capacity(g.len() + 1);
    xs.push(0.0);
    ys.push(extrapolate_to_origin(g, field.values()));
    xs.extend_from_slice(g.nodes());
    ys.extend_from_slice(field.values());
    MonotoneCubic::new(xs, ys)
}

/// Compute the ground state on `grid`.
pub fn solve_scalar_ground_state(grid_in: &Arc<RadialGrid>) -> Result<GroundState> {
    if grid_in.len() < 500 || grid_in.r_max() < 15.0 {
        return Err(Error::Parameter(
            "ground-state solve needs n >= 500 and r_max >= 15".into(),
        ));
    }
    let r_end = SHOOT_R_END.min(grid_in.r_max());
    let u0 = shoot_central_value(r_end)?;
    let profile = shooting_profile(u0, r_end)?;
    let r_match = (0.55 * r_end).min(12.0);
    let (field, residual_inf) = solve_on_grid(grid_in, &profile, r_match)?;
    let c_fine = extrapolate_to_origin(grid_in, field.values());
    // half-resolution twin removes the O(h^2) bias in the central value
    let coarse = grid::make_grid(grid_in.r_max(), grid_in.len() / 2)?;
    let (field_c, _) = solve_on_grid(&coarse, &profile, r_match)?;
    let c_coarse = extrapolate_to_origin(&coarse, field_c.values());
    let h_f = grid_in.spacing();
    let h_c = coarse.spacing();
    let central = (c_fine * h_c * h_c - c_coarse * h_f * h_f) / (h_c * h_c - h_f * h_f);
    diagnostics(&field, central, residual_inf)
}

/// Re-solve the same ground state on another grid (used by the eigensolves on
/// enlarged or refined domains). Cheap: one Newton run from the resampled
/// profile with an exponential tail.
pub fn resample(gs: &GroundState, grid_in: &Arc<RadialGrid>) -> Result<GroundState> {
    if gs.grid() == grid_in {
        return Ok(gs.clone());
    }
    let profile = field_profile(&gs.field)?;
    let r_match = 0.8 * gs.grid().r_max();
    let (field, residual_inf) = solve_on_grid(grid_in, &profile, r_match)?;
    let central = extrapolate_to_origin(grid_in, field.values());
    diagnostics(&field, central, residual_inf)
}

/// The scaled family member U_{λ,μ}(r) = sqrt(λ/μ) U(sqrt(λ) r) resampled on
/// the ground state's grid by monotone cubic interpolation.
pub fn scaled_ground_state(gs: &GroundState, lambda: f64, mu: f64) -> Result<RadialField> {
    scaled_ground_state_on(gs, lambda, mu, gs.grid())
}

pub fn scaled_ground_state_on(
    gs: &GroundState,
    lambda: f64,
    mu: f64,
    grid_in: &Arc<RadialGrid>,
) -> Result<RadialField> {
    if !(lambda > 0.0) || !(mu > 0.0) {
        return Err(Error::Parameter(format!(
            "scaling requires lambda, mu > 0 (got {lambda}, {mu})"
        )));
    }
    let src = gs.field.grid();
    let profile = field_profile(&gs.field)?;
    let amp = (lambda / mu).sqrt();
    let sq = lambda.sqrt();
    let r_match = 0.95 * src.r_max();
    let values: Vec<f64> = grid_in
        .nodes()
        .iter()
        .map(|&r| {
            let arg = sq * r;
            if arg <= r_match {
                amp * profile.eval(arg)
            } else {
                // asymptotic e^{-r}/r tail continues the profile
                let um = profile.eval(r_match);
                amp * um * (r_match / arg) * (-(arg - r_match)).exp()
            }
        })
        .collect();
    RadialField::new(grid_in.clone(), values)
}

/// Discrete semitrivial component: the exact grid solution of
/// -Δw + λ w = μ w^3, obtained by polishing the scaled profile.
pub fn semitrivial_profile(gs: &GroundState, lambda: f64, mu: f64) -> Result<RadialField> {
    let guess = scaled_ground_state(gs, lambda, mu)?;
    let n = guess.grid().len();
    let grid_in = guess.grid().clone();
    let lap = BandedOperator::laplacian_plus_const(grid_in.clone(), lambda)?;
    let mut u = guess.values().to_vec();
    let mut best = f64::INFINITY;
    let mut stall = 0;
    for _ in 0..80 {
        let mut res = vec![0.0; n];
        let mut res_inf = 0.0f64;
        for i in 0..n {
            res[i] = scalar_residual_at(&lap, &u, i, 0.0, mu);
            res_inf = res_inf.max(res[i].abs());
        }
        if res_inf >= best {
            stall += 1;
        } else {
            stall = 0;
        }
        if res_inf < 1e-12 * lambda.max(1.0) || stall >= 2 {
            return Ok(RadialField::from_values_unchecked(grid_in.clone(), u));
        }
        best = best.min(res_inf);
        let mut jac = BandedMatrix::new(n, 1, 1);
        for i in 0..n {
            let (lo, diag, hi) = lap.row(i);
            if i > 0 {
                jac.set(i, i - 1, lo);
            }
            jac.set(i, i, diag - 3.0 * mu * u[i] * u[i]);
            if i + 1 < n {
                jac.set(i, i + 1, hi);
            }
        }
        let lu = jac.factor()?;
        let mut step: Vec<f64> = res.iter().map(|r| -r).collect();
        lu.solve_in_place(&mut step);
        for i in 0..n {
            u[i] += step[i];
        }
    }
    Err(Error::NonConvergence { iterations: 80, residual: best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn default_gs() -> GroundState {
        let g = make_grid(20.0, 2000).unwrap();
        solve_scalar_ground_state(&g).unwrap()
    }

    #[test]
    fn central_value_and_shape() {
        let gs = default_gs();
        // value pinned by the adaptive shooting stage
        assert!((gs.central_value() - 4.3374).abs() < 2e-3, "U(0)={}", gs.central_value());
        assert!(gs.residual_inf() <= 1e-8);
        let v = gs.field().values();
        assert!(v.windows(2).all(|p| p[1] < p[0]), "not strictly decreasing");
        assert!(v.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn embedding_constant_identity() {
        let gs = default_gs();
        // |U|_4^4 = |grad U|_2^2 + |U|_2^2
        let lhs = gs.l4().powi(4);
        let rhs = grid::grad_norm2(gs.field()) + gs.mass() * gs.mass();
        assert!((lhs - rhs).abs() <= 1e-3 * rhs.abs(), "lhs {lhs} rhs {rhs}");
        assert!((gs.sobolev_s() - gs.l4() * gs.l4()).abs() <= 1e-12 * gs.sobolev_s());
    }

    #[test]
    fn fixed_point_property() {
        // (-Δ+1)^{-1}(U^3) = U
        let gs = default_gs();
        let op = BandedOperator::laplacian_plus_const(gs.grid().clone(), 1.0).unwrap();
        let cubed = RadialField::from_values_unchecked(
            gs.grid().clone(),
            gs.field().values().iter().map(|u| u * u * u).collect(),
        );
        let back = op.solve(&cubed).unwrap();
        let mut worst = 0.0f64;
        for i in 0..back.values().len() {
            worst = worst.max((back.values()[i] - gs.field().values()[i]).abs());
        }
        assert!(worst <= 1e-8, "fixed-point defect {worst:.3e}");
    }

    #[test]
    fn scaling_identity_and_mass_laws() {
        let gs = default_gs();
        // identity scaling returns the same field
        let same = scaled_ground_state(&gs, 1.0, 1.0).unwrap();
        let mut worst = 0.0f64;
        for i in 0..same.values().len() {
            worst = worst.max((same.values()[i] - gs.field().values()[i]).abs());
        }
        assert!(worst <= 1e-9, "identity scaling defect {worst:.3e}");
        // mu scaling is a constant amplitude factor
        let quarter = scaled_ground_state(&gs, 1.0, 4.0).unwrap();
        let m = grid::l2_norm(&quarter);
        assert!((m - gs.mass() / 2.0).abs() <= 1e-9 * gs.mass());
    }

    #[test]
    fn mass_scaling_in_lambda() {
        // |U_{4,1}|_2^2 = |U|_2^2 / 2, checked by quadrature on a fine grid
        let g = make_grid(20.0, 32000).unwrap();
        let gs = solve_scalar_ground_state(&g).unwrap();
        let scaled = scaled_ground_state(&gs, 4.0, 1.0).unwrap();
        let lhs = grid::l2_norm(&scaled).powi(2);
        let rhs = gs.mass().powi(2) / 2.0;
        assert!((lhs - rhs).abs() <= 1e-6 * rhs, "lhs {lhs} rhs {rhs}");
    }

    #[test]
    fn scaling_law_at_five_parameter_pairs() {
        let g = make_grid(20.0, 32000).unwrap();
        let gs = solve_scalar_ground_state(&g).unwrap();
        for (lambda, mu) in [(0.5, 1.0), (2.0, 1.0), (1.5, 3.0), (0.8, 0.5), (2.5, 2.0)] {
            let scaled = scaled_ground_state(&gs, lambda, mu).unwrap();
            let lhs = grid::l2_norm(&scaled).powi(2);
            let rhs = lambda.powf(-0.5) / mu * gs.mass().powi(2);
            assert!(
                (lhs - rhs).abs() <= 1e-6 * rhs,
                "lambda={lambda} mu={mu}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn central_value_converges_at_second_order() {
        // raw (un-extrapolated) central values from three grids
        let mut vals = Vec::new();
        for n in [500usize, 1000, 2000] {
            let g = make_grid(20.0, n).unwrap();
            let gs = solve_scalar_ground_state(&g).unwrap();
            let raw = extrapolate_to_origin(g.as_ref(), gs.field().values());
            vals.push(raw);
        }
        let d1 = (vals[0] - vals[1]).abs();
        let d2 = (vals[1] - vals[2]).abs();
        let order = (d1 / d2).log2();
        assert!(order >= 1.8, "observed order {order}");
    }

    #[test]
    fn rejects_insufficient_grids() {
        let g = make_grid(10.0, 2000).unwrap();
        assert!(solve_scalar_ground_state(&g).is_err());
        let g = make_grid(20.0, 499).unwrap();
        assert!(solve_scalar_ground_state(&g).is_err());
    }

    #[test]
    fn scaled_rejects_nonpositive_parameters() {
        let gs = default_gs();
        assert!(scaled_ground_state(&gs, -1.0, 1.0).is_err());
        assert!(scaled_ground_state(&gs, 1.0, 0.0).is_err());
    }

    #[test]
    fn semitrivial_profile_is_discrete_solution() {
        let gs = default_gs();
        let w = semitrivial_profile(&gs, 2.0, 1.5).unwrap();
        let lap = BandedOperator::laplacian_plus_const(gs.grid().clone(), 2.0).unwrap();
        let aw = lap.apply(&w).unwrap();
        let mut worst = 0.0f64;
        for i in 0..w.values().len() {
            worst = worst.max((aw.values()[i] - 1.5 * w.values()[i].powi(3)).abs());
        }
        assert!(worst <= 1e-9, "semitrivial residual {worst:.3e}");
    }
}
