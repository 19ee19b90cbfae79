//! Fixed-(λ, β) solves of the coupled system
//!
//! ```text
//!   -Δu + λu = μ₁u³ + βv²u
//!   -Δv +  v = μ₂v³ + βu²v
//! ```
//!
//! by damped Newton iteration with the exact block Jacobian, plus the
//! closed-form λ = 1 solution, solution diagnostics (masses, mass ratio,
//! energy identities, the scaling identity defect), and deterministic
//! multistart probing used as nonexistence evidence.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::grid::{self, make_grid, RadialField, RadialGrid};
use crate::groundstate::{self, GroundState};
use crate::operator::BandedOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateClass {
    Positive,
    Semitrivial,
    SignChanging,
}

impl std::fmt::Display for StateClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StateClass::Positive => write!(f, "positive"),
            StateClass::Semitrivial => write!(f, "semitrivial"),
            StateClass::SignChanging => write!(f, "sign-changing"),
        }
    }
}

/// Scalar summary of a candidate solution; recomputed whenever fields change,
/// never patched in place.
#[derive(Debug, Clone, Copy)]
pub struct Diagnostics {
    pub mass_u: f64,
    pub mass_v: f64,
    pub l4_u4: f64,
    pub l4_v4: f64,
    /// |uv|₂² cross term.
    pub cross: f64,
    /// mass_u / mass_v; infinite on the second semitrivial family.
    pub rho: f64,
    pub residual_inf: f64,
    pub pohozaev_rel: f64,
}

#[derive(Debug, Clone)]
pub struct CoupledState {
    lambda: f64,
    beta: f64,
    mu1: f64,
    mu2: f64,
    u: RadialField,
    v: RadialField,
    diagnostics: Diagnostics,
}

impl CoupledState {
    pub fn new(
        lambda: f64,
        beta: f64,
        mu1: f64,
        mu2: f64,
        u: RadialField,
        v: RadialField,
    ) -> Result<Self> {
        if !(lambda > 0.0) || !(beta > 0.0) || !(mu1 > 0.0) || !(mu2 > 0.0) {
            return Err(Error::Parameter(format!(
                "state parameters must be positive (lambda={lambda}, beta={beta}, mu1={mu1}, mu2={mu2})"
            )));
        }
        if u.grid() != v.grid() {
            return Err(Error::Parameter("components live on different grids".into()));
        }
        let lap = BandedOperator::laplacian_plus_const(u.grid().clone(), 0.0)?;
        let diagnostics = compute_diagnostics(&lap, lambda, beta, mu1, mu2, &u, &v)?;
        Ok(CoupledState { lambda, beta, mu1, mu2, u, v, diagnostics })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn mu1(&self) -> f64 {
        self.mu1
    }
    pub fn mu2(&self) -> f64 {
        self.mu2
    }
    pub fn u(&self) -> &RadialField {
        &self.u
    }
    pub fn v(&self) -> &RadialField {
        &self.v
    }
    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.u.grid()
    }
    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn classify(&self) -> StateClass {
        let mass_u = self.diagnostics.mass_u;
        let mass_v = self.diagnostics.mass_v;
        // collapse to the trivial solution: compare against the natural
        // amplitude scale of nontrivial states at these parameters
        let amp_ref = (self.lambda / (self.mu1 + self.beta)).sqrt()
            + (1.0 / (self.mu2 + self.beta)).sqrt();
        let amp = self.u.norm_inf().max(self.v.norm_inf());
        if amp < 1e-8 * amp_ref {
            return StateClass::Semitrivial;
        }
        if mass_u < 1e-6 * mass_v || mass_v < 1e-6 * mass_u {
            return StateClass::Semitrivial;
        }
        let negligible = 1e-10 * amp;
        if self.u.min_value() < -negligible || self.v.min_value() < -negligible {
            return StateClass::SignChanging;
        }
        let inner = (0.9 * self.u.grid().len() as f64) as usize;
        let pos = |f: &RadialField| f.values()[..inner].iter().all(|&x| x > 0.0);
        if pos(&self.u) && pos(&self.v) {
            StateClass::Positive
        } else {
            StateClass::SignChanging
        }
    }
}

fn compute_diagnostics(
    lap: &BandedOperator,
    lambda: f64,
    beta: f64,
    mu1: f64,
    mu2: f64,
    u: &RadialField,
    v: &RadialField,
) -> Result<Diagnostics> {
    let mass_u = grid::l2_norm(u);
    let mass_v = grid::l2_norm(v);
    let l4_u4 = grid::l4_norm4(u);
    let l4_v4 = grid::l4_norm4(v);
    let w = u.grid().weights();
    let mut cross = 0.0;
    for i in 0..u.values().len() {
        let p = u.values()[i] * v.values()[i];
        cross += w[i] * p * p;
    }
    cross *= 4.0 * std::f64::consts::PI;
    let p = SystemParams { lambda1: lambda, lambda2: 1.0, beta, mu1, mu2 };
    let (ru, rv) = residual_parts(lap, &p, u.values(), v.values());
    let residual_inf = ru
        .iter()
        .chain(rv.iter())
        .fold(0.0f64, |m, r| m.max(r.abs()));
    let lhs = lambda * mass_u * mass_u + mass_v * mass_v;
    let rhs = 0.25 * (mu1 * l4_u4 + mu2 * l4_v4 + 2.0 * beta * cross);
    let denom = lhs.abs() + rhs.abs();
    let pohozaev_rel = if denom > 0.0 { (lhs - rhs).abs() / denom } else { 0.0 };
    let rho = if mass_v > 0.0 { mass_u / mass_v } else { f64::INFINITY };
    Ok(Diagnostics { mass_u, mass_v, l4_u4, l4_v4, cross, rho, residual_inf, pohozaev_rel })
}

/// Parameters of the general two-frequency system
/// -Δu + λ₁u = μ₁u³ + βv²u, -Δv + λ₂v = μ₂v³ + βu²v.
/// The bifurcation-frame solves fix λ₂ = 1.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SystemParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub beta: f64,
    pub mu1: f64,
    pub mu2: f64,
}

/// Neumaier-compensated sum: the stencil terms are O(u/h²) and cancel to
/// O(residual), so naive accumulation would bury fine-grid residuals in
/// roundoff.
#[inline]
fn compensated_sum<const K: usize>(terms: [f64; K]) -> f64 {
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

pub(crate) fn residual_parts(
    lap: &BandedOperator,
    p: &SystemParams,
    u: &[f64],
    v: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = u.len();
    let mut ru = vec![0.0; n];
    let mut rv = vec![0.0; n];
    for i in 0..n {
        let (lo, diag, hi) = lap.row(i);
        let um = if i > 0 { u[i - 1] } else { 0.0 };
        let up = if i + 1 < n { u[i + 1] } else { 0.0 };
        let vm = if i > 0 { v[i - 1] } else { 0.0 };
        let vp = if i + 1 < n { v[i + 1] } else { 0.0 };
        let (ui, vi) = (u[i], v[i]);
        ru[i] = compensated_sum([
            lo * um,
            diag * ui,
            hi * up,
            p.lambda1 * ui,
            -p.mu1 * ui * ui * ui,
            -p.beta * vi * vi * ui,
        ]);
        rv[i] = compensated_sum([
            lo * vm,
            diag * vi,
            hi * vp,
            p.lambda2 * vi,
            -p.mu2 * vi * vi * vi,
            -p.beta * ui * ui * vi,
        ]);
    }
    (ru, rv)
}

/// Componentwise discrete residuals of both equations.
pub fn residual(state: &CoupledState) -> Result<(RadialField, RadialField)> {
    let lap = BandedOperator::laplacian_plus_const(state.grid().clone(), 0.0)?;
    let p = SystemParams {
        lambda1: state.lambda,
        lambda2: 1.0,
        beta: state.beta,
        mu1: state.mu1,
        mu2: state.mu2,
    };
    let (ru, rv) = residual_parts(&lap, &p, state.u.values(), state.v.values());
    Ok((
        RadialField::from_values_unchecked(state.grid().clone(), ru),
        RadialField::from_values_unchecked(state.grid().clone(), rv),
    ))
}

/// Scaling-identity defect |LHS - RHS| / (|LHS| + |RHS|) with
/// LHS = λ|u|₂² + |v|₂² and RHS = (μ₁|u|₄⁴ + μ₂|v|₄⁴ + 2β|uv|₂²)/4.
pub fn pohozaev_relative(state: &CoupledState) -> f64 {
    state.diagnostics.pohozaev_rel
}

/// Relative defects of the two energy identities
/// |∇u|² + λ|u|² = μ₁|u|₄⁴ + β|uv|₂² (and its v counterpart).
pub fn energy_identity_defects(state: &CoupledState) -> (f64, f64) {
    let d = &state.diagnostics;
    let gu = grid::grad_norm2(&state.u);
    let gv = grid::grad_norm2(&state.v);
    let lhs_u = gu + state.lambda * d.mass_u * d.mass_u;
    let rhs_u = state.mu1 * d.l4_u4 + state.beta * d.cross;
    let lhs_v = gv + d.mass_v * d.mass_v;
    let rhs_v = state.mu2 * d.l4_v4 + state.beta * d.cross;
    let rel = |a: f64, b: f64| {
        let den = a.abs() + b.abs();
        if den > 0.0 {
            (a - b).abs() / den
        } else {
            0.0
        }
    };
    (rel(lhs_u, rhs_u), rel(lhs_v, rhs_v))
}

/// The closed-form solution at λ = 1:
/// u = sqrt((β-μ₂)/(β²-μ₁μ₂)) U, v = sqrt((β-μ₁)/(β²-μ₁μ₂)) U.
pub fn explicit_solution_lambda1(
    gs: &GroundState,
    mu1: f64,
    mu2: f64,
    beta: f64,
) -> Result<CoupledState> {
    if !(mu1 > 0.0) || !(mu2 > 0.0) || !(beta > 0.0) {
        return Err(Error::Parameter("couplings must be positive".into()));
    }
    let (c_u, c_v) = if mu1 == mu2 {
        // the band degenerates to a point and the ratio simplifies
        let c = (1.0 / (beta + mu1)).sqrt();
        (c, c)
    } else {
        let lo = mu1.min(mu2);
        let hi = mu1.max(mu2);
        if beta >= lo && beta <= hi {
            return Err(Error::Domain(format!(
                "no solution in the regime beta in [{lo}, {hi}] (beta = {beta})"
            )));
        }
        let den = beta * beta - mu1 * mu2;
        ((beta - mu2) / den, (beta - mu1) / den)
    };
    let (c_u, c_v) = if mu1 == mu2 {
        (c_u, c_v)
    } else {
        (c_u.sqrt(), c_v.sqrt())
    };
    let grid_in = gs.grid().clone();
    let u = RadialField::from_values_unchecked(
        grid_in.clone(),
        gs.field().values().iter().map(|x| c_u * x).collect(),
    );
    let v = RadialField::from_values_unchecked(
        grid_in,
        gs.field().values().iter().map(|x| c_v * x).collect(),
    );
    CoupledState::new(1.0, beta, mu1, mu2, u, v)
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOpts {
    pub tol: f64,
    pub max_iter: usize,
    pub max_backtrack: usize,
}

impl Default for NewtonOpts {
    fn default() -> Self {
        NewtonOpts { tol: 1e-9, max_iter: 25, max_backtrack: 30 }
    }
}

/// Roundoff floor of the discrete residual: entries of the operator rows are
/// O(1/h²), so even the exact solution rounded to f64 carries this much.
pub(crate) fn residual_floor(grid_in: &RadialGrid, amp: f64) -> f64 {
    16.0 * f64::EPSILON * amp.max(1e-30) * 2.0 / (grid_in.spacing() * grid_in.spacing())
}

pub(crate) fn assemble_jacobian(
    lap: &BandedOperator,
    p: &SystemParams,
    u: &[f64],
    v: &[f64],
) -> BandedMatrix {
    let n = u.len();
    let mut jac = BandedMatrix::new(2 * n, 2, 2);
    for k in 0..n {
        let (lo, diag, hi) = lap.row(k);
        let (iu, iv) = (2 * k, 2 * k + 1);
        jac.set(iu, iu, diag + p.lambda1 - 3.0 * p.mu1 * u[k] * u[k] - p.beta * v[k] * v[k]);
        jac.set(iv, iv, diag + p.lambda2 - 3.0 * p.mu2 * v[k] * v[k] - p.beta * u[k] * u[k]);
        let cross = -2.0 * p.beta * u[k] * v[k];
        jac.set(iu, iv, cross);
        jac.set(iv, iu, cross);
        if k > 0 {
            jac.set(iu, iu - 2, lo);
            jac.set(iv, iv - 2, lo);
        }
        if k + 1 < n {
            jac.set(iu, iu + 2, hi);
            jac.set(iv, iv + 2, hi);
        }
    }
    jac
}

fn l2_of(ru: &[f64], rv: &[f64]) -> f64 {
    let mut s = 0.0;
    for r in ru.iter().chain(rv.iter()) {
        s += r * r;
    }
    s.sqrt()
}

/// Newton iteration at fixed (λ, β) from `guess`, with Armijo backtracking
/// on the residual norm. Converged nonpositive states are reported as a
/// classification error carrying the state, so callers can still inspect it.
pub fn newton_solve(
    guess: &CoupledState,
    lambda: f64,
    beta: f64,
    opts: &NewtonOpts,
) -> Result<CoupledState> {
    let grid_in = guess.grid().clone();
    let (mu1, mu2) = (guess.mu1, guess.mu2);
    let lap = BandedOperator::laplacian_plus_const(grid_in.clone(), 0.0)?;
    let p = SystemParams { lambda1: lambda, lambda2: 1.0, beta, mu1, mu2 };
    let mut u = guess.u.values().to_vec();
    let mut v = guess.v.values().to_vec();
    let n = u.len();
    let mut last_res = f64::INFINITY;
    for _it in 0..opts.max_iter {
        let (ru, rv) = residual_parts(&lap, &p, &u, &v);
        let res_inf = ru.iter().chain(rv.iter()).fold(0.0f64, |m, r| m.max(r.abs()));
        let amp = u
            .iter()
            .chain(v.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()));
        let tol_eff = opts.tol.max(residual_floor(&grid_in, amp));
        if res_inf <= tol_eff {
            let uf = RadialField::new(grid_in.clone(), u)?;
            let vf = RadialField::new(grid_in, v)?;
            let state = CoupledState::new(lambda, beta, mu1, mu2, uf, vf)?;
            let class = state.classify();
            if class != StateClass::Positive {
                return Err(Error::Classification { class, state: Box::new(state) });
            }
            return Ok(state);
        }
        last_res = res_inf;
        let jac = assemble_jacobian(&lap, &p, &u, &v);
        let lu = jac.factor()?;
        let mut step = vec![0.0; 2 * n];
        for i in 0..n {
            step[2 * i] = -ru[i];
            step[2 * i + 1] = -rv[i];
        }
        lu.solve_in_place(&mut step);
        if step.iter().any(|s| !s.is_finite()) {
            return Err(Error::Solver("Newton step is not finite".into()));
        }
        let base = l2_of(&ru, &rv);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_backtrack {
            let ut: Vec<f64> = (0..n).map(|i| u[i] + t * step[2 * i]).collect();
            let vt: Vec<f64> = (0..n).map(|i| v[i] + t * step[2 * i + 1]).collect();
            let (rut, rvt) = residual_parts(&lap, &p, &ut, &vt);
            let trial = l2_of(&rut, &rvt);
            if trial.is_finite() && trial < (1.0 - 0.25 * t) * base {
                u = ut;
                v = vt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // fall back to the smallest step and keep going
            for i in 0..n {
                u[i] += t * 2.0 * step[2 * i];
                v[i] += t * 2.0 * step[2 * i + 1];
            }
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, residual: last_res })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeOutcome {
    Positive,
    Semitrivial,
    SignChanging,
    Failed { residual: f64 },
}

#[derive(Debug, Clone)]
pub struct ProbeRecord {
    pub index: usize,
    pub seed: u64,
    pub outcome: ProbeOutcome,
}

#[derive(Debug)]
pub struct ProbeReport {
    /// Converged positive states, deduplicated, ordered by start index.
    pub positives: Vec<CoupledState>,
    /// One record per start, ordered by start index.
    pub records: Vec<ProbeRecord>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Domain and resolution for probing at a given λ: the u component spreads
/// like 1/sqrt(λ) for small λ and narrows for large λ.
pub fn probe_grid(base: &RadialGrid, lambda: f64) -> Result<Arc<RadialGrid>> {
    let spread = 12.0 / lambda.min(1.0).sqrt();
    let r_max = base.r_max().max(spread).min(400.0);
    let h = (0.01f64).min(1.0 / (16.0 * lambda.max(1.0).sqrt()));
    let n = (r_max / h).ceil() as usize;
    make_grid(r_max, n)
}

/// Run k deterministic Newton probes from semitrivial-shaped starts: probe 0
/// uses the unperturbed pair of scaled profiles, the rest randomize the
/// amplitudes and widths. Rough starts meander before entering a basin, so
/// probes get at least 50 Newton iterations regardless of `opts`. Returns
/// every converged positive state (deduplicated by joint relative L²
/// distance < 1e-4) together with the per-start records; an empty
/// `positives` list is evidence of nonexistence, not proof.
pub fn multistart_probe(
    gs: &GroundState,
    mu1: f64,
    mu2: f64,
    lambda: f64,
    beta: f64,
    k: usize,
    seed: u64,
    opts: &NewtonOpts,
) -> Result<ProbeReport> {
    if k == 0 {
        return Err(Error::Parameter("probe count k must be >= 1".into()));
    }
    if !(lambda > 0.0) || !(beta > 0.0) || !(mu1 > 0.0) || !(mu2 > 0.0) {
        return Err(Error::Parameter("probe parameters must be positive".into()));
    }
    let pgrid = probe_grid(gs.grid(), lambda)?;
    let gs_here = groundstate::resample(gs, &pgrid)?;
    let profile = groundstate::field_profile(gs_here.field())?;
    let origin = profile.eval(0.0);
    let u0_amp = origin * (lambda / mu1).sqrt();
    let v0_amp = origin / mu2.sqrt();
    let r_last = *pgrid.nodes().last().unwrap();
    let shape = |scale: f64, width: f64, r: f64| {
        let arg = scale * r / width;
        if arg <= r_last {
            profile.eval(arg) / origin
        } else {
            0.0
        }
    };
    let probe_opts = NewtonOpts { max_iter: opts.max_iter.max(50), ..*opts };
    let run_one = |i: usize| -> (usize, u64, std::result::Result<CoupledState, Error>) {
        let sub_seed = splitmix64(seed ^ (i as u64).wrapping_mul(0x2545f4914f6cdd1d));
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
        let (a_u, a_v, w_u, w_v) = if i == 0 {
            (u0_amp, v0_amp, 1.0, 1.0)
        } else {
            (
                u0_amp * (rng.gen_range(0.2f64.ln()..2.0f64.ln())).exp(),
                v0_amp * (rng.gen_range(0.2f64.ln()..2.0f64.ln())).exp(),
                rng.gen_range(0.7..1.6),
                rng.gen_range(0.7..1.6),
            )
        };
        let su = lambda.sqrt();
        let u0: Vec<f64> = pgrid.nodes().iter().map(|&r| a_u * shape(su, w_u, r)).collect();
        let v0: Vec<f64> = pgrid.nodes().iter().map(|&r| a_v * shape(1.0, w_v, r)).collect();
        let guess = CoupledState::new(
            lambda,
            beta,
            mu1,
            mu2,
            RadialField::from_values_unchecked(pgrid.clone(), u0),
            RadialField::from_values_unchecked(pgrid.clone(), v0),
        );
        let out = guess.and_then(|g| newton_solve(&g, lambda, beta, &probe_opts));
        (i, sub_seed, out)
    };
    let mut raw: Vec<_> = (0..k).into_par_iter().map(run_one).collect();
    raw.sort_by_key(|(i, _, _)| *i);
    let mut positives: Vec<CoupledState> = Vec::new();
    let mut records = Vec::with_capacity(k);
    for (index, sub_seed, out) in raw {
        let outcome = match out {
            Ok(state) => {
                let dup = positives.iter().any(|p| {
                    grid::joint_l2_distance((&p.u, &p.v), (&state.u, &state.v))
                        .map(|d| d < 1e-4)
                        .unwrap_or(false)
                });
                if !dup {
                    positives.push(state);
                }
                ProbeOutcome::Positive
            }
            Err(Error::Classification { class, .. }) => match class {
                StateClass::Semitrivial => ProbeOutcome::Semitrivial,
                _ => ProbeOutcome::SignChanging,
            },
            Err(Error::NonConvergence { residual, .. }) => ProbeOutcome::Failed { residual },
            Err(_) => ProbeOutcome::Failed { residual: f64::NAN },
        };
        records.push(ProbeRecord { index, seed: sub_seed, outcome });
    }
    if positives.len() > 1 {
        log::info!(
            "multistart at (lambda={lambda:.3e}, beta={beta:.3e}) found {} distinct positive states",
            positives.len()
        );
    }
    Ok(ProbeReport { positives, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{joint_l2_distance, make_grid};
    use crate::groundstate::{scaled_ground_state, solve_scalar_ground_state};

    fn default_gs() -> GroundState {
        let g = make_grid(20.0, 2000).unwrap();
        solve_scalar_ground_state(&g).unwrap()
    }

    fn fine_gs() -> GroundState {
        let g = make_grid(22.0, 30000).unwrap();
        solve_scalar_ground_state(&g).unwrap()
    }

    #[test]
    fn residual_vanishes_on_known_solutions() {
        let gs = default_gs();
        let g = gs.grid().clone();
        // trivial state
        let zero = CoupledState::new(
            1.5,
            2.0,
            1.0,
            1.0,
            RadialField::zeros(g.clone()),
            RadialField::zeros(g.clone()),
        )
        .unwrap();
        let (ru, rv) = residual(&zero).unwrap();
        assert_eq!(ru.norm_inf(), 0.0);
        assert_eq!(rv.norm_inf(), 0.0);
        // semitrivial (U_{λ,μ₁}, 0): the raw rescaled profile solves the
        // equation to interpolation accuracy (C¹ resampling leaves an O(h)
        // defect under the second-difference stencil) ...
        let lam = 2.0;
        let u = scaled_ground_state(&gs, lam, 1.3).unwrap();
        let scale = 1.3 * u.norm_inf().powi(3);
        let semi =
            CoupledState::new(lam, 2.0, 1.3, 1.0, u, RadialField::zeros(g.clone())).unwrap();
        let (ru, rv) = residual(&semi).unwrap();
        assert_eq!(rv.norm_inf(), 0.0);
        assert!(
            ru.norm_inf() <= 1e-2 * scale,
            "semitrivial residual {} vs scale {scale}",
            ru.norm_inf()
        );
        assert_eq!(semi.classify(), StateClass::Semitrivial);
        // ... and the polished semitrivial profile solves it to roundoff
        let up = crate::groundstate::semitrivial_profile(&gs, lam, 1.3).unwrap();
        let semi_p = CoupledState::new(lam, 2.0, 1.3, 1.0, up, RadialField::zeros(g)).unwrap();
        assert!(
            semi_p.diagnostics().residual_inf <= 1e-9,
            "polished semitrivial residual {}",
            semi_p.diagnostics().residual_inf
        );
    }

    #[test]
    fn explicit_solution_symmetric_case() {
        let gs = default_gs();
        let st = explicit_solution_lambda1(&gs, 1.0, 1.0, 2.0).unwrap();
        let c = (1.0f64 / 3.0).sqrt();
        let expect = c * gs.field().values()[0];
        assert!((st.u().values()[0] - expect).abs() <= 1e-14 * expect);
        assert!((st.diagnostics().rho - 1.0).abs() <= 1e-12);
        assert!(st.diagnostics().residual_inf <= 1e-8);
        assert_eq!(st.classify(), StateClass::Positive);
    }

    #[test]
    fn explicit_solution_mass_ratio() {
        let gs = default_gs();
        let st = explicit_solution_lambda1(&gs, 2.0, 1.0, 3.0).unwrap();
        assert!(
            (st.diagnostics().rho - 2.0f64.sqrt()).abs() <= 1e-12,
            "rho = {}",
            st.diagnostics().rho
        );
        assert!(st.diagnostics().residual_inf <= 1e-8);
    }

    #[test]
    fn explicit_solution_forbidden_band() {
        let gs = default_gs();
        match explicit_solution_lambda1(&gs, 2.0, 1.0, 1.5) {
            Err(Error::Domain(m)) => assert!(m.contains("no solution in the regime")),
            other => panic!("expected domain error, got {other:?}"),
        }
        assert!(explicit_solution_lambda1(&gs, 2.0, 1.0, 1.0).is_err());
        assert!(explicit_solution_lambda1(&gs, 2.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn newton_fixed_point_returns_unchanged() {
        let gs = default_gs();
        let st = explicit_solution_lambda1(&gs, 1.0, 1.0, 2.0).unwrap();
        let again = newton_solve(&st, 1.0, 2.0, &NewtonOpts::default()).unwrap();
        let d = joint_l2_distance((st.u(), st.v()), (again.u(), again.v())).unwrap();
        assert!(d <= 1e-10, "moved by {d}");
    }

    #[test]
    fn newton_reconverges_from_perturbed_guess() {
        let gs = default_gs();
        let st = explicit_solution_lambda1(&gs, 2.0, 1.0, 3.0).unwrap();
        // deterministic 1% multiplicative wobble
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let g = st.grid().clone();
        let perturb = |f: &RadialField, rng: &mut ChaCha8Rng| {
            RadialField::from_values_unchecked(
                g.clone(),
                f.values().iter().map(|x| x * (1.0 + 0.01 * rng.gen_range(-1.0..1.0))).collect(),
            )
        };
        let pu = perturb(st.u(), &mut rng);
        let pv = perturb(st.v(), &mut rng);
        let guess = CoupledState::new(1.0, 3.0, 2.0, 1.0, pu, pv).unwrap();
        let sol = newton_solve(&guess, 1.0, 3.0, &NewtonOpts::default()).unwrap();
        assert!(sol.diagnostics().residual_inf <= 1e-9);
        let d = joint_l2_distance((st.u(), st.v()), (sol.u(), sol.v())).unwrap();
        assert!(d <= 1e-6, "distance {d}");
    }

    #[test]
    fn newton_classifies_semitrivial_guess() {
        let gs = default_gs();
        let g = gs.grid().clone();
        let v = scaled_ground_state(&gs, 1.0, 1.0).unwrap();
        let guess =
            CoupledState::new(1.7, 2.3, 1.0, 1.0, RadialField::zeros(g), v).unwrap();
        match newton_solve(&guess, 1.7, 2.3, &NewtonOpts::default()) {
            Err(Error::Classification { class: StateClass::Semitrivial, state }) => {
                assert!(state.diagnostics().mass_v > 1.0);
            }
            other => panic!("expected semitrivial classification, got {other:?}"),
        }
    }

    #[test]
    fn energy_identities_hold_for_solutions() {
        let gs = default_gs();
        let st = explicit_solution_lambda1(&gs, 2.0, 1.0, 3.0).unwrap();
        let (eu, ev) = energy_identity_defects(&st);
        assert!(eu <= 1e-6 && ev <= 1e-6, "defects {eu} {ev}");
    }

    #[test]
    fn pohozaev_explicit_solution_fine_grid() {
        let gs = fine_gs();
        let st = explicit_solution_lambda1(&gs, 2.0, 1.0, 3.0).unwrap();
        assert!(
            pohozaev_relative(&st) <= 1e-6,
            "pohozaev defect {}",
            pohozaev_relative(&st)
        );
        // scalar reduction: semitrivial state satisfies it too
        let u = crate::groundstate::semitrivial_profile(&gs, 1.5, 2.0).unwrap();
        let semi = CoupledState::new(
            1.5,
            1.0,
            2.0,
            1.0,
            u,
            RadialField::zeros(gs.grid().clone()),
        )
        .unwrap();
        assert!(pohozaev_relative(&semi) <= 1e-6, "scalar defect {}", pohozaev_relative(&semi));
    }

    #[test]
    fn pohozaev_negative_control() {
        // a random smooth pair is far from any solution
        let g = make_grid(20.0, 2000).unwrap();
        let u = RadialField::from_fn(g.clone(), |r| (-0.5 * r * r).exp()).unwrap();
        let v = RadialField::from_fn(g, |r| 2.0 * (-0.2 * (r - 1.0) * (r - 1.0)).exp()).unwrap();
        let st = CoupledState::new(1.0, 2.0, 1.0, 1.0, u, v).unwrap();
        assert!(pohozaev_relative(&st) > 0.05, "defect {}", pohozaev_relative(&st));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let gs = default_gs();
        let st = explicit_solution_lambda1(&gs, 1.0, 1.0, 2.0).unwrap();
        let g = st.grid().clone();
        let n = g.len();
        let lap = BandedOperator::laplacian_plus_const(g.clone(), 0.0).unwrap();
        let p = SystemParams { lambda1: 1.0, lambda2: 1.0, beta: 2.0, mu1: 1.0, mu2: 1.0 };
        let jac = assemble_jacobian(&lap, &p, st.u().values(), st.v().values());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut orders = Vec::new();
        for _ in 0..10 {
            let du: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dv: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut dir = vec![0.0; 2 * n];
            for i in 0..n {
                dir[2 * i] = du[i];
                dir[2 * i + 1] = dv[i];
            }
            let mut jv = vec![0.0; 2 * n];
            jac.matvec(&dir, &mut jv);
            let fd = |h: f64| -> Vec<f64> {
                let up: Vec<f64> = (0..n).map(|i| st.u().values()[i] + h * du[i]).collect();
                let vp: Vec<f64> = (0..n).map(|i| st.v().values()[i] + h * dv[i]).collect();
                let um: Vec<f64> = (0..n).map(|i| st.u().values()[i] - h * du[i]).collect();
                let vm: Vec<f64> = (0..n).map(|i| st.v().values()[i] - h * dv[i]).collect();
                let (rup, rvp) = residual_parts(&lap, &p, &up, &vp);
                let (rum, rvm) = residual_parts(&lap, &p, &um, &vm);
                let mut out = vec![0.0; 2 * n];
                for i in 0..n {
                    out[2 * i] = (rup[i] - rum[i]) / (2.0 * h);
                    out[2 * i + 1] = (rvp[i] - rvm[i]) / (2.0 * h);
                }
                out
            };
            let err_at = |h: f64| -> f64 {
                let f = fd(h);
                let mut e = 0.0f64;
                let mut scale = 0.0f64;
                for i in 0..2 * n {
                    e += (f[i] - jv[i]) * (f[i] - jv[i]);
                    scale += jv[i] * jv[i];
                }
                (e / scale.max(1e-30)).sqrt()
            };
            let e1 = err_at(1e-3);
            let e2 = err_at(5e-4);
            let order = (e1 / e2).log2();
            orders.push(order);
        }
        let mean: f64 = orders.iter().sum::<f64>() / orders.len() as f64;
        assert!(mean >= 1.9, "observed FD order {mean}, per-direction {orders:?}");
    }

    #[test]
    fn swap_symmetry_maps_solutions() {
        // (μ₁, μ₂, λ, β) vs (μ₂, μ₁, 1/λ, β): ū(x) = v(x/sqrt(λ))/sqrt(λ)
        // maps one discrete solution onto the other exactly when the grid is
        // rescaled by sqrt(λ) too.
        let gs = default_gs();
        let (mu1, mu2, beta, lam) = (1.0, 1.0, 2.0, 1.44);
        let st = explicit_solution_lambda1(&gs, mu1, mu2, beta).unwrap();
        // continue the explicit solution to λ = 1.44 by Newton
        let a = newton_solve(&st, lam, beta, &NewtonOpts::default()).unwrap();
        // mirrored problem on the mirrored grid (stretched by sqrt(lambda))
        let g2 = make_grid(gs.grid().r_max() * lam.sqrt(), gs.grid().len()).unwrap();
        let sq = lam.sqrt();
        let ub = RadialField::from_values_unchecked(
            g2.clone(),
            a.v().values().iter().map(|x| x / sq).collect(),
        );
        let vb = RadialField::from_values_unchecked(
            g2.clone(),
            a.u().values().iter().map(|x| x / sq).collect(),
        );
        let mapped = CoupledState::new(1.0 / lam, beta, mu2, mu1, ub, vb).unwrap();
        assert!(
            mapped.diagnostics().residual_inf <= 1e-8,
            "mapped residual {}",
            mapped.diagnostics().residual_inf
        );
        let b = newton_solve(&mapped, 1.0 / lam, beta, &NewtonOpts::default()).unwrap();
        let d = joint_l2_distance((mapped.u(), mapped.v()), (b.u(), b.v())).unwrap();
        assert!(d <= 1e-6, "mapped state moved by {d}");
    }

    #[test]
    fn multistart_finds_explicit_solution() {
        let gs = default_gs();
        let report =
            multistart_probe(&gs, 1.0, 1.0, 1.0, 2.0, 8, 1234, &NewtonOpts::default()).unwrap();
        assert!(!report.positives.is_empty(), "no positive state found");
        let st = explicit_solution_lambda1(&gs, 1.0, 1.0, 2.0).unwrap();
        // probe grid differs from the production grid only in r_max here
        let found = &report.positives[0];
        assert!((found.diagnostics().rho - st.diagnostics().rho).abs() <= 1e-6);
        assert!(
            (found.diagnostics().mass_u - st.diagnostics().mass_u).abs()
                <= 1e-4 * st.diagnostics().mass_u
        );
        assert_eq!(report.records.len(), 8);
    }

    #[test]
    fn multistart_rejects_zero_count() {
        let gs = default_gs();
        assert!(multistart_probe(&gs, 1.0, 1.0, 1.0, 2.0, 0, 1, &NewtonOpts::default()).is_err());
    }

    #[test]
    fn multistart_is_deterministic() {
        let gs = default_gs();
        let a = multistart_probe(&gs, 1.0, 1.0, 0.8, 2.0, 6, 99, &NewtonOpts::default()).unwrap();
        let b = multistart_probe(&gs, 1.0, 1.0, 0.8, 2.0, 6, 99, &NewtonOpts::default()).unwrap();
        assert_eq!(a.positives.len(), b.positives.len());
        for (x, y) in a.positives.iter().zip(b.positives.iter()) {
            assert_eq!(x.u().values(), y.u().values());
            assert_eq!(x.v().values(), y.v().values());
        }
        for (x, y) in a.records.iter().zip(b.records.iter()) {
            assert_eq!(x.seed, y.seed);
        }
    }

    #[test]
    fn nonexistence_probe_small_lambda() {
        // deep in the nonexistence regime every probe collapses
        let gs = default_gs();
        let report =
            multistart_probe(&gs, 1.0, 3.0, 1e-3, 3.0, 6, 7, &NewtonOpts::default()).unwrap();
        assert!(
            report.positives.is_empty(),
            "unexpected positive state at lambda=1e-3"
        );
        assert_eq!(report.records.len(), 6);
    }
}

