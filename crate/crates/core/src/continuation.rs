//! Pseudo-arclength continuation of positive solution branches in λ at fixed
//! β, seeded at bifurcation points on the semitrivial families or at the
//! explicit λ = 1 solution, plus mass-ratio targeting along a branch and the
//! rescaling that turns a branch state with ρ = a/b into a solution with
//! prescribed masses.
//!
//! A branch point is corrected by Newton on the bordered system
//! [F(u,v,λ); ⟨x - x_pred, t⟩_W] with the weighted metric
//! ‖(du,dv,dλ)‖²_W = |du|₂²/s_u² + |dv|₂²/s_v² + dλ²; the field scales s_u,
//! s_v are frozen at the seed, so arclength stays meaningful next to the
//! semitrivial families where one component is tiny.


use crate::coupled::{
    self, assemble_jacobian, residual_parts, CoupledState, NewtonOpts, StateClass, SystemParams,
};
use crate::error::{Error, Result};
use crate::grid::{self, make_grid, RadialField, RadialGrid};
use crate::groundstate::{self, GroundState};
use crate::operator::BandedOperator;
use crate::spectral::{self, CurvePair, Family};

/// One accepted continuation point. The λ-component of the unit tangent is
/// kept per point (folds show up as its sign changes); full tangent vectors
/// are reconstructed from consecutive states when needed.
#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub state: CoupledState,
    pub arclength: f64,
    pub tangent_lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchOrigin {
    /// Bifurcation from a semitrivial family at the given λ.
    Bifurcation(Family, f64),
    /// Interior seed (the explicit λ = 1 solution).
    Interior(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    LambdaMin,
    LambdaMax,
    /// The other component's mass collapsed; λ at the last point attached.
    Connected(Family, f64),
    FoldLimit,
    SolverFailure(String),
    MaxSteps,
    /// Early stop requested once ρ left the window of interest.
    RhoCovered,
}

#[derive(Debug)]
pub struct Branch {
    pub beta: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub origin: BranchOrigin,
    pub points: Vec<BranchPoint>,
    pub termination: Termination,
    /// Indices where the λ-component of the tangent changed sign.
    pub folds: Vec<usize>,
    /// Field scales of the arclength metric (frozen at the seed).
    pub scale_u: f64,
    pub scale_v: f64,
}

impl Branch {
    pub fn lambda_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in &self.points {
            lo = lo.min(p.state.lambda());
            hi = hi.max(p.state.lambda());
        }
        (lo, hi)
    }

    pub fn rho_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in &self.points {
            let r = p.state.diagnostics().rho;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepOpts {
    pub ds0: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub grow: f64,
    pub shrink: f64,
    pub max_steps: usize,
    pub max_folds: usize,
    /// Cap on the change of min(ρ, 1/ρ) per unit arclength; steps that jump
    /// the mass balance faster than this are rejected and retried shorter.
    pub rho_rate: f64,
    /// Mass ratio below which the branch is declared connected to the other
    /// semitrivial family.
    pub connect_ratio: f64,
    pub newton: NewtonOpts,
}

impl Default for StepOpts {
    fn default() -> Self {
        StepOpts {
            ds0: 0.05,
            ds_min: 1e-7,
            ds_max: 0.5,
            grow: 1.3,
            shrink: 0.5,
            max_steps: 600,
            max_folds: 16,
            rho_rate: 10.0,
            connect_ratio: 1e-4,
            newton: NewtonOpts { tol: 1e-9, max_iter: 14, max_backtrack: 30 },
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TraceOpts {
    pub step: StepOpts,
    /// Stop once ρ exceeds this value; the mass-targeting pipeline sets it to
    /// avoid tracing past the regime of interest.
    pub stop_rho_above: Option<f64>,
    /// Stop once ρ drops below this value.
    pub stop_rho_below: Option<f64>,
}

impl Default for TraceOpts {
    fn default() -> Self {
        TraceOpts { step: StepOpts::default(), stop_rho_above: None, stop_rho_below: None }
    }
}

/// Bordered Newton: solve F(u, v, λ) = 0 together with the scalar constraint
/// cu·u + cv·v + cl·λ = target (plain dot products; callers bake quadrature
/// weights and metric scales into the coefficient vectors).
///
/// Returns the corrected (u, v, λ). The Jacobian is factored once per
/// iteration and the λ-column handled by block elimination.
#[allow(clippy::too_many_arguments)]
fn bordered_newton(
    lap: &BandedOperator,
    beta: f64,
    mu1: f64,
    mu2: f64,
    mut u: Vec<f64>,
    mut v: Vec<f64>,
    mut lambda: f64,
    cu: &[f64],
    cv: &[f64],
    cl: f64,
    target: f64,
    opts: &NewtonOpts,
) -> Result<(Vec<f64>, Vec<f64>, f64, f64)> {
    let n = u.len();
    let grid_in = lap.grid();
    let dot = |c: &[f64], x: &[f64]| -> f64 { c.iter().zip(x).map(|(a, b)| a * b).sum() };
    let mut last_res = f64::INFINITY;
    for _ in 0..opts.max_iter {
        if !(lambda > 0.0) {
            return Err(Error::Solver(format!("corrector left the parameter domain (lambda = {lambda})")));
        }
        let p = SystemParams { lambda1: lambda, lambda2: 1.0, beta, mu1, mu2 };
        let (ru, rv) = residual_parts(lap, &p, &u, &v);
        let g = dot(cu, &u) + dot(cv, &v) + cl * lambda - target;
        let res_inf = ru.iter().chain(rv.iter()).fold(0.0f64, |m, r| m.max(r.abs()));
        let amp = u.iter().chain(v.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
        let tol_eff = opts.tol.max(coupled::residual_floor(grid_in, amp));
        let g_scale = cl.abs() * lambda.abs() + 1.0;
        if res_inf <= tol_eff && g.abs() <= 1e-9 * g_scale {
            return Ok((u, v, lambda, res_inf));
        }
        last_res = res_inf;
        let jac = assemble_jacobian(lap, &p, &u, &v);
        let lu = jac.factor()?;
        // J z = -F ; J y = -F_lambda (the lambda-column is (u, 0) interleaved)
        let mut z = vec![0.0; 2 * n];
        let mut y = vec![0.0; 2 * n];
        for i in 0..n {
            z[2 * i] = -ru[i];
            z[2 * i + 1] = -rv[i];
            y[2 * i] = -u[i];
        }
        lu.solve_in_place(&mut z);
        lu.solve_in_place(&mut y);
        let (mut czu, mut czv, mut cyu, mut cyv) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            czu += cu[i] * z[2 * i];
            czv += cv[i] * z[2 * i + 1];
            cyu += cu[i] * y[2 * i];
            cyv += cv[i] * y[2 * i + 1];
        }
        let denom = cyu + cyv + cl;
        if denom.abs() < 1e-300 {
            return Err(Error::Solver("bordered system is singular".into()));
        }
        let dl = (-g - (czu + czv)) / denom;
        if !dl.is_finite() || z.iter().chain(y.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Solver("corrector step is not finite".into()));
        }
        // damped update on the combined residual
        let base = {
            let mut s: f64 = ru.iter().chain(rv.iter()).map(|r| r * r).sum();
            s += g * g;
            s.sqrt()
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_backtrack {
            let lt = lambda + t * dl;
            if lt > 0.0 {
                let ut: Vec<f64> = (0..n).map(|i| u[i] + t * (z[2 * i] + dl * y[2 * i])).collect();
                let vt: Vec<f64> =
                    (0..n).map(|i| v[i] + t * (z[2 * i + 1] + dl * y[2 * i + 1])).collect();
                let pt = SystemParams { lambda1: lt, lambda2: 1.0, beta, mu1, mu2 };
                let (rut, rvt) = residual_parts(lap, &pt, &ut, &vt);
                let gt = dot(cu, &ut) + dot(cv, &vt) + cl * lt - target;
                let trial = {
                    let mut s: f64 = rut.iter().chain(rvt.iter()).map(|r| r * r).sum();
                    s += gt * gt;
                    s.sqrt()
                };
                if trial.is_finite() && trial < (1.0 - 0.25 * t) * base {
                    u = ut;
                    v = vt;
                    lambda = lt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence { iterations: opts.max_iter, residual: last_res });
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, residual: last_res })
}

/// Newton-corrected point just off the semitrivial solution at λ = ℓ(β),
/// displaced by `eps` (relative to the semitrivial mass) along the kernel
/// direction into the positive cone.
pub fn seed_branch(
    gs: &GroundState,
    curve: &CurvePair,
    family: Family,
    beta: f64,
    eps: f64,
    newton: &NewtonOpts,
) -> Result<BranchPoint> {
    if !(eps > 0.0) || eps > 0.5 {
        return Err(Error::Parameter(format!("seed displacement eps must be in (0, 0.5], got {eps}")));
    }
    let grid_in = gs.grid().clone();
    let lambda0 = spectral::ell_on_grid(curve, family, beta, gs, &grid_in)?;
    let (mu1, mu2) = (curve.mu1, curve.mu2);
    let (tangent_u, tangent_v) =
        spectral::bifurcation_tangent(family, lambda0, beta, curve.mu(family), gs)?;
    // semitrivial background and the newborn component's direction
    let (u0, v0, dir, dir_is_u) = match family {
        Family::Two => {
            let v_st = groundstate::semitrivial_profile(gs, 1.0, mu2)?;
            (RadialField::zeros(grid_in.clone()), v_st, tangent_u, true)
        }
        Family::One => {
            let u_st = groundstate::semitrivial_profile(gs, lambda0, mu1)?;
            (u_st, RadialField::zeros(grid_in.clone()), tangent_v, false)
        }
    };
    let st_mass = grid::l2_norm(if dir_is_u { &v0 } else { &u0 });
    let amplitude = eps * st_mass;
    let n = grid_in.len();
    let w = grid_in.weights();
    // constraint: ⟨newborn, φ⟩ = amplitude (4π-weighted)
    let mut cu = vec![0.0; n];
    let mut cv = vec![0.0; n];
    {
        let c = if dir_is_u { &mut cu } else { &mut cv };
        for i in 0..n {
            c[i] = 4.0 * std::f64::consts::PI * w[i] * dir.values()[i];
        }
    }
    let mut u = u0.values().to_vec();
    let mut v = v0.values().to_vec();
    {
        let (comp, dvals) = if dir_is_u { (&mut u, dir.values()) } else { (&mut v, dir.values()) };
        for i in 0..n {
            comp[i] += amplitude * dvals[i];
        }
    }
    let lap = BandedOperator::laplacian_plus_const(grid_in.clone(), 0.0)?;
    let (u, v, lambda, _res) = bordered_newton(
        &lap, beta, mu1, mu2, u, v, lambda0, &cu, &cv, 0.0, amplitude, newton,
    )
    .map_err(|e| match e {
        Error::NonConvergence { .. } => Error::Degeneracy(format!(
            "seed correction failed near lambda = {lambda0:.6e}; increase eps or refine the grid"
        )),
        other => other,
    })?;
    let state = CoupledState::new(
        lambda,
        beta,
        mu1,
        mu2,
        RadialField::new(grid_in.clone(), u)?,
        RadialField::new(grid_in, v)?,
    )?;
    if state.classify() != StateClass::Positive {
        return Err(Error::Degeneracy(format!(
            "seed fell back onto the semitrivial state at lambda = {lambda:.6e}; \
             increase eps or refine the grid"
        )));
    }
    if (state.lambda() - lambda0).abs() > 1e-3 * lambda0.max(1.0) {
        return Err(Error::Degeneracy(format!(
            "seed drifted from the bifurcation point: lambda {} vs ell = {lambda0}",
            state.lambda()
        )));
    }
    Ok(BranchPoint { state, arclength: 0.0, tangent_lambda: 0.0 })
}

/// Interior seed: wrap an existing solution (typically the explicit λ = 1
/// state) as a branch start.
pub fn seed_from_state(state: CoupledState) -> BranchPoint {
    BranchPoint { state, arclength: 0.0, tangent_lambda: 0.0 }
}

struct Metric {
    w4pi: Vec<f64>,
    su2: f64,
    sv2: f64,
}

impl Metric {
    fn new(grid_in: &RadialGrid, su: f64, sv: f64) -> Self {
        let w4pi = grid_in.weights().iter().map(|w| 4.0 * std::f64::consts::PI * w).collect();
        Metric { w4pi, su2: su * su, sv2: sv * sv }
    }

    fn dot(&self, (du1, dv1, dl1): (&[f64], &[f64], f64), (du2, dv2, dl2): (&[f64], &[f64], f64)) -> f64 {
        let mut au = 0.0;
        let mut av = 0.0;
        for i in 0..du1.len() {
            au += self.w4pi[i] * du1[i] * du2[i];
            av += self.w4pi[i] * dv1[i] * dv2[i];
        }
        au / self.su2 + av / self.sv2 + dl1 * dl2
    }

    fn norm(&self, d: (&[f64], &[f64], f64)) -> f64 {
        self.dot(d, d).sqrt()
    }
}

/// Keller tangent at a point: solve J y = -F_λ and normalize (y, 1).
fn keller_tangent(
    lap: &BandedOperator,
    state: &CoupledState,
    metric: &Metric,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let n = state.grid().len();
    let p = SystemParams {
        lambda1: state.lambda(),
        lambda2: 1.0,
        beta: state.beta(),
        mu1: state.mu1(),
        mu2: state.mu2(),
    };
    let jac = assemble_jacobian(lap, &p, state.u().values(), state.v().values());
    let lu = jac.factor()?;
    let mut y = vec![0.0; 2 * n];
    for i in 0..n {
        y[2 * i] = -state.u().values()[i];
    }
    lu.solve_in_place(&mut y);
    let du: Vec<f64> = (0..n).map(|i| y[2 * i]).collect();
    let dv: Vec<f64> = (0..n).map(|i| y[2 * i + 1]).collect();
    let nrm = metric.norm((&du, &dv, 1.0));
    if !nrm.is_finite() || nrm == 0.0 {
        return Err(Error::Solver("tangent computation failed".into()));
    }
    Ok((
        du.iter().map(|x| x / nrm).collect(),
        dv.iter().map(|x| x / nrm).collect(),
        1.0 / nrm,
    ))
}

/// Trace a branch from `seed` over the λ window by secant-predictor,
/// bordered-corrector continuation with adaptive steps. `forward` selects
/// the starting direction: for bifurcation seeds it is resolved so the
/// newborn component grows; for interior seeds `true` means λ increasing.
pub fn trace_branch(
    seed: &BranchPoint,
    origin: BranchOrigin,
    window: (f64, f64),
    forward: bool,
    opts: &TraceOpts,
) -> Result<Branch> {
    let (lambda_min, lambda_max) = window;
    if !(lambda_min > 0.0) || !(lambda_max > lambda_min) {
        return Err(Error::Parameter(format!(
            "invalid lambda window [{lambda_min}, {lambda_max}]"
        )));
    }
    let state0 = &seed.state;
    let grid_in = state0.grid().clone();
    let (beta, mu1, mu2) = (state0.beta(), state0.mu1(), state0.mu2());
    let d0 = state0.diagnostics();
    let joint = d0.mass_u + d0.mass_v;
    let scale_u = d0.mass_u.max(1e-2 * joint);
    let scale_v = d0.mass_v.max(1e-2 * joint);
    let metric = Metric::new(&grid_in, scale_u, scale_v);
    let lap = BandedOperator::laplacian_plus_const(grid_in.clone(), 0.0)?;
    let n = grid_in.len();

    let mut branch = Branch {
        beta,
        mu1,
        mu2,
        origin,
        points: Vec::new(),
        termination: Termination::MaxSteps,
        folds: Vec::new(),
        scale_u,
        scale_v,
    };

    // initial tangent, oriented
    let (mut tu, mut tv, mut tl) = keller_tangent(&lap, state0, &metric)?;
    let orient = match origin {
        BranchOrigin::Bifurcation(Family::Two, _) => {
            // u is newborn: grow its amplitude
            let mut s = 0.0;
            for i in 0..n {
                s += metric.w4pi[i] * tu[i] * state0.u().values()[i];
            }
            s
        }
        BranchOrigin::Bifurcation(Family::One, _) => {
            let mut s = 0.0;
            for i in 0..n {
                s += metric.w4pi[i] * tv[i] * state0.v().values()[i];
            }
            s
        }
        BranchOrigin::Interior(_) => tl,
    };
    let flip = if orient < 0.0 { -1.0 } else { 1.0 } * if forward { 1.0 } else { -1.0 };
    for x in tu.iter_mut().chain(tv.iter_mut()) {
        *x *= flip;
    }
    tl *= flip;

    branch.points.push(BranchPoint {
        state: state0.clone(),
        arclength: 0.0,
        tangent_lambda: tl,
    });

    let mut ds = opts.step.ds0;
    let mut prev_u = state0.u().values().to_vec();
    let mut prev_v = state0.v().values().to_vec();
    let mut prev_lambda = state0.lambda();
    let mut prev_rho = d0.rho;
    let mut arclength = 0.0;
    let mut prev_tl = tl;

    'outer: for _step in 0..opts.step.max_steps {
        let mut stepped = false;
        while !stepped {
            // predictor
            let pu: Vec<f64> = (0..n).map(|i| prev_u[i] + ds * tu[i]).collect();
            let pv: Vec<f64> = (0..n).map(|i| prev_v[i] + ds * tv[i]).collect();
            let pl = prev_lambda + ds * tl;
            // constraint row: ⟨x - x_pred, t⟩_W = 0
            let mut cu = vec![0.0; n];
            let mut cv = vec![0.0; n];
            for i in 0..n {
                cu[i] = metric.w4pi[i] * tu[i] / metric.su2;
                cv[i] = metric.w4pi[i] * tv[i] / metric.sv2;
            }
            let cl = tl;
            let target = {
                let mut s = cl * pl;
                for i in 0..n {
                    s += cu[i] * pu[i] + cv[i] * pv[i];
                }
                s
            };
            let attempt = bordered_newton(
                &lap,
                beta,
                mu1,
                mu2,
                pu,
                pv,
                pl.max(1e-12),
                &cu,
                &cv,
                cl,
                target,
                &opts.step.newton,
            );
            match attempt {
                Ok((u, v, lambda, _res)) => {
                    let uf = RadialField::new(grid_in.clone(), u)?;
                    let vf = RadialField::new(grid_in.clone(), v)?;
                    let state = CoupledState::new(lambda, beta, mu1, mu2, uf, vf)?;
                    let class = state.classify();
                    let rho = state.diagnostics().rho;
                    let du: Vec<f64> =
                        (0..n).map(|i| state.u().values()[i] - prev_u[i]).collect();
                    let dv: Vec<f64> =
                        (0..n).map(|i| state.v().values()[i] - prev_v[i]).collect();
                    let dl = lambda - prev_lambda;
                    let step_len = metric.norm((&du, &dv, dl));
                    // reject steps that jump the mass balance too fast,
                    // unless the step size is already at the floor
                    let frac = |r: f64| r.min(1.0 / r);
                    let rho_jump = (frac(rho) - frac(prev_rho)).abs();
                    let jump_ok = rho_jump <= opts.step.rho_rate * step_len.max(ds);
                    if class == StateClass::Positive && (jump_ok || ds <= 4.0 * opts.step.ds_min) {
                        // accept
                        let nrm = step_len.max(1e-300);
                        tu = du.iter().map(|x| x / nrm).collect();
                        tv = dv.iter().map(|x| x / nrm).collect();
                        tl = dl / nrm;
                        arclength += step_len;
                        if tl * prev_tl < 0.0 {
                            branch.folds.push(branch.points.len());
                            if branch.folds.len() > opts.step.max_folds {
                                branch.termination = Termination::FoldLimit;
                                branch.points.push(BranchPoint {
                                    state,
                                    arclength,
                                    tangent_lambda: tl,
                                });
                                break 'outer;
                            }
                        }
                        prev_tl = tl;
                        prev_u = state.u().values().to_vec();
                        prev_v = state.v().values().to_vec();
                        prev_lambda = lambda;
                        prev_rho = rho;
                        let d = *state.diagnostics();
                        branch.points.push(BranchPoint { state, arclength, tangent_lambda: tl });
                        stepped = true;
                        // termination checks on the accepted point
                        let ratio_small = (d.mass_u / d.mass_v).min(d.mass_v / d.mass_u);
                        if ratio_small < opts.step.connect_ratio {
                            let fam = if d.mass_v < d.mass_u { Family::One } else { Family::Two };
                            branch.termination = Termination::Connected(fam, lambda);
                            break 'outer;
                        }
                        if lambda <= lambda_min {
                            branch.termination = Termination::LambdaMin;
                            break 'outer;
                        }
                        if lambda >= lambda_max {
                            branch.termination = Termination::LambdaMax;
                            break 'outer;
                        }
                        if opts.stop_rho_above.is_some_and(|hi| d.rho > hi)
                            || opts.stop_rho_below.is_some_and(|lo| d.rho < lo)
                        {
                            branch.termination = Termination::RhoCovered;
                            break 'outer;
                        }
                        ds = (ds * opts.step.grow).min(opts.step.ds_max);
                    } else if class != StateClass::Positive && ds <= 4.0 * opts.step.ds_min {
                        // collapsed onto a semitrivial family at the step floor
                        let fam = if state.diagnostics().mass_v < state.diagnostics().mass_u {
                            Family::One
                        } else {
                            Family::Two
                        };
                        branch.termination = Termination::Connected(fam, lambda);
                        break 'outer;
                    } else {
                        ds *= opts.step.shrink;
                        if ds < opts.step.ds_min {
                            branch.termination = Termination::SolverFailure(format!(
                                "step size underflow near lambda = {prev_lambda:.6e} ({class} state)"
                            ));
                            break 'outer;
                        }
                    }
                }
                Err(Error::Classification { class, state }) => {
                    if ds <= 4.0 * opts.step.ds_min && class == StateClass::Semitrivial {
                        let fam = if state.diagnostics().mass_v < state.diagnostics().mass_u {
                            Family::One
                        } else {
                            Family::Two
                        };
                        branch.termination = Termination::Connected(fam, state.lambda());
                        break 'outer;
                    }
                    ds *= opts.step.shrink;
                    if ds < opts.step.ds_min {
                        branch.termination = Termination::SolverFailure(format!(
                            "collapsed to a {class} state near lambda = {prev_lambda:.6e}"
                        ));
                        break 'outer;
                    }
                }
                Err(Error::NonConvergence { .. }) | Err(Error::Solver(_)) => {
                    if branch.points.len() == 1 && ds <= opts.step.ds_min * 2.0 {
                        return Err(Error::Degeneracy(
                            "first continuation step failed; check the seed".into(),
                        ));
                    }
                    ds *= opts.step.shrink;
                    if ds < opts.step.ds_min {
                        branch.termination = Termination::SolverFailure(format!(
                            "corrector failed near lambda = {prev_lambda:.6e}"
                        ));
                        break 'outer;
                    }
                }
                Err(other) => return Err(other),
            }
        }
    }
    Ok(branch)
}

/// (λ, ρ) pairs along the branch, capped to [1e-9, 1e9] for serialization;
/// the raw masses stay available in each point's diagnostics.
pub fn ratio_profile(branch: &Branch) -> Vec<(f64, f64)> {
    branch
        .points
        .iter()
        .map(|p| {
            let d = p.state.diagnostics();
            (p.state.lambda(), d.rho.clamp(1e-9, 1e9))
        })
        .collect()
}

/// Slide along the branch between two stored points: linear interpolation of
/// the fields and λ at fraction `theta`, corrected back onto the solution
/// manifold orthogonally to the secant.
fn correct_between(
    a: &CoupledState,
    b: &CoupledState,
    theta: f64,
    metric: &Metric,
    newton: &NewtonOpts,
) -> Result<CoupledState> {
    let grid_in = a.grid().clone();
    let n = grid_in.len();
    let lap = BandedOperator::laplacian_plus_const(grid_in.clone(), 0.0)?;
    let mut du = vec![0.0; n];
    let mut dv = vec![0.0; n];
    for i in 0..n {
        du[i] = b.u().values()[i] - a.u().values()[i];
        dv[i] = b.v().values()[i] - a.v().values()[i];
    }
    let dl = b.lambda() - a.lambda();
    let nrm = metric.norm((&du, &dv, dl)).max(1e-300);
    let u0: Vec<f64> = (0..n).map(|i| a.u().values()[i] + theta * du[i]).collect();
    let v0: Vec<f64> = (0..n).map(|i| a.v().values()[i] + theta * dv[i]).collect();
    let l0 = a.lambda() + theta * dl;
    let mut cu = vec![0.0; n];
    let mut cv = vec![0.0; n];
    for i in 0..n {
        cu[i] = metric.w4pi[i] * (du[i] / nrm) / metric.su2;
        cv[i] = metric.w4pi[i] * (dv[i] / nrm) / metric.sv2;
    }
    let cl = (dl / nrm) * 1.0;
    let target = {
        let mut s = cl * l0;
        for i in 0..n {
            s += cu[i] * u0[i] + cv[i] * v0[i];
        }
        s
    };
    let (u, v, lambda, _res) = bordered_newton(
        &lap,
        a.beta(),
        a.mu1(),
        a.mu2(),
        u0,
        v0,
        l0,
        &cu,
        &cv,
        cl,
        target,
        newton,
    )?;
    CoupledState::new(
        lambda,
        a.beta(),
        a.mu1(),
        a.mu2(),
        RadialField::new(grid_in.clone(), u)?,
        RadialField::new(grid_in, v)?,
    )
}

/// All branch states with mass ratio equal to `target`, one per bracketing
/// segment of the profile, ordered by |λ - 1| so the physically expected
/// match comes first.
pub fn find_ratio_all(
    branch: &Branch,
    target: f64,
    tol: f64,
    newton: &NewtonOpts,
) -> Result<Vec<CoupledState>> {
    if !(target > 0.0) {
        return Err(Error::Parameter(format!("target ratio must be positive, got {target}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("ratio tolerance must be positive, got {tol}")));
    }
    if branch.points.is_empty() {
        return Err(Error::Parameter("branch holds no points".into()));
    }
    let metric = Metric::new(branch.points[0].state.grid(), branch.scale_u, branch.scale_v);
    let rhos: Vec<f64> = branch.points.iter().map(|p| p.state.diagnostics().rho).collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &r in &rhos {
        lo = lo.min(r);
        hi = hi.max(r);
    }
    let mut matches = Vec::new();
    for i in 0..rhos.len().saturating_sub(1) {
        let (ra, rb) = (rhos[i], rhos[i + 1]);
        if (ra - target) * (rb - target) > 0.0 {
            continue;
        }
        let a = &branch.points[i].state;
        let b = &branch.points[i + 1].state;
        // bisection in the interpolation fraction
        let (mut ta, mut tb) = (0.0f64, 1.0f64);
        let (mut fa, _fb) = (ra - target, rb - target);
        let mut best: Option<CoupledState> = None;
        for _ in 0..80 {
            let tm = 0.5 * (ta + tb);
            let st = correct_between(a, b, tm, &metric, newton)?;
            let fm = st.diagnostics().rho - target;
            let done = fm.abs() <= tol * target;
            if fm * fa <= 0.0 {
                tb = tm;
            } else {
                ta = tm;
                fa = fm;
            }
            best = Some(st);
            if done {
                break;
            }
        }
        let st = best.expect("bisection produced no state");
        if (st.diagnostics().rho - target).abs() <= tol * target {
            matches.push(st);
        }
    }
    if matches.is_empty() {
        return Err(Error::Range {
            message: format!("target ratio {target:.6e} outside the branch's achieved range"),
            lo,
            hi,
        });
    }
    matches.sort_by(|x, y| {
        let dx = (x.lambda() - 1.0).abs();
        let dy = (y.lambda() - 1.0).abs();
        dx.partial_cmp(&dy).unwrap()
    });
    Ok(matches)
}

/// The branch state with mass ratio `target` nearest λ = 1.
pub fn find_ratio(
    branch: &Branch,
    target: f64,
    tol: f64,
    newton: &NewtonOpts,
) -> Result<CoupledState> {
    Ok(find_ratio_all(branch, target, tol, newton)?.remove(0))
}

/// Branch state at a prescribed λ (interpolation + fixed-λ Newton polish).
pub fn state_at_lambda(branch: &Branch, lambda: f64, newton: &NewtonOpts) -> Result<CoupledState> {
    for i in 0..branch.points.len().saturating_sub(1) {
        let la = branch.points[i].state.lambda();
        let lb = branch.points[i + 1].state.lambda();
        if (la - lambda) * (lb - lambda) <= 0.0 {
            let a = &branch.points[i].state;
            let b = &branch.points[i + 1].state;
            let theta = if (lb - la).abs() > 0.0 { (lambda - la) / (lb - la) } else { 0.5 };
            let n = a.grid().len();
            let u0: Vec<f64> = (0..n)
                .map(|k| a.u().values()[k] + theta * (b.u().values()[k] - a.u().values()[k]))
                .collect();
            let v0: Vec<f64> = (0..n)
                .map(|k| a.v().values()[k] + theta * (b.v().values()[k] - a.v().values()[k]))
                .collect();
            let guess = CoupledState::new(
                lambda,
                a.beta(),
                a.mu1(),
                a.mu2(),
                RadialField::new(a.grid().clone(), u0)?,
                RadialField::new(a.grid().clone(), v0)?,
            )?;
            return coupled::newton_solve(&guess, lambda, a.beta(), newton);
        }
    }
    let (lo, hi) = branch.lambda_range();
    Err(Error::Range { message: format!("lambda {lambda:.6e} not covered by the branch"), lo, hi })
}

/// A solution of the prescribed-mass problem produced by rescaling a branch
/// state.
#[derive(Debug, Clone)]
pub struct NormalizedSolution {
    pub lambda1: f64,
    pub lambda2: f64,
    pub u: RadialField,
    pub v: RadialField,
    pub a: f64,
    pub b: f64,
    pub beta: f64,
    pub mu1: f64,
    pub mu2: f64,
    /// λ of the branch state this came from.
    pub source_lambda: f64,
    pub residual_inf: f64,
    /// Inf-norm of the equations' individual terms; the residual bound is
    /// relative to this scale (the rescaled frame can make it large).
    pub residual_scale: f64,
    pub pohozaev_rel: f64,
}

fn rescaled_system_residual(
    lap: &BandedOperator,
    p: &SystemParams,
    u: &[f64],
    v: &[f64],
) -> (f64, f64) {
    let (ru, rv) = residual_parts(lap, p, u, v);
    let res = ru.iter().chain(rv.iter()).fold(0.0f64, |m, r| m.max(r.abs()));
    let mut scale = 0.0f64;
    for i in 0..u.len() {
        let su = p.lambda1.abs() * u[i].abs()
            + p.mu1 * u[i].abs().powi(3)
            + p.beta * u[i].abs() * v[i] * v[i];
        let sv = p.lambda2.abs() * v[i].abs()
            + p.mu2 * v[i].abs().powi(3)
            + p.beta * v[i].abs() * u[i] * u[i];
        scale = scale.max(su).max(sv);
    }
    (res, scale)
}

/// Rescale a branch state with mass ratio a/b into a solution with masses
/// exactly (a, b): u(x) = α²u_λ(α²x) with α = |u_λ|₂/a, λ₁ = λα⁴, λ₂ = α⁴.
/// The staggered grid maps node-to-node under this scaling, so the discrete
/// residual transforms exactly; a short fixed-parameter Newton polish then
/// drives it to the roundoff floor of the rescaled frame.
pub fn normalize(state: &CoupledState, a: f64, b: f64) -> Result<NormalizedSolution> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::Parameter(format!("masses must be positive (a={a}, b={b})")));
    }
    let d = state.diagnostics();
    let ratio = a / b;
    if (d.rho - ratio).abs() > 1e-6 * ratio {
        return Err(Error::Parameter(format!(
            "state mass ratio {:.9e} does not match a/b = {:.9e} to 1e-6",
            d.rho, ratio
        )));
    }
    let alpha = d.mass_u / a;
    let a2 = alpha * alpha;
    let a4 = a2 * a2;
    let src = state.grid();
    let out_grid = make_grid(src.r_max() / a2, src.len())?;
    let un: Vec<f64> = state.u().values().iter().map(|x| a2 * x).collect();
    let vn: Vec<f64> = state.v().values().iter().map(|x| a2 * x).collect();
    let lambda1 = state.lambda() * a4;
    let lambda2 = a4;
    let p = SystemParams {
        lambda1,
        lambda2,
        beta: state.beta(),
        mu1: state.mu1(),
        mu2: state.mu2(),
    };
    let lap = BandedOperator::laplacian_plus_const(out_grid.clone(), 0.0)?;
    // fixed-parameter polish in the rescaled frame
    let mut u = un;
    let mut v = vn;
    let n = out_grid.len();
    let mut best = f64::INFINITY;
    let mut stall = 0;
    for _ in 0..20 {
        let (ru, rv) = residual_parts(&lap, &p, &u, &v);
        let res = ru.iter().chain(rv.iter()).fold(0.0f64, |m, r| m.max(r.abs()));
        if res >= best {
            stall += 1;
        } else {
            stall = 0;
        }
        if stall >= 2 {
            break;
        }
        best = best.min(res);
        let jac = assemble_jacobian(&lap, &p, &u, &v);
        let lu = jac.factor()?;
        let mut step = vec![0.0; 2 * n];
        for i in 0..n {
            step[2 * i] = -ru[i];
            step[2 * i + 1] = -rv[i];
        }
        lu.solve_in_place(&mut step);
        for i in 0..n {
            u[i] += step[2 * i];
            v[i] += step[2 * i + 1];
        }
    }
    let uf = RadialField::new(out_grid.clone(), u)?;
    let vf = RadialField::new(out_grid.clone(), v)?;
    let (residual_inf, residual_scale) =
        rescaled_system_residual(&lap, &p, uf.values(), vf.values());
    if residual_inf > 1e-7 * residual_scale.max(1.0) {
        return Err(Error::Accuracy(format!(
            "rescaled residual {residual_inf:.3e} exceeds 1e-7 of the term scale \
             {residual_scale:.3e}; refine the source grid"
        )));
    }
    let mass_u = grid::l2_norm(&uf);
    let mass_v = grid::l2_norm(&vf);
    if (mass_u - a).abs() > 1e-6 * a || (mass_v - b).abs() > 1e-6 * b {
        return Err(Error::Accuracy(format!(
            "achieved masses ({mass_u:.9e}, {mass_v:.9e}) missed (a, b) = ({a}, {b})"
        )));
    }
    let lhs = lambda1 * mass_u * mass_u + lambda2 * mass_v * mass_v;
    let rhs = 0.25
        * (p.mu1 * grid::l4_norm4(&uf)
            + p.mu2 * grid::l4_norm4(&vf)
            + 2.0 * p.beta * {
                let w = out_grid.weights();
                let mut c = 0.0;
                for i in 0..n {
                    let q = uf.values()[i] * vf.values()[i];
                    c += w[i] * q * q;
                }
                4.0 * std::f64::consts::PI * c
            });
    let pohozaev_rel = (lhs - rhs).abs() / (lhs.abs() + rhs.abs());
    Ok(NormalizedSolution {
        lambda1,
        lambda2,
        u: uf,
        v: vf,
        a,
        b,
        beta: state.beta(),
        mu1: state.mu1(),
        mu2: state.mu2(),
        source_lambda: state.lambda(),
        residual_inf,
        residual_scale,
        pohozaev_rel,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStrategy {
    Family(Family),
    Explicit,
}

impl std::fmt::Display for SeedStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SeedStrategy::Family(fam) => write!(f, "family-{fam}"),
            SeedStrategy::Explicit => write!(f, "explicit"),
        }
    }
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub solution: NormalizedSolution,
    pub matched: CoupledState,
    pub branch: Branch,
    pub strategy: SeedStrategy,
}

#[derive(Debug, Clone, Copy)]
pub struct PipelineOpts {
    pub seed_eps: f64,
    pub step: StepOpts,
    /// Margin factor: tracing stops once ρ passes target*margin (or /margin).
    pub rho_margin: f64,
    /// Relative tolerance of the mass-ratio refinement.
    pub ratio_tol: f64,
    pub lambda_window: Option<(f64, f64)>,
}

impl Default for PipelineOpts {
    fn default() -> Self {
        PipelineOpts {
            seed_eps: 1e-2,
            step: StepOpts::default(),
            rho_margin: 25.0,
            ratio_tol: 1e-8,
            lambda_window: None,
        }
    }
}

fn pipeline_window(grid_in: &RadialGrid, opts: &PipelineOpts) -> (f64, f64) {
    opts.lambda_window.unwrap_or_else(|| {
        let floor = (9.0 / grid_in.r_max()).powi(2) * 0.75;
        (floor.max(1e-3), 50.0)
    })
}

fn run_strategy(
    gs: &GroundState,
    curve: &CurvePair,
    beta: f64,
    target: f64,
    strategy: SeedStrategy,
    opts: &PipelineOpts,
) -> Result<(Branch, CoupledState)> {
    let window = pipeline_window(gs.grid(), opts);
    let newton = opts.step.newton;
    let trace_opts = |seed_rho: f64| TraceOpts {
        step: opts.step,
        stop_rho_above: (seed_rho < target).then_some(target * opts.rho_margin),
        stop_rho_below: (seed_rho >= target).then_some(target / opts.rho_margin),
    };
    match strategy {
        SeedStrategy::Family(fam) => {
            // place the seed's mass ratio clear of the target: the newborn
            // amplitude eps controls it (rho ~ eps for family 2, ~1/eps for
            // family 1)
            let eps = match fam {
                Family::Two => opts.seed_eps.min(0.2 * target).max(1e-5),
                Family::One => opts.seed_eps.min(0.2 / target).max(1e-5),
            };
            let seed = seed_branch(gs, curve, fam, beta, eps, &newton)?;
            let origin = BranchOrigin::Bifurcation(fam, seed.state.lambda());
            let rho0 = seed.state.diagnostics().rho;
            let branch = trace_branch(&seed, origin, window, true, &trace_opts(rho0))?;
            let matched = find_ratio(&branch, target, opts.ratio_tol, &newton)?;
            Ok((branch, matched))
        }
        SeedStrategy::Explicit => {
            let ex = coupled::explicit_solution_lambda1(gs, curve.mu1, curve.mu2, beta)?;
            let rho0 = ex.diagnostics().rho;
            let seed = seed_from_state(ex);
            let origin = BranchOrigin::Interior(1.0);
            // trace toward the target side: rho decreases with growing lambda
            let forward = rho0 > target;
            let branch = trace_branch(&seed, origin, window, forward, &trace_opts(rho0))?;
            let matched = find_ratio(&branch, target, opts.ratio_tol, &newton)?;
            Ok((branch, matched))
        }
    }
}

/// Full prescribed-mass pipeline: pick a seeding strategy from the coupling
/// regime, trace the branch until the mass ratio brackets a/b, refine the
/// matching state, and rescale it to the requested masses.
pub fn normalized_pipeline(
    gs: &GroundState,
    curve: &CurvePair,
    beta: f64,
    a: f64,
    b: f64,
    opts: &PipelineOpts,
) -> Result<PipelineOutcome> {
    if !(a > 0.0) || !(b > 0.0) || !(beta > 0.0) {
        return Err(Error::Parameter(format!(
            "masses and coupling must be positive (a={a}, b={b}, beta={beta})"
        )));
    }
    let target = a / b;
    let (mu1, mu2) = (curve.mu1, curve.mu2);
    let explicit_ok = mu1 == mu2 || beta < mu1.min(mu2) || beta > mu1.max(mu2);
    let mut strategies = Vec::new();
    // bifurcation branches reach the extreme mass ratios; start from the
    // family whose seed sits on the far side of the target
    let fam_pref = if target <= 1.0 { Family::Two } else { Family::One };
    let fam_alt = if fam_pref == Family::Two { Family::One } else { Family::Two };
    for fam in [fam_pref, fam_alt] {
        if beta > curve.asymptote(fam) * (1.0 + 1e-9) {
            strategies.push(SeedStrategy::Family(fam));
        }
    }
    if explicit_ok {
        strategies.push(SeedStrategy::Explicit);
    }
    if strategies.is_empty() {
        return Err(Error::Domain(format!(
            "no seeding strategy available: beta = {beta:.6e} is below both bifurcation \
             asymptotes ({:.6e}, {:.6e}) and inside the explicit-solution gap",
            curve.asymptote(Family::One),
            curve.asymptote(Family::Two)
        )));
    }
    let mut last_err = None;
    let mut achieved: Option<(f64, f64)> = None;
    for strategy in strategies {
        match run_strategy(gs, curve, beta, target, strategy, opts) {
            Ok((branch, matched)) => {
                let solution = normalize(&matched, a, b)?;
                return Ok(PipelineOutcome { solution, matched, branch, strategy });
            }
            Err(Error::Range { lo, hi, message }) => {
                let acc = achieved.get_or_insert((lo, hi));
                acc.0 = acc.0.min(lo);
                acc.1 = acc.1.max(hi);
                last_err = Some(Error::Range { lo: acc.0, hi: acc.1, message });
            }
            Err(other) => {
                last_err = Some(other);
            }
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Solver("no strategy produced a branch".into())))
}

/// Undo the normalization: u_λ(x) = sqrt(λ₂) u(sqrt(λ₂) x) recovers the
/// branch-frame state with λ = λ₁/λ₂.
pub fn reverse_rescale(ns: &NormalizedSolution) -> Result<CoupledState> {
    let s2 = ns.lambda2.sqrt(); // = alpha^2
    let src = ns.u.grid();
    let back = make_grid(src.r_max() * s2, src.len())?;
    let u: Vec<f64> = ns.u.values().iter().map(|x| x / s2).collect();
    let v: Vec<f64> = ns.v.values().iter().map(|x| x / s2).collect();
    CoupledState::new(
        ns.lambda1 / ns.lambda2,
        ns.beta,
        ns.mu1,
        ns.mu2,
        RadialField::new(back.clone(), u)?,
        RadialField::new(back, v)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupled::explicit_solution_lambda1;
    use crate::groundstate::solve_scalar_ground_state;
    use crate::spectral::{curves, log_spaced};

    fn gs_on(r_max: f64, n: usize) -> GroundState {
        let g = make_grid(r_max, n).unwrap();
        solve_scalar_ground_state(&g).unwrap()
    }

    fn quick_curve(gs: &GroundState, mu1: f64, mu2: f64) -> CurvePair {
        curves(gs, mu1, mu2, &log_spaced(1e-2, 1e2, 21)).unwrap()
    }

    #[test]
    fn seed_family_two_has_expected_masses() {
        let gs = gs_on(20.0, 2000);
        let cp = quick_curve(&gs, 1.0, 1.0);
        let beta = 2.0;
        let seed = seed_branch(&gs, &cp, Family::Two, beta, 1e-2, &NewtonOpts::default()).unwrap();
        let d = seed.state.diagnostics();
        let st_mass = gs.mass(); // |U_{1,1}|_2
        assert!(d.mass_u > 0.0 && d.mass_u < 0.1 * st_mass, "mass_u = {}", d.mass_u);
        assert!((d.mass_v - st_mass).abs() <= 0.05 * st_mass, "mass_v = {}", d.mass_v);
        assert_eq!(seed.state.classify(), StateClass::Positive);
    }

    #[test]
    fn seed_family_one_at_anchor() {
        let gs = gs_on(20.0, 2000);
        let mu1 = 1.4;
        let cp = quick_curve(&gs, mu1, 1.0);
        // beta = mu1 puts the family-1 bifurcation at lambda = 1
        let seed = seed_branch(&gs, &cp, Family::One, mu1, 1e-2, &NewtonOpts::default()).unwrap();
        assert!(
            (seed.state.lambda() - 1.0).abs() <= 1e-3,
            "seed lambda {}",
            seed.state.lambda()
        );
    }

    #[test]
    fn seed_below_asymptote_fails() {
        let gs = gs_on(20.0, 2000);
        let cp = quick_curve(&gs, 1.0, 1.0);
        let beta = cp.asymptote(Family::Two) * 0.9;
        assert!(seed_branch(&gs, &cp, Family::Two, beta, 1e-2, &NewtonOpts::default()).is_err());
    }

    #[test]
    fn branch_connects_families_through_explicit_solution() {
        // coarse, fast version of the connection sweep
        let gs = gs_on(20.0, 2000);
        let cp = quick_curve(&gs, 1.0, 1.0);
        let beta = 2.0;
        let seed = seed_branch(&gs, &cp, Family::Two, beta, 1e-2, &NewtonOpts::default()).unwrap();
        let origin = BranchOrigin::Bifurcation(Family::Two, seed.state.lambda());
        let br = trace_branch(&seed, origin, (0.05, 20.0), true, &TraceOpts::default()).unwrap();
        assert!(matches!(br.termination, Termination::Connected(Family::One, _)),
            "termination {:?}", br.termination);
        // first point sits at the declared bifurcation value
        let l0 = br.points[0].state.lambda();
        if let BranchOrigin::Bifurcation(_, l) = br.origin {
            assert!((l0 - l).abs() <= 1e-3 * l);
        }
        // the branch must pass through the explicit solution at lambda = 1
        let at1 = state_at_lambda(&br, 1.0, &NewtonOpts::default()).unwrap();
        let ex = explicit_solution_lambda1(&gs, 1.0, 1.0, beta).unwrap();
        let dist = grid::joint_l2_distance((at1.u(), at1.v()), (ex.u(), ex.v())).unwrap();
        assert!(dist <= 1e-4, "distance to explicit solution {dist}");
        // mass-ratio asymptotics at the two ends
        let (rho_lo, rho_hi) = br.rho_range();
        assert!(rho_lo < 0.1 && rho_hi > 10.0, "rho range [{rho_lo}, {rho_hi}]");
        // connected end matches ell_1(beta) = 1/ell_2(beta) within 1%
        if let Termination::Connected(_, l_end) = br.termination {
            let ell2 = spectral::ell_on_grid(&cp, Family::Two, beta, &gs, gs.grid()).unwrap();
            let ell1 = 1.0 / ell2;
            assert!((l_end - ell1).abs() <= 0.01 * ell1, "end {l_end} vs ell1 {ell1}");
        }
        // rho is continuous along the branch in the step-control sense:
        // the smaller mass fraction min(rho, 1/rho) moves slower than
        // 10x the arclength step
        let frac = |r: f64| r.min(1.0 / r);
        for w in br.points.windows(2) {
            let r0 = frac(w[0].state.diagnostics().rho);
            let r1 = frac(w[1].state.diagnostics().rho);
            let ds = w[1].arclength - w[0].arclength;
            assert!(
                (r1 - r0).abs() <= 10.0 * ds.max(1e-12) + 1e-9,
                "mass-fraction jump {} over ds {}",
                (r1 - r0).abs(),
                ds
            );
        }
        // every stored point satisfies the solver invariants (loose bounds at
        // this coarse resolution; the production-grid bounds live in the
        // acceptance suite)
        for p in &br.points {
            let (eu, ev) = coupled::energy_identity_defects(&p.state);
            assert!(eu <= 1e-6 && ev <= 1e-6, "energy defects {eu} {ev}");
        }
    }

    #[test]
    fn ratio_profile_is_capped_and_ordered() {
        let gs = gs_on(20.0, 2000);
        let ex = explicit_solution_lambda1(&gs, 2.0, 1.0, 3.0).unwrap();
        let seed = seed_from_state(ex);
        let origin = BranchOrigin::Interior(1.0);
        let opts = TraceOpts {
            step: StepOpts { max_steps: 25, ..Default::default() },
            ..Default::default()
        };
        let br = trace_branch(&seed, origin, (0.3, 3.0), true, &opts).unwrap();
        let prof = ratio_profile(&br);
        assert_eq!(prof.len(), br.points.len());
        assert!((prof[0].1 - 2.0f64.sqrt()).abs() <= 1e-9);
        assert!(prof.iter().all(|&(_, r)| (1e-9..=1e9).contains(&r)));
    }

    #[test]
    fn trace_stops_at_window_edge() {
        let gs = gs_on(20.0, 2000);
        let ex = explicit_solution_lambda1(&gs, 1.0, 1.0, 2.0).unwrap();
        let seed = seed_from_state(ex);
        let br = trace_branch(
            &seed,
            BranchOrigin::Interior(1.0),
            (0.9, 1.2),
            true,
            &TraceOpts::default(),
        )
        .unwrap();
        assert_eq!(br.termination, Termination::LambdaMax, "{:?}", br.termination);
        assert!(br.points.last().unwrap().state.lambda() >= 1.2);
    }

    #[test]
    fn find_ratio_asymmetric_target_lands_at_unit_lambda() {
        // target sqrt(2) on the (2, 1, 3) branch is the closed-form state
        let gs = gs_on(20.0, 2000);
        let ex = explicit_solution_lambda1(&gs, 2.0, 1.0, 3.0).unwrap();
        let seed = seed_from_state(ex.clone());
        let opts = TraceOpts {
            step: StepOpts { max_steps: 40, ..Default::default() },
            stop_rho_below: Some(1.2),
            ..Default::default()
        };
        let br = trace_branch(&seed, BranchOrigin::Interior(1.0), (0.3, 5.0), true, &opts).unwrap();
        let hit = find_ratio(&br, 2.0f64.sqrt(), 1e-8, &NewtonOpts::default()).unwrap();
        assert!((hit.lambda() - 1.0).abs() <= 1e-5, "lambda {}", hit.lambda());
        let d = grid::joint_l2_distance((hit.u(), hit.v()), (ex.u(), ex.v())).unwrap();
        assert!(d <= 1e-6, "distance to closed form {d}");
    }

    #[test]
    fn find_ratio_hits_symmetric_target() {
        let gs = gs_on(20.0, 2000);
        let beta = 2.0;
        let ex = explicit_solution_lambda1(&gs, 1.0, 1.0, beta).unwrap();
        let seed = seed_from_state(ex.clone());
        let opts = TraceOpts {
            step: StepOpts { max_steps: 60, ..Default::default() },
            stop_rho_below: Some(0.2),
            ..Default::default()
        };
        // trace towards lambda > 1 (rho decreasing), then backwards
        let fwd = trace_branch(&seed, BranchOrigin::Interior(1.0), (0.2, 5.0), true, &opts).unwrap();
        let target = 0.7;
        let hit = find_ratio(&fwd, target, 1e-8, &NewtonOpts::default()).unwrap();
        assert!((hit.diagnostics().rho - target).abs() <= 1e-8 * target);
        // symmetric case: rho = 1 exactly at lambda = 1
        let hit1 = find_ratio(&fwd, 1.0, 1e-8, &NewtonOpts::default()).unwrap();
        assert!((hit1.lambda() - 1.0).abs() <= 1e-5, "lambda {}", hit1.lambda());
        let d = grid::joint_l2_distance((hit1.u(), hit1.v()), (ex.u(), ex.v())).unwrap();
        assert!(d <= 1e-5, "distance {d}");
        // out-of-range target reports the achieved interval
        match find_ratio(&fwd, 1e12, 1e-8, &NewtonOpts::default()) {
            Err(Error::Range { lo, hi, .. }) => assert!(lo < hi),
            other => panic!("expected range error, got {other:?}"),
        }
    }

    #[test]
    fn normalize_identity_scaling() {
        let gs = gs_on(20.0, 2000);
        let ex = explicit_solution_lambda1(&gs, 1.0, 1.0, 2.0).unwrap();
        let d = ex.diagnostics();
        let ns = normalize(&ex, d.mass_u, d.mass_v).unwrap();
        assert!((ns.lambda1 - 1.0).abs() <= 1e-12);
        assert!((ns.lambda2 - 1.0).abs() <= 1e-12);
        let mut worst = 0.0f64;
        for i in 0..ns.u.values().len() {
            worst = worst.max((ns.u.values()[i] - ex.u().values()[i]).abs());
        }
        assert!(worst <= 1e-12, "fields changed by {worst}");
    }

    #[test]
    fn normalize_and_reverse_round_trip() {
        let gs = gs_on(20.0, 2000);
        let ex = explicit_solution_lambda1(&gs, 2.0, 1.0, 3.0).unwrap();
        let d = ex.diagnostics();
        // prescribe masses with the state's exact ratio but different size
        let a = 1.3;
        let b = a / d.rho;
        let ns = normalize(&ex, a, b).unwrap();
        assert!(ns.lambda1 > 0.0 && ns.lambda2 > 0.0);
        assert!((grid::l2_norm(&ns.u) - a).abs() <= 1e-6 * a);
        assert!((grid::l2_norm(&ns.v) - b).abs() <= 1e-6 * b);
        assert!(ns.pohozaev_rel <= 5e-4, "pohozaev {}", ns.pohozaev_rel); // coarse grid
        let back = reverse_rescale(&ns).unwrap();
        assert!((back.lambda() - 1.0).abs() <= 1e-9);
        // grids agree up to roundoff in r_max; compare values directly
        let mut worst = 0.0f64;
        for i in 0..back.u().values().len() {
            worst = worst.max((back.u().values()[i] - ex.u().values()[i]).abs());
            worst = worst.max((back.v().values()[i] - ex.v().values()[i]).abs());
        }
        assert!(worst <= 1e-6, "round trip moved fields by {worst}");
    }

    #[test]
    fn normalize_symmetric_masses_give_equal_frequencies() {
        let gs = gs_on(20.0, 2000);
        let ex = explicit_solution_lambda1(&gs, 1.0, 1.0, 2.0).unwrap();
        let ns = normalize(&ex, 2.0, 2.0).unwrap();
        assert!((ns.lambda1 - ns.lambda2).abs() <= 1e-12 * ns.lambda2);
        let mut worst = 0.0f64;
        for i in 0..ns.u.values().len() {
            worst = worst.max((ns.u.values()[i] - ns.v.values()[i]).abs());
        }
        assert!(worst <= 1e-10);
    }

    #[test]
    fn normalize_rejects_mismatched_ratio() {
        let gs = gs_on(20.0, 2000);
        let ex = explicit_solution_lambda1(&gs, 1.0, 1.0, 2.0).unwrap();
        assert!(matches!(normalize(&ex, 1.0, 2.0), Err(Error::Parameter(_))));
    }
}
