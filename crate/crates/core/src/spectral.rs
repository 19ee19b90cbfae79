//! The weighted eigenvalue problem (-Δ + s) φ = τ U² φ and everything built
//! on it: the coupling threshold τ₀, the bifurcation curves
//! β₁(λ) = μ₁ τ(1/λ) and β₂(λ) = μ₂ τ(λ), their crossing λ*, their inverses
//! ℓ₁, ℓ₂, and the kernel directions at the bifurcation points.
//!
//! Eigenvalues come from inverse iteration with the definite tridiagonal
//! solve; the first eigenfunction of the pencil is simple and positive, so a
//! positive start stays positive and no reorthogonalization is needed.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{self, make_grid, RadialField, RadialGrid};
use crate::groundstate::{self, GroundState};
use crate::operator::BandedOperator;

/// Which semitrivial family a curve or tangent refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    One,
    Two,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::One => write!(f, "1"),
            Family::Two => write!(f, "2"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub s: f64,
    pub tau: f64,
    /// First eigenfunction, positive, normalized by 4π ∫ U² φ² r² dr = 1.
    pub phi: RadialField,
    pub residual: f64,
    pub iterations: usize,
}

const EIG_MAX_ITER: usize = 4000;

/// Smallest eigenvalue of (-Δ + s) φ = τ U² φ on the given grid by inverse
/// iteration. `deflate` B-orthogonalizes against a previously computed
/// eigenfunction to reach the second eigenvalue.
fn eigen_smallest(
    grid_in: &Arc<RadialGrid>,
    s: f64,
    usq: &[f64],
    deflate: Option<&RadialField>,
    tol: f64,
) -> Result<EigenResult> {
    let n = grid_in.len();
    let op = BandedOperator::laplacian_plus_const(grid_in.clone(), s)?;
    let w = grid_in.weights();
    let binner = |a: &[f64], b: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            acc += w[i] * usq[i] * a[i] * b[i];
        }
        4.0 * std::f64::consts::PI * acc
    };
    // start from U itself: positive with full overlap on the weight
    let mut x: Vec<f64> = usq.iter().map(|u| u.sqrt()).collect();
    if let Some(d) = deflate {
        let c = binner(&x, d.values());
        for i in 0..n {
            x[i] -= c * d.values()[i];
        }
    }
    let nb = binner(&x, &x).sqrt();
    for xi in x.iter_mut() {
        *xi /= nb;
    }
    let mut tau_val = 0.0;
    let mut residual = f64::INFINITY;
    for it in 0..EIG_MAX_ITER {
        let bx = RadialField::from_values_unchecked(
            grid_in.clone(),
            x.iter().zip(usq.iter()).map(|(xi, u)| xi * u).collect(),
        );
        let mut y = op.solve(&bx)?.values().to_vec();
        if let Some(d) = deflate {
            let c = binner(&y, d.values());
            for i in 0..n {
                y[i] -= c * d.values()[i];
            }
        }
        let nb = binner(&y, &y).sqrt();
        if !(nb > 0.0) || !nb.is_finite() {
            return Err(Error::Solver("inverse iteration collapsed to zero".into()));
        }
        for yi in y.iter_mut() {
            *yi /= nb;
        }
        let yf = RadialField::from_values_unchecked(grid_in.clone(), y.clone());
        let ay = op.apply(&yf)?;
        // Rayleigh quotient with the B-normalization already applied
        let mut num = 0.0;
        for i in 0..n {
            num += w[i] * y[i] * ay.values()[i];
        }
        tau_val = 4.0 * std::f64::consts::PI * num;
        let mut r2 = 0.0;
        for i in 0..n {
            let r = ay.values()[i] - tau_val * usq[i] * y[i];
            r2 += w[i] * r * r;
        }
        residual = (4.0 * std::f64::consts::PI * r2).sqrt();
        x = y;
        if residual <= tol * tau_val.abs().max(1.0) {
            let mut phi = RadialField::from_values_unchecked(grid_in.clone(), x);
            if phi.values().iter().sum::<f64>() < 0.0 {
                for v in phi.values_mut() {
                    *v = -*v;
                }
            }
            return Ok(EigenResult { s, tau: tau_val, phi, residual, iterations: it + 1 });
        }
    }
    Err(Error::NonConvergence { iterations: EIG_MAX_ITER, residual: residual / tau_val.abs().max(1.0) })
}

/// τ(s): smallest eigenvalue of (-Δ + s) φ = τ U² φ.
///
/// For s < 1e-2 the eigenfunction decays too slowly for the production
/// domain, so the caller must supply a grid with r_max >= 200.
pub fn tau(s: f64, gs: &GroundState, grid_in: &Arc<RadialGrid>) -> Result<EigenResult> {
    if !(s >= 0.0) {
        return Err(Error::Parameter(format!("shift must be nonnegative, got {s}")));
    }
    if s < 1e-2 && grid_in.r_max() < 200.0 {
        return Err(Error::Parameter(format!(
            "shift {s} needs a large domain (r_max >= 200), grid has r_max {}",
            grid_in.r_max()
        )));
    }
    let gs_here = groundstate::resample(gs, grid_in)?;
    let usq: Vec<f64> = gs_here.field().values().iter().map(|u| u * u).collect();
    let res = eigen_smallest(grid_in, s, &usq, None, 1e-8)?;
    if res.phi.min_value() <= 0.0 {
        return Err(Error::Degeneracy(
            "first eigenfunction lost positivity; grid too coarse for this shift".into(),
        ));
    }
    Ok(res)
}

/// Domain/resolution rule for a shift s, quantized so repeated queries share
/// grids. Small shifts enlarge the domain (slow decay), large shifts refine
/// the mesh (the eigenfunction narrows like 1/sqrt(s)).
fn grid_for_shift(s: f64) -> (f64, usize) {
    if s < 0.25 {
        let want = 20.0 / s.max(1e-12).sqrt();
        let r_max = [50.0, 100.0, 200.0, 400.0]
            .into_iter()
            .find(|&r| r >= want)
            .unwrap_or(400.0);
        (r_max, (r_max * 40.0) as usize)
    } else if s <= 4.0 {
        (20.0, 2000)
    } else {
        let doublings = ((s.sqrt() / 2.0).log2().ceil()).max(1.0) as i32;
        (20.0, 2000usize << doublings.min(4))
    }
}

/// τ(s) on an automatically chosen grid, with memoized ground states.
pub struct TauEvaluator<'a> {
    gs: &'a GroundState,
    grids: HashMap<(u64, usize), (Arc<RadialGrid>, Vec<f64>)>,
    values: HashMap<u64, f64>,
}

impl<'a> TauEvaluator<'a> {
    pub fn new(gs: &'a GroundState) -> Self {
        TauEvaluator { gs, grids: HashMap::new(), values: HashMap::new() }
    }

    fn grid_and_weight(&mut self, r_max: f64, n: usize) -> Result<&(Arc<RadialGrid>, Vec<f64>)> {
        let key = (r_max.to_bits(), n);
        if !self.grids.contains_key(&key) {
            let g = make_grid(r_max, n)?;
            let gs_here = groundstate::resample(self.gs, &g)?;
            let usq = gs_here.field().values().iter().map(|u| u * u).collect();
            self.grids.insert(key, (g, usq));
        }
        Ok(&self.grids[&key])
    }

    pub fn eval(&mut self, s: f64) -> Result<f64> {
        if let Some(&v) = self.values.get(&s.to_bits()) {
            return Ok(v);
        }
        let (r_max, n) = grid_for_shift(s);
        let (g, usq) = {
            let entry = self.grid_and_weight(r_max, n)?;
            (entry.0.clone(), entry.1.clone())
        };
        let res = eigen_smallest(&g, s, &usq, None, 1e-8)?;
        self.values.insert(s.to_bits(), res.tau);
        Ok(res.tau)
    }
}

/// τ(s) on the automatically chosen domain/resolution for that shift.
pub fn tau_on_auto_grid(s: f64, gs: &GroundState) -> Result<EigenResult> {
    if !(s >= 0.0) {
        return Err(Error::Parameter(format!("shift must be nonnegative, got {s}")));
    }
    let (r_max, n) = grid_for_shift(s);
    let g = make_grid(r_max, n)?;
    let gs_here = groundstate::resample(gs, &g)?;
    let usq: Vec<f64> = gs_here.field().values().iter().map(|u| u * u).collect();
    eigen_smallest(&g, s, &usq, None, 1e-8)
}

#[derive(Debug, Clone)]
pub struct Tau0Estimate {
    /// Extrapolated limit of τ(0; R) over the truncation radii.
    pub value: f64,
    /// Magnitude of the extrapolation step, used as the error bar.
    pub error_estimate: f64,
    /// Empirical decay rate of the truncation error in R.
    pub rate: f64,
    /// (r_max, τ) samples entering the extrapolation.
    pub samples: Vec<(f64, f64)>,
    /// Set when the sequence was not monotone and the estimate is weak.
    pub warning: Option<String>,
}

/// τ₀ = lim_{s→0} τ(s), computed at s = 0 with Dirichlet truncation on
/// r_max in {100, 200, 400} and Richardson extrapolation in the radius.
/// The decay exponent is estimated from the samples themselves.
pub fn tau0(gs: &GroundState) -> Result<Tau0Estimate> {
    let mut samples = Vec::new();
    for r_max in [100.0, 200.0, 400.0] {
        let n = (r_max * 40.0) as usize;
        let g = make_grid(r_max, n)?;
        let gs_here = groundstate::resample(gs, &g)?;
        let usq: Vec<f64> = gs_here.field().values().iter().map(|u| u * u).collect();
        let res = eigen_smallest(&g, 0.0, &usq, None, 1e-8)?;
        samples.push((r_max, res.tau));
    }
    let d1 = samples[0].1 - samples[1].1;
    let d2 = samples[1].1 - samples[2].1;
    let last = samples[2].1;
    if d1 * d2 <= 0.0 || d2.abs() >= d1.abs() {
        return Ok(Tau0Estimate {
            value: last,
            error_estimate: d1.abs().max(d2.abs()),
            rate: f64::NAN,
            samples,
            warning: Some("non-monotone truncation sequence; extrapolation skipped".into()),
        });
    }
    let rate = (d1 / d2).log2();
    let value = last - d2 / (2f64.powf(rate) - 1.0);
    Ok(Tau0Estimate {
        value,
        error_estimate: (value - last).abs(),
        rate,
        samples,
        warning: None,
    })
}

/// Tabulated bifurcation curves for fixed couplings.
#[derive(Debug, Clone)]
pub struct CurvePair {
    pub mu1: f64,
    pub mu2: f64,
    pub lambdas: Vec<f64>,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub lambda_star: f64,
    pub beta_star: f64,
    pub tau0: Tau0Estimate,
}

impl CurvePair {
    pub fn mu(&self, which: Family) -> f64 {
        match which {
            Family::One => self.mu1,
            Family::Two => self.mu2,
        }
    }

    /// Asymptote level μ_i τ₀ below which family i has no bifurcation point.
    pub fn asymptote(&self, which: Family) -> f64 {
        self.mu(which) * self.tau0.value
    }
}

/// Default tabulation grid: 200 log-spaced λ in [1e-3, 1e3].
pub fn default_lambda_grid() -> Vec<f64> {
    log_spaced(1e-3, 1e3, 200)
}

pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Tabulate β₁, β₂ on the λ grid and locate the unique crossing λ*.
pub fn curves(gs: &GroundState, mu1: f64, mu2: f64, lambda_grid: &[f64]) -> Result<CurvePair> {
    if !(mu1 > 0.0) || !(mu2 > 0.0) {
        return Err(Error::Parameter(format!("couplings must be positive (got {mu1}, {mu2})")));
    }
    if lambda_grid.len() < 2 || lambda_grid.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Parameter("lambda grid must hold >= 2 positive values".into()));
    }
    if lambda_grid.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::Parameter("lambda grid must be strictly increasing".into()));
    }
    let mut ev = TauEvaluator::new(gs);
    let mut lambdas = lambda_grid.to_vec();
    let diff = |ev: &mut TauEvaluator, l: f64| -> Result<f64> {
        Ok(mu1 * ev.eval(1.0 / l)? - mu2 * ev.eval(l)?)
    };
    // bracket the crossing on the tabulated grid
    let d_lo = diff(&mut ev, lambdas[0])?;
    let d_hi = diff(&mut ev, *lambdas.last().unwrap())?;
    if d_lo <= 0.0 || d_hi >= 0.0 {
        return Err(Error::Range {
            message: format!(
                "lambda grid [{:.3e}, {:.3e}] does not bracket the curve crossing; extend it {}",
                lambdas[0],
                lambdas.last().unwrap(),
                if d_lo <= 0.0 { "to smaller lambda" } else { "to larger lambda" }
            ),
            lo: d_hi,
            hi: d_lo,
        });
    }
    let (mut lo, mut hi) = (lambdas[0], *lambdas.last().unwrap());
    let mut lambda_star = (lo * hi).sqrt();
    let mut beta_star = 0.0;
    for _ in 0..200 {
        lambda_star = (lo * hi).sqrt();
        let b1 = mu1 * ev.eval(1.0 / lambda_star)?;
        let b2 = mu2 * ev.eval(lambda_star)?;
        beta_star = 0.5 * (b1 + b2);
        if (b1 - b2).abs() <= 1e-7 * beta_star || (hi - lo) <= 1e-12 * lambda_star {
            break;
        }
        if b1 - b2 > 0.0 {
            lo = lambda_star;
        } else {
            hi = lambda_star;
        }
    }
    // densify the tabulation near the crossing
    let gap = 1.6f64;
    for extra in log_spaced(lambda_star / gap, lambda_star * gap, 16) {
        lambdas.push(extra);
    }
    lambdas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    lambdas.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    let mut beta1 = Vec::with_capacity(lambdas.len());
    let mut beta2 = Vec::with_capacity(lambdas.len());
    for &l in &lambdas {
        beta1.push(mu1 * ev.eval(1.0 / l)?);
        beta2.push(mu2 * ev.eval(l)?);
    }
    if beta1.windows(2).any(|p| p[1] >= p[0]) {
        return Err(Error::Accuracy("tabulated beta_1 is not strictly decreasing".into()));
    }
    if beta2.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Accuracy("tabulated beta_2 is not strictly increasing".into()));
    }
    let t0 = tau0(gs)?;
    if beta1.last().unwrap() <= &(mu1 * t0.value) || beta2[0] <= mu2 * t0.value {
        return Err(Error::Accuracy("tabulated curves dipped below the tau_0 asymptote".into()));
    }
    Ok(CurvePair { mu1, mu2, lambdas, beta1, beta2, lambda_star, beta_star, tau0: t0 })
}

fn invert_tau(
    mut eval: impl FnMut(f64) -> Result<f64>,
    target: f64,
    beta: f64,
) -> Result<f64> {
    // bracket in the shift variable s (tau is strictly increasing in s)
    let (mut s_lo, mut s_hi) = (1.0, 1.0);
    while eval(s_lo)? > target {
        s_lo /= 4.0;
        if s_lo < 1e-8 {
            return Err(Error::Range {
                message: format!("beta/mu = {target:.6e} is too close to the tau_0 asymptote to invert"),
                lo: 0.0,
                hi: target,
            });
        }
    }
    while eval(s_hi)? < target {
        s_hi *= 4.0;
        if s_hi > 1e8 {
            return Err(Error::Range {
                message: format!("beta/mu = {target:.6e} beyond invertible range"),
                lo: 0.0,
                hi: 1e8,
            });
        }
    }
    let mut s_mid = (s_lo * s_hi).sqrt();
    for _ in 0..200 {
        s_mid = (s_lo * s_hi).sqrt();
        let t = eval(s_mid)?;
        if (t - target).abs() * beta <= 1e-8 * beta * target.max(1e-300)
            || (s_hi - s_lo) <= 1e-13 * s_mid
        {
            break;
        }
        if t < target {
            s_lo = s_mid;
        } else {
            s_hi = s_mid;
        }
    }
    Ok(s_mid)
}

/// Invert a bifurcation curve: the λ with β_which(λ) = β, to 1e-8 relative.
/// Eigenvalues are re-solved on shift-adapted grids.
pub fn ell(curve: &CurvePair, which: Family, beta: f64, gs: &GroundState) -> Result<f64> {
    let mu = curve.mu(which);
    if beta <= curve.asymptote(which) {
        return Err(Error::Domain(format!(
            "no bifurcation point exists on family {which}: beta {beta:.6e} <= mu*tau0 {:.6e}",
            curve.asymptote(which)
        )));
    }
    let mut ev = TauEvaluator::new(gs);
    let s = invert_tau(|s| ev.eval(s), beta / mu, beta)?;
    Ok(match which {
        Family::Two => s,
        Family::One => 1.0 / s,
    })
}

/// Same inversion, but with the eigenvalue pinned to one fixed grid. Use this
/// when the result feeds a computation living on that grid (seeding, tangent
/// consistency): the discrete curve is then matched to 1e-8 by construction.
pub fn ell_on_grid(
    curve: &CurvePair,
    which: Family,
    beta: f64,
    gs: &GroundState,
    grid_in: &Arc<RadialGrid>,
) -> Result<f64> {
    let mu = curve.mu(which);
    if beta <= curve.asymptote(which) {
        return Err(Error::Domain(format!(
            "no bifurcation point exists on family {which}: beta {beta:.6e} <= mu*tau0 {:.6e}",
            curve.asymptote(which)
        )));
    }
    let gs_here = groundstate::resample(gs, grid_in)?;
    let usq: Vec<f64> = gs_here.field().values().iter().map(|u| u * u).collect();
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let s = invert_tau(
        |s| {
            if let Some(&v) = cache.get(&s.to_bits()) {
                return Ok(v);
            }
            let v = eigen_smallest(grid_in, s, &usq, None, 1e-9)?.tau;
            cache.insert(s.to_bits(), v);
            Ok(v)
        },
        beta / mu,
        beta,
    )?;
    Ok(match which {
        Family::Two => s,
        Family::One => 1.0 / s,
    })
}

/// Kernel direction of the linearization at the semitrivial solution of the
/// named family, at a point (λ, β) on its bifurcation curve. Returned as the
/// (u, v) pair on the ground state's grid, normalized to unit L².
///
/// `mu` is the self-coupling of the family's nonzero component.
pub fn bifurcation_tangent(
    which: Family,
    lambda: f64,
    beta: f64,
    mu: f64,
    gs: &GroundState,
) -> Result<(RadialField, RadialField)> {
    if !(lambda > 0.0) || !(beta > 0.0) || !(mu > 0.0) {
        return Err(Error::Parameter("tangent needs positive lambda, beta, mu".into()));
    }
    let grid_in = gs.grid().clone();
    let s = match which {
        Family::Two => lambda,
        Family::One => 1.0 / lambda,
    };
    let usq: Vec<f64> = gs.field().values().iter().map(|u| u * u).collect();
    let first = eigen_smallest(&grid_in, s, &usq, None, 1e-8)?;
    let miss = (mu * first.tau - beta).abs() / beta;
    if miss > 1e-6 {
        return Err(Error::Degeneracy(format!(
            "(lambda, beta) is off the family-{which} curve: mu*tau = {:.9e} vs beta = {beta:.9e} \
             (relative gap {miss:.2e})",
            mu * first.tau
        )));
    }
    // kernel must be one-dimensional: the next eigenvalue stays clear of beta/mu
    let second = eigen_smallest(&grid_in, s, &usq, Some(&first.phi), 1e-6)?;
    if (mu * second.tau - beta).abs() <= 1e-6 * beta {
        return Err(Error::Degeneracy(format!(
            "kernel dimension exceeds one at (lambda={lambda}, beta={beta}): \
             second eigenvalue {:.9e} also matches",
            second.tau
        )));
    }
    let phi = match which {
        Family::Two => first.phi,
        Family::One => {
            // the family-1 direction is the s = 1/λ eigenfunction shrunk by sqrt(λ)
            let prof = groundstate::field_profile(&first.phi)?;
            let sq = lambda.sqrt();
            let r_last = *grid_in.nodes().last().unwrap();
            RadialField::from_fn(grid_in.clone(), |r| {
                let arg = sq * r;
                if arg <= r_last {
                    prof.eval(arg)
                } else {
                    0.0
                }
            })?
        }
    };
    let nrm = grid::l2_norm(&phi);
    let unit = RadialField::from_values_unchecked(
        grid_in.clone(),
        phi.values().iter().map(|v| v / nrm).collect(),
    );
    let zero = RadialField::zeros(grid_in);
    Ok(match which {
        Family::Two => (unit, zero),
        Family::One => (zero, unit),
    })
}
