//! Parameter-space sweeps producing numerical evidence maps: where do
//! positive solutions with a prescribed mass ratio (or at a prescribed
//! frequency ratio) exist? Verdicts are evidence, never proof; each
//! no-solution cell carries its full probe record.

use rayon::prelude::*;

use crate::continuation::{self, PipelineOpts};
use crate::coupled::{self, NewtonOpts, ProbeRecord};
use crate::error::{Error, Result};
use crate::groundstate::GroundState;
use crate::spectral::{CurvePair, Family};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    SolutionFound,
    NoSolutionEvidence,
    SolverInconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::SolutionFound => write!(f, "solution-found"),
            Verdict::NoSolutionEvidence => write!(f, "no-solution-evidence"),
            Verdict::SolverInconclusive => write!(f, "solver-inconclusive"),
        }
    }
}

/// Scalar summary of a found solution attached to a cell.
#[derive(Debug, Clone, Copy)]
pub struct SolutionSummary {
    pub lambda: f64,
    pub mass_u: f64,
    pub mass_v: f64,
    pub rho: f64,
    pub residual_inf: f64,
    pub pohozaev_rel: f64,
}

#[derive(Debug, Clone)]
pub enum Evidence {
    Solution(SolutionSummary),
    /// Probe statistics for cells without a solution (or with a failed run).
    Probes { attempted: usize, records: Vec<ProbeRecord>, note: String },
}

#[derive(Debug, Clone)]
pub struct RegionCell {
    pub mu1: f64,
    pub mu2: f64,
    pub beta: f64,
    /// a/b for mass-plane maps, λ for frequency-plane maps.
    pub coordinate: f64,
    pub verdict: Verdict,
    pub evidence: Evidence,
}

/// Default 25 log-spaced mass ratios in [1e-3, 1e3].
pub fn default_ratio_grid() -> Vec<f64> {
    crate::spectral::log_spaced(1e-3, 1e3, 25)
}

/// Default 40 log-spaced frequency ratios in [1e-4, 1e4].
pub fn default_lambda_probe_grid() -> Vec<f64> {
    crate::spectral::log_spaced(1e-4, 1e4, 40)
}

/// Sweep prescribed mass ratios a/b at fixed couplings: one normalization
/// pipeline run per cell.
pub fn map_mass_plane(
    gs: &GroundState,
    curve: &CurvePair,
    beta: f64,
    ratio_grid: &[f64],
    opts: &PipelineOpts,
) -> Result<Vec<RegionCell>> {
    if ratio_grid.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::Parameter("ratio grid must be positive".into()));
    }
    let cells: Vec<RegionCell> = ratio_grid
        .par_iter()
        .map(|&ratio| {
            let (verdict, evidence) =
                match continuation::normalized_pipeline(gs, curve, beta, ratio, 1.0, opts) {
                    Ok(out) => {
                        let s = &out.solution;
                        (
                            Verdict::SolutionFound,
                            Evidence::Solution(SolutionSummary {
                                lambda: out.matched.lambda(),
                                mass_u: s.a,
                                mass_v: s.b,
                                rho: ratio,
                                residual_inf: s.residual_inf,
                                pohozaev_rel: s.pohozaev_rel,
                            }),
                        )
                    }
                    Err(Error::Range { lo, hi, .. }) => (
                        Verdict::NoSolutionEvidence,
                        Evidence::Probes {
                            attempted: 0,
                            records: Vec::new(),
                            note: format!(
                                "branch mass ratios covered [{lo:.6e}, {hi:.6e}] without reaching {ratio:.6e}"
                            ),
                        },
                    ),
                    Err(Error::Domain(note)) => (
                        Verdict::NoSolutionEvidence,
                        Evidence::Probes { attempted: 0, records: Vec::new(), note },
                    ),
                    Err(e) => (
                        Verdict::SolverInconclusive,
                        Evidence::Probes {
                            attempted: 0,
                            records: Vec::new(),
                            note: format!("pipeline failed: {e}"),
                        },
                    ),
                };
            RegionCell {
                mu1: curve.mu1,
                mu2: curve.mu2,
                beta,
                coordinate: ratio,
                verdict,
                evidence,
            }
        })
        .collect();
    Ok(cells)
}

/// Sweep frequency ratios λ at fixed couplings with k multistart probes per
/// cell.
#[allow(clippy::too_many_arguments)]
pub fn map_frequency_plane(
    gs: &GroundState,
    mu1: f64,
    mu2: f64,
    beta: f64,
    lambda_grid: &[f64],
    k: usize,
    seed: u64,
    newton: &NewtonOpts,
) -> Result<Vec<RegionCell>> {
    if lambda_grid.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Parameter("lambda grid must be positive".into()));
    }
    let cells: Vec<RegionCell> = lambda_grid
        .par_iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let cell_seed = seed.wrapping_add((i as u64).wrapping_mul(0x9e3779b97f4a7c15));
            let (verdict, evidence) =
                match coupled::multistart_probe(gs, mu1, mu2, lambda, beta, k, cell_seed, newton) {
                    Ok(report) => {
                        if let Some(best) = report.positives.first() {
                            let d = best.diagnostics();
                            (
                                Verdict::SolutionFound,
                                Evidence::Solution(SolutionSummary {
                                    lambda,
                                    mass_u: d.mass_u,
                                    mass_v: d.mass_v,
                                    rho: d.rho,
                                    residual_inf: d.residual_inf,
                                    pohozaev_rel: d.pohozaev_rel,
                                }),
                            )
                        } else {
                            (
                                Verdict::NoSolutionEvidence,
                                Evidence::Probes {
                                    attempted: k,
                                    records: report.records,
                                    note: "no positive solution found (evidence, not proof)".into(),
                                },
                            )
                        }
                    }
                    Err(e) => (
                        Verdict::SolverInconclusive,
                        Evidence::Probes {
                            attempted: k,
                            records: Vec::new(),
                            note: format!("probe failed: {e}"),
                        },
                    ),
                };
            RegionCell { mu1, mu2, beta, coordinate: lambda, verdict, evidence }
        })
        .collect();
    Ok(cells)
}

#[derive(Debug, Clone, Copy)]
pub struct EtaEstimate {
    pub which: Family,
    pub beta: f64,
    /// Midpoint of the bracketing interval around the empirical transition.
    pub value: f64,
    pub bracket: (f64, f64),
    pub probes_per_point: usize,
}

/// Empirical existence threshold in λ for β ≥ μ_which: bisect between a λ
/// with solution evidence and one without.
#[allow(clippy::too_many_arguments)]
pub fn estimate_eta(
    gs: &GroundState,
    which: Family,
    mu1: f64,
    mu2: f64,
    beta: f64,
    window: (f64, f64),
    k: usize,
    seed: u64,
    newton: &NewtonOpts,
) -> Result<EtaEstimate> {
    let mu_which = match which {
        Family::One => mu1,
        Family::Two => mu2,
    };
    if beta < mu_which {
        return Err(Error::Parameter(format!(
            "eta estimate for family {which} needs beta >= mu (got beta = {beta}, mu = {mu_which})"
        )));
    }
    let (lo0, hi0) = window;
    if !(lo0 > 0.0) || !(hi0 > lo0) {
        return Err(Error::Parameter(format!("invalid window [{lo0}, {hi0}]")));
    }
    let has_solution = |lambda: f64, salt: u64| -> Result<bool> {
        let report =
            coupled::multistart_probe(gs, mu1, mu2, lambda, beta, k, seed ^ salt, newton)?;
        Ok(!report.positives.is_empty())
    };
    // family 2: nonexistence for small lambda; family 1: for large lambda
    let (mut none_side, mut some_side) = match which {
        Family::Two => (lo0, hi0),
        Family::One => (hi0, lo0),
    };
    if has_solution(none_side, 1)? {
        return Err(Error::Range {
            message: format!(
                "no transition in the window: solutions found at the expected nonexistence edge \
                 lambda = {none_side:.6e}"
            ),
            lo: lo0,
            hi: hi0,
        });
    }
    if !has_solution(some_side, 2)? {
        return Err(Error::Range {
            message: format!(
                "no transition in the window: no solutions found even at lambda = {some_side:.6e}"
            ),
            lo: lo0,
            hi: hi0,
        });
    }
    for i in 0..24 {
        let mid = (none_side * some_side).sqrt();
        if has_solution(mid, 3 + i)? {
            some_side = mid;
        } else {
            none_side = mid;
        }
        if (some_side / none_side).ln().abs() < 0.02 {
            break;
        }
    }
    let bracket = (none_side.min(some_side), none_side.max(some_side));
    Ok(EtaEstimate {
        which,
        beta,
        value: (bracket.0 * bracket.1).sqrt(),
        bracket,
        probes_per_point: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuation::StepOpts;
    use crate::grid::make_grid;
    use crate::groundstate::solve_scalar_ground_state;
    use crate::spectral::{curves, log_spaced};

    fn setup() -> (GroundState, CurvePair) {
        let g = make_grid(20.0, 2000).unwrap();
        let gs = solve_scalar_ground_state(&g).unwrap();
        let cp = curves(&gs, 1.0, 1.0, &log_spaced(1e-2, 1e2, 21)).unwrap();
        (gs, cp)
    }

    #[test]
    fn empty_ratio_grid_gives_empty_map() {
        let (gs, cp) = setup();
        let cells = map_mass_plane(&gs, &cp, 2.0, &[], &PipelineOpts::default()).unwrap();
        assert!(cells.is_empty());
    }

    #[test]
    fn mass_plane_finds_solutions_in_good_regime() {
        let (gs, cp) = setup();
        let ratios = [0.5, 1.0, 2.0];
        let cells = map_mass_plane(&gs, &cp, 2.0, &ratios, &PipelineOpts::default()).unwrap();
        assert_eq!(cells.len(), 3);
        for c in &cells {
            assert_eq!(c.verdict, Verdict::SolutionFound, "ratio {}", c.coordinate);
            if let Evidence::Solution(s) = &c.evidence {
                assert!(s.residual_inf.is_finite());
            } else {
                panic!("solution cell without summary");
            }
        }
    }

    #[test]
    fn frequency_plane_single_cell() {
        let (gs, _) = setup();
        let cells = map_frequency_plane(
            &gs,
            1.0,
            1.0,
            2.0,
            &[1.0],
            4,
            7,
            &NewtonOpts::default(),
        )
        .unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].verdict, Verdict::SolutionFound);
    }

    #[test]
    fn frequency_plane_detects_nonexistence() {
        let (gs, _) = setup();
        let cells = map_frequency_plane(
            &gs,
            1.0,
            3.0,
            3.0,
            &[1e-3],
            5,
            11,
            &NewtonOpts::default(),
        )
        .unwrap();
        assert_eq!(cells[0].verdict, Verdict::NoSolutionEvidence);
        if let Evidence::Probes { attempted, records, .. } = &cells[0].evidence {
            assert_eq!(*attempted, 5);
            assert_eq!(records.len(), 5);
            let distinct: std::collections::HashSet<u64> =
                records.iter().map(|r| r.seed).collect();
            assert_eq!(distinct.len(), 5, "probe seeds must be distinct");
        } else {
            panic!("nonexistence cell without probe records");
        }
    }

    #[test]
    fn verdicts_reproduce_bit_identically() {
        let (gs, _) = setup();
        let run = || {
            map_frequency_plane(&gs, 1.0, 3.0, 3.0, &[0.5, 1.0], 3, 23, &NewtonOpts::default())
                .unwrap()
        };
        let (a, b) = (run(), run());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.verdict, y.verdict);
            if let (Evidence::Solution(sx), Evidence::Solution(sy)) = (&x.evidence, &y.evidence) {
                assert_eq!(sx.mass_u.to_bits(), sy.mass_u.to_bits());
                assert_eq!(sx.residual_inf.to_bits(), sy.residual_inf.to_bits());
            }
        }
    }

    #[test]
    fn eta_estimate_finds_transition() {
        let g = make_grid(20.0, 2000).unwrap();
        let gs = solve_scalar_ground_state(&g).unwrap();
        // beta >= mu2: nonexistence for small lambda (family-2 threshold)
        let est = estimate_eta(
            &gs,
            Family::Two,
            1.0,
            3.0,
            3.0,
            (1e-4, 0.25),
            8,
            3,
            &NewtonOpts::default(),
        )
        .unwrap();
        assert!(est.bracket.0 < est.value && est.value < est.bracket.1);
        assert!(est.value > 1e-4 && est.value < 0.25, "eta = {}", est.value);
    }

    #[test]
    fn eta_estimate_rejects_beta_below_mu() {
        let g = make_grid(20.0, 2000).unwrap();
        let gs = solve_scalar_ground_state(&g).unwrap();
        assert!(estimate_eta(
            &gs,
            Family::Two,
            1.0,
            3.0,
            2.0,
            (1e-4, 1.0),
            2,
            3,
            &NewtonOpts::default()
        )
        .is_err());
    }

    #[test]
    fn degenerate_single_point_grid() {
        let (gs, cp) = setup();
        let cells = map_mass_plane(&gs, &cp, 2.0, &[1.0], &PipelineOpts {
            step: StepOpts { max_steps: 200, ..Default::default() },
            ..Default::default()
        })
        .unwrap();
        assert_eq!(cells.len(), 1);
    }
}

