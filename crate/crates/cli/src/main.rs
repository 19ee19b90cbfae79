//! Command-line frontend: ground states, eigenvalue curves, fixed-parameter
//! solves, branch continuation, prescribed-mass solutions, and parameter
//! region maps. Outputs are deterministic for a fixed config and seed.

mod config;
mod emit;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::Serialize;

use cnls_core::continuation::{
    self, Branch, BranchOrigin, PipelineOpts, Termination, TraceOpts,
};
use cnls_core::coupled::{self, CoupledState};
use cnls_core::groundstate::{self};
use cnls_core::interp::MonotoneCubic;
use cnls_core::region::{self, Evidence};
use cnls_core::spectral::{self, Family};
use cnls_core::{make_grid, Error, RadialField, RadialGrid};

use config::{parse_config, OutputFormat, RunConfig};
use emit::Provenance;

#[derive(Parser)]
#[command(
    name = "cnls",
    version,
    about = "Radially symmetric positive solutions of coupled cubic Schrödinger systems: \
             ground states, bifurcation curves, branch continuation, prescribed-mass solutions"
)]
struct Cli {
    /// Configuration file (key = value lines, '#' comments)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed for multistart probing
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output formats to emit (defaults to all)
    #[arg(long, global = true, value_delimiter = ',')]
    format: Vec<OutputFormat>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute the scalar ground state and its diagnostics
    Groundstate,
    /// Smallest eigenvalue of the weighted problem at shift s
    Tau {
        #[arg(long)]
        s: f64,
    },
    /// Tabulate the bifurcation curves and locate their crossing
    Curves {
        #[arg(long)]
        mu1: f64,
        #[arg(long)]
        mu2: f64,
    },
    /// Newton solve at fixed (lambda, beta)
    Solve {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        mu1: f64,
        #[arg(long)]
        mu2: f64,
        /// Initial guess: explicit | semitrivial | a CSV file with r,u,v
        #[arg(long, default_value = "explicit")]
        seed_from: String,
    },
    /// Trace a solution branch in lambda at fixed beta
    Continue {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        mu1: f64,
        #[arg(long)]
        mu2: f64,
        /// 1 | 2 | explicit
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 0.05)]
        lambda_min: f64,
        #[arg(long, default_value_t = 20.0)]
        lambda_max: f64,
    },
    /// Produce a solution with prescribed masses (a, b)
    Normalize {
        #[arg(long)]
        mu1: f64,
        #[arg(long)]
        mu2: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
    },
    /// Sweep a parameter plane and map existence evidence
    Regions {
        /// mass | frequency
        #[arg(long)]
        plane: String,
        #[arg(long)]
        mu1: f64,
        #[arg(long)]
        mu2: f64,
        #[arg(long)]
        beta: f64,
        /// Probes per cell (frequency plane)
        #[arg(long)]
        k: Option<usize>,
        /// Number of sweep points (defaults: 25 mass ratios, 40 frequencies)
        #[arg(long)]
        grid_points: Option<usize>,
    },
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    prov: Provenance,
}

impl Ctx {
    fn write(&self, name: &str, contents: &str) -> Result<(), Error> {
        let path = self.out.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
    }

    fn want(&self, f: OutputFormat) -> bool {
        self.cfg.wants(f)
    }

    fn groundstate_grid(&self) -> Result<Arc<RadialGrid>, Error> {
        make_grid(self.cfg.grid_r_max, self.cfg.grid_n)
    }

    fn coupled_grid(&self) -> Result<Arc<RadialGrid>, Error> {
        make_grid(self.cfg.coupled_r_max, self.cfg.coupled_n)
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Parameter(_) | Error::Config(_) => 2,
        Error::Solver(_)
        | Error::NonConvergence { .. }
        | Error::Classification { .. }
        | Error::Degeneracy(_)
        | Error::Accuracy(_) => 3,
        Error::Domain(_) | Error::Range { .. } => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.display().to_string();
    }
    if !cli.format.is_empty() {
        cfg.format = cli.format.clone();
    }
    let out = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", out.display())))?;
    let prov = Provenance::new(&cfg.hash(), cfg.seed);
    let ctx = Ctx { cfg, out, prov };
    // effective config echoed alongside every run's outputs
    ctx.write(
        "effective-config.txt",
        &format!("{}\n{}", ctx.prov.comment_line(), ctx.cfg.echo()),
    )?;
    match cli.cmd {
        Cmd::Groundstate => cmd_groundstate(&ctx),
        Cmd::Tau { s } => cmd_tau(&ctx, s),
        Cmd::Curves { mu1, mu2 } => cmd_curves(&ctx, mu1, mu2),
        Cmd::Solve { lambda, beta, mu1, mu2, seed_from } => {
            cmd_solve(&ctx, lambda, beta, mu1, mu2, &seed_from)
        }
        Cmd::Continue { beta, mu1, mu2, family, lambda_min, lambda_max } => {
            cmd_continue(&ctx, beta, mu1, mu2, &family, (lambda_min, lambda_max))
        }
        Cmd::Normalize { mu1, mu2, beta, a, b } => cmd_normalize(&ctx, mu1, mu2, beta, a, b),
        Cmd::Regions { plane, mu1, mu2, beta, k, grid_points } => {
            cmd_regions(&ctx, &plane, mu1, mu2, beta, k, grid_points)
        }
    }
}

// ---- groundstate ---------------------------------------------------------

#[derive(Serialize)]
struct GroundstateRecord {
    provenance: Provenance,
    r_max: f64,
    n: usize,
    central_value: f64,
    sobolev_s: f64,
    mass: f64,
    l4: f64,
    residual_inf: f64,
}

fn cmd_groundstate(ctx: &Ctx) -> Result<(), Error> {
    let grid = ctx.groundstate_grid()?;
    let gs = groundstate::solve_scalar_ground_state(&grid)?;
    if ctx.want(OutputFormat::Json) {
        let rec = GroundstateRecord {
            provenance: ctx.prov.clone(),
            r_max: grid.r_max(),
            n: grid.len(),
            central_value: gs.central_value(),
            sobolev_s: gs.sobolev_s(),
            mass: gs.mass(),
            l4: gs.l4(),
            residual_inf: gs.residual_inf(),
        };
        ctx.write("groundstate.json", &emit::to_json(&rec))?;
    }
    if ctx.want(OutputFormat::Csv) {
        let csv = emit::profile_csv(
            &[("r", grid.nodes()), ("U", gs.field().values())],
            &ctx.prov,
        );
        ctx.write("groundstate_profile.csv", &csv)?;
    }
    println!(
        "ground state: U(0) = {:.10}, S = {:.10}, mass = {:.10}, residual = {:.3e}",
        gs.central_value(),
        gs.sobolev_s(),
        gs.mass(),
        gs.residual_inf()
    );
    Ok(())
}

// ---- tau -----------------------------------------------------------------

#[derive(Serialize)]
struct TauRecord {
    provenance: Provenance,
    s: f64,
    tau: f64,
    residual: f64,
    iterations: usize,
}

fn cmd_tau(ctx: &Ctx, s: f64) -> Result<(), Error> {
    let grid = ctx.groundstate_grid()?;
    let gs = groundstate::solve_scalar_ground_state(&grid)?;
    let res = spectral::tau_on_auto_grid(s, &gs)?;
    if ctx.want(OutputFormat::Json) {
        let rec = TauRecord {
            provenance: ctx.prov.clone(),
            s,
            tau: res.tau,
            residual: res.residual,
            iterations: res.iterations,
        };
        ctx.write("tau.json", &emit::to_json(&rec))?;
    }
    if ctx.want(OutputFormat::Csv) {
        let csv = emit::profile_csv(
            &[("r", res.phi.grid().nodes()), ("phi", res.phi.values())],
            &ctx.prov,
        );
        ctx.write("tau_profile.csv", &csv)?;
    }
    println!("tau({s}) = {:.12} (residual {:.3e})", res.tau, res.residual);
    Ok(())
}

// ---- curves ----------------------------------------------------------------

#[derive(Serialize)]
struct CurvesRecord {
    provenance: Provenance,
    mu1: f64,
    mu2: f64,
    tau0: f64,
    tau0_error: f64,
    tau0_rate: f64,
    lambda_star: f64,
    beta_star: f64,
}

fn cmd_curves(ctx: &Ctx, mu1: f64, mu2: f64) -> Result<(), Error> {
    let grid = ctx.groundstate_grid()?;
    let gs = groundstate::solve_scalar_ground_state(&grid)?;
    let cp = spectral::curves(&gs, mu1, mu2, &spectral::default_lambda_grid())?;
    if let Some(w) = &cp.tau0.warning {
        eprintln!("warning: {w}");
    }
    if ctx.want(OutputFormat::Json) {
        let rec = CurvesRecord {
            provenance: ctx.prov.clone(),
            mu1,
            mu2,
            tau0: cp.tau0.value,
            tau0_error: cp.tau0.error_estimate,
            tau0_rate: cp.tau0.rate,
            lambda_star: cp.lambda_star,
            beta_star: cp.beta_star,
        };
        ctx.write("curves.json", &emit::to_json(&rec))?;
    }
    if ctx.want(OutputFormat::Csv) {
        let csv = emit::profile_csv(
            &[("lambda", &cp.lambdas), ("beta1", &cp.beta1), ("beta2", &cp.beta2)],
            &ctx.prov,
        );
        ctx.write("curves.csv", &csv)?;
    }
    if ctx.want(OutputFormat::Svg) {
        ctx.write("curves.svg", &emit::curves_svg(&cp, &ctx.prov))?;
    }
    println!(
        "tau0 = {:.8} (+- {:.2e}), crossing at lambda* = {:.8}, beta* = {:.8}",
        cp.tau0.value, cp.tau0.error_estimate, cp.lambda_star, cp.beta_star
    );
    Ok(())
}

// ---- solve -----------------------------------------------------------------

#[derive(Serialize)]
struct SolveRecord {
    provenance: Provenance,
    lambda: f64,
    beta: f64,
    mu1: f64,
    mu2: f64,
    classification: String,
    mass_u: f64,
    mass_v: f64,
    rho: f64,
    l4_u4: f64,
    l4_v4: f64,
    cross: f64,
    residual_inf: f64,
    pohozaev_rel: f64,
    energy_defect_u: f64,
    energy_defect_v: f64,
}

fn read_profile_csv(path: &Path, grid: &Arc<RadialGrid>) -> Result<(RadialField, RadialField), Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut r = Vec::new();
    let mut u = Vec::new();
    let mut v = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('r') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 3 {
            return Err(Error::Config(format!("profile row needs r,u,v columns: '{line}'")));
        }
        let p = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number '{s}' in profile")))
        };
        r.push(p(cols[0])?);
        u.push(p(cols[1])?);
        v.push(p(cols[2])?);
    }
    if r.len() < 4 {
        return Err(Error::Config("profile file holds fewer than 4 samples".into()));
    }
    let iu = MonotoneCubic::new(r.clone(), u)?;
    let iv = MonotoneCubic::new(r, v)?;
    let uf = RadialField::from_fn(grid.clone(), |x| iu.eval(x))?;
    let vf = RadialField::from_fn(grid.clone(), |x| iv.eval(x))?;
    Ok((uf, vf))
}

fn cmd_solve(
    ctx: &Ctx,
    lambda: f64,
    beta: f64,
    mu1: f64,
    mu2: f64,
    seed_from: &str,
) -> Result<(), Error> {
    let grid = ctx.coupled_grid()?;
    let gs = groundstate::solve_scalar_ground_state(&grid)?;
    let guess = match seed_from {
        "explicit" => {
            let ex = coupled::explicit_solution_lambda1(&gs, mu1, mu2, beta)?;
            CoupledState::new(lambda, beta, mu1, mu2, ex.u().clone(), ex.v().clone())?
        }
        "semitrivial" => {
            let v = groundstate::semitrivial_profile(&gs, 1.0, mu2)?;
            CoupledState::new(lambda, beta, mu1, mu2, RadialField::zeros(grid.clone()), v)?
        }
        path => {
            let (u, v) = read_profile_csv(Path::new(path), &grid)?;
            CoupledState::new(lambda, beta, mu1, mu2, u, v)?
        }
    };
    let state = coupled::newton_solve(&guess, lambda, beta, &ctx.cfg.newton_opts())?;
    emit_solution(ctx, &state, "solve")?;
    let d = state.diagnostics();
    println!(
        "solved: class = {}, rho = {:.8}, masses = ({:.8}, {:.8}), residual = {:.3e}",
        state.classify(),
        d.rho,
        d.mass_u,
        d.mass_v,
        d.residual_inf
    );
    Ok(())
}

fn emit_solution(ctx: &Ctx, state: &CoupledState, stem: &str) -> Result<(), Error> {
    if ctx.want(OutputFormat::Json) {
        let d = state.diagnostics();
        let (eu, ev) = coupled::energy_identity_defects(state);
        let rec = SolveRecord {
            provenance: ctx.prov.clone(),
            lambda: state.lambda(),
            beta: state.beta(),
            mu1: state.mu1(),
            mu2: state.mu2(),
            classification: state.classify().to_string(),
            mass_u: d.mass_u,
            mass_v: d.mass_v,
            rho: d.rho.clamp(1e-9, 1e9),
            l4_u4: d.l4_u4,
            l4_v4: d.l4_v4,
            cross: d.cross,
            residual_inf: d.residual_inf,
            pohozaev_rel: d.pohozaev_rel,
            energy_defect_u: eu,
            energy_defect_v: ev,
        };
        ctx.write(&format!("{stem}.json"), &emit::to_json(&rec))?;
    }
    if ctx.want(OutputFormat::Csv) {
        let csv = emit::profile_csv(
            &[
                ("r", state.grid().nodes()),
                ("u", state.u().values()),
                ("v", state.v().values()),
            ],
            &ctx.prov,
        );
        ctx.write(&format!("{stem}_profile.csv"), &csv)?;
    }
    Ok(())
}

// ---- continue --------------------------------------------------------------

#[derive(Serialize)]
struct BranchRecord {
    provenance: Provenance,
    beta: f64,
    mu1: f64,
    mu2: f64,
    origin: String,
    termination: String,
    termination_backward: Option<String>,
    points: usize,
    lambda_min: f64,
    lambda_max: f64,
    rho_min: f64,
    rho_max: f64,
    folds: usize,
}

fn origin_label(o: &BranchOrigin) -> String {
    match o {
        BranchOrigin::Bifurcation(fam, l) => format!("family-{fam} at lambda = {l:.9e}"),
        BranchOrigin::Interior(l) => format!("interior seed at lambda = {l:.9e}"),
    }
}

fn termination_label(t: &Termination) -> String {
    match t {
        Termination::LambdaMin => "lambda-min reached".into(),
        Termination::LambdaMax => "lambda-max reached".into(),
        Termination::Connected(fam, l) => {
            format!("connected to family {fam} near lambda = {l:.9e}")
        }
        Termination::FoldLimit => "fold limit".into(),
        Termination::SolverFailure(m) => format!("solver failure: {m}"),
        Termination::MaxSteps => "max steps".into(),
        Termination::RhoCovered => "mass-ratio window covered".into(),
    }
}

/// Glue a backward and a forward trace from the same interior seed into one
/// branch ordered by arclength.
fn merge_bidirectional(back: Branch, fwd: Branch) -> (Branch, Termination) {
    let back_term = back.termination.clone();
    let total_back = back.points.last().map(|p| p.arclength).unwrap_or(0.0);
    let mut points = Vec::with_capacity(back.points.len() + fwd.points.len());
    for p in back.points.into_iter().skip(1).rev() {
        let mut q = p;
        q.arclength = total_back - q.arclength;
        q.tangent_lambda = -q.tangent_lambda;
        points.push(q);
    }
    for p in fwd.points.into_iter() {
        let mut q = p;
        q.arclength += total_back;
        points.push(q);
    }
    let branch = Branch {
        beta: fwd.beta,
        mu1: fwd.mu1,
        mu2: fwd.mu2,
        origin: fwd.origin,
        points,
        termination: fwd.termination,
        folds: Vec::new(),
        scale_u: fwd.scale_u,
        scale_v: fwd.scale_v,
    };
    (branch, back_term)
}

fn cmd_continue(
    ctx: &Ctx,
    beta: f64,
    mu1: f64,
    mu2: f64,
    family: &str,
    window: (f64, f64),
) -> Result<(), Error> {
    let grid = ctx.coupled_grid()?;
    let gs = groundstate::solve_scalar_ground_state(&grid)?;
    let opts = TraceOpts { step: ctx.cfg.step_opts(), ..Default::default() };
    let (branch, back_term) = match family {
        "1" | "2" => {
            let fam = if family == "1" { Family::One } else { Family::Two };
            let cp = spectral::curves(&gs, mu1, mu2, &spectral::log_spaced(1e-2, 1e2, 25))?;
            let seed =
                continuation::seed_branch(&gs, &cp, fam, beta, ctx.cfg.seed_eps, &ctx.cfg.newton_opts())?;
            let origin = BranchOrigin::Bifurcation(fam, seed.state.lambda());
            (continuation::trace_branch(&seed, origin, window, true, &opts)?, None)
        }
        "explicit" => {
            let ex = coupled::explicit_solution_lambda1(&gs, mu1, mu2, beta)?;
            let seed = continuation::seed_from_state(ex);
            let origin = BranchOrigin::Interior(1.0);
            let fwd = continuation::trace_branch(&seed, origin, window, true, &opts)?;
            let back = continuation::trace_branch(&seed, origin, window, false, &opts)?;
            let (merged, bt) = merge_bidirectional(back, fwd);
            (merged, Some(bt))
        }
        other => {
            return Err(Error::Parameter(format!(
                "unknown family '{other}' (expected 1, 2, or explicit)"
            )))
        }
    };
    if ctx.want(OutputFormat::Csv) {
        ctx.write("branch.csv", &emit::branch_csv(&branch, &ctx.prov))?;
    }
    if ctx.want(OutputFormat::Json) {
        let (lmin, lmax) = branch.lambda_range();
        let (rmin, rmax) = branch.rho_range();
        let rec = BranchRecord {
            provenance: ctx.prov.clone(),
            beta,
            mu1,
            mu2,
            origin: origin_label(&branch.origin),
            termination: termination_label(&branch.termination),
            termination_backward: back_term.as_ref().map(termination_label),
            points: branch.points.len(),
            lambda_min: lmin,
            lambda_max: lmax,
            rho_min: rmin.clamp(1e-9, 1e9),
            rho_max: rmax.clamp(1e-9, 1e9),
            folds: branch.folds.len(),
        };
        ctx.write("branch.json", &emit::to_json(&rec))?;
    }
    if ctx.want(OutputFormat::Svg) {
        let profile = continuation::ratio_profile(&branch);
        ctx.write("branch_rho.svg", &emit::rho_profile_svg(&profile, &ctx.prov))?;
    }
    println!(
        "branch: {} points, lambda in [{:.6e}, {:.6e}], {}",
        branch.points.len(),
        branch.lambda_range().0,
        branch.lambda_range().1,
        termination_label(&branch.termination)
    );
    Ok(())
}

// ---- normalize --------------------------------------------------------------

fn cmd_normalize(ctx: &Ctx, mu1: f64, mu2: f64, beta: f64, a: f64, b: f64) -> Result<(), Error> {
    let grid = ctx.coupled_grid()?;
    let gs = groundstate::solve_scalar_ground_state(&grid)?;
    let cp = spectral::curves(&gs, mu1, mu2, &spectral::log_spaced(1e-2, 1e2, 25))?;
    let opts = PipelineOpts { ..ctx.cfg.pipeline_opts() };
    let out = continuation::normalized_pipeline(&gs, &cp, beta, a, b, &opts)?;
    let ns = &out.solution;
    if ctx.want(OutputFormat::Json) {
        let rec = emit::NormalizedRecord::new(ns, out.strategy.to_string(), ctx.prov.clone());
        ctx.write("normalized.json", &emit::to_json(&rec))?;
    }
    if ctx.want(OutputFormat::Csv) {
        let csv = emit::profile_csv(
            &[("r", ns.u.grid().nodes()), ("u", ns.u.values()), ("v", ns.v.values())],
            &ctx.prov,
        );
        ctx.write("normalized_profile.csv", &csv)?;
    }
    println!(
        "normalized solution: lambda1 = {:.10e}, lambda2 = {:.10e}, masses = ({:.8}, {:.8}), \
         residual = {:.3e} (scale {:.3e}), via {} branch",
        ns.lambda1,
        ns.lambda2,
        cnls_core::l2_norm(&ns.u),
        cnls_core::l2_norm(&ns.v),
        ns.residual_inf,
        ns.residual_scale,
        out.strategy
    );
    Ok(())
}

// ---- regions ------------------------------------------------------------------

#[derive(Serialize)]
struct ProbeRecordOut {
    index: usize,
    seed: u64,
    outcome: String,
}

#[derive(Serialize)]
struct CellRecord {
    coordinate: f64,
    verdict: String,
    lambda: Option<f64>,
    mass_u: Option<f64>,
    mass_v: Option<f64>,
    residual_inf: Option<f64>,
    pohozaev_rel: Option<f64>,
    note: Option<String>,
    probes: Option<Vec<ProbeRecordOut>>,
}

#[derive(Serialize)]
struct RegionsRecord {
    provenance: Provenance,
    plane: String,
    mu1: f64,
    mu2: f64,
    beta: f64,
    cells: Vec<CellRecord>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_regions(
    ctx: &Ctx,
    plane: &str,
    mu1: f64,
    mu2: f64,
    beta: f64,
    k: Option<usize>,
    grid_points: Option<usize>,
) -> Result<(), Error> {
    if grid_points.is_some_and(|g| g < 1) {
        return Err(Error::Parameter("grid_points must be at least 1".into()));
    }
    let (cells, coordinate_name) = match plane {
        "mass" => {
            let grid = ctx.coupled_grid()?;
            let gs = groundstate::solve_scalar_ground_state(&grid)?;
            let cp = spectral::curves(&gs, mu1, mu2, &spectral::log_spaced(1e-2, 1e2, 25))?;
            let ratios = match grid_points {
                Some(1) => vec![1.0],
                Some(g) => spectral::log_spaced(1e-3, 1e3, g),
                None => region::default_ratio_grid(),
            };
            let cells =
                region::map_mass_plane(&gs, &cp, beta, &ratios, &ctx.cfg.pipeline_opts())?;
            (cells, "mass_ratio")
        }
        "frequency" => {
            let grid = ctx.groundstate_grid()?;
            let gs = groundstate::solve_scalar_ground_state(&grid)?;
            let lambdas = match grid_points {
                Some(1) => vec![1.0],
                Some(g) => spectral::log_spaced(1e-4, 1e4, g),
                None => region::default_lambda_probe_grid(),
            };
            let cells = region::map_frequency_plane(
                &gs,
                mu1,
                mu2,
                beta,
                &lambdas,
                k.unwrap_or(ctx.cfg.probe_k),
                ctx.cfg.seed,
                &ctx.cfg.newton_opts(),
            )?;
            (cells, "lambda")
        }
        other => {
            return Err(Error::Parameter(format!(
                "unknown plane '{other}' (expected mass or frequency)"
            )))
        }
    };
    if ctx.want(OutputFormat::Csv) {
        ctx.write("regions.csv", &emit::regions_csv(&cells, coordinate_name, &ctx.prov))?;
    }
    if ctx.want(OutputFormat::Svg) {
        ctx.write("regions.svg", &emit::regions_svg(&cells, coordinate_name, &ctx.prov))?;
    }
    if ctx.want(OutputFormat::Json) {
        let recs: Vec<CellRecord> = cells
            .iter()
            .map(|c| match &c.evidence {
                Evidence::Solution(s) => CellRecord {
                    coordinate: c.coordinate,
                    verdict: c.verdict.to_string(),
                    lambda: Some(s.lambda),
                    mass_u: Some(s.mass_u),
                    mass_v: Some(s.mass_v),
                    residual_inf: Some(s.residual_inf),
                    pohozaev_rel: Some(s.pohozaev_rel),
                    note: None,
                    probes: None,
                },
                Evidence::Probes { records, note, .. } => CellRecord {
                    coordinate: c.coordinate,
                    verdict: c.verdict.to_string(),
                    lambda: None,
                    mass_u: None,
                    mass_v: None,
                    residual_inf: None,
                    pohozaev_rel: None,
                    note: Some(note.clone()),
                    probes: Some(
                        records
                            .iter()
                            .map(|r| ProbeRecordOut {
                                index: r.index,
                                seed: r.seed,
                                outcome: format!("{:?}", r.outcome),
                            })
                            .collect(),
                    ),
                },
            })
            .collect();
        let rec = RegionsRecord {
            provenance: ctx.prov.clone(),
            plane: plane.to_string(),
            mu1,
            mu2,
            beta,
            cells: recs,
        };
        ctx.write("regions.json", &emit::to_json(&rec))?;
    }
    let found = cells
        .iter()
        .filter(|c| c.verdict == region::Verdict::SolutionFound)
        .count();
    println!("regions: {found}/{} cells with solution evidence", cells.len());
    Ok(())
}
