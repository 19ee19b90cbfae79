//! Output emission: CSV with a fixed header, JSON with 17-significant-digit
//! floats and stable key order, and deterministic SVG plots. Every file
//! begins with a provenance stamp (tool version, config hash, seed) so a run
//! can be reproduced from its outputs alone.

use std::io;

use cnls_core::continuation::{Branch, NormalizedSolution};
use cnls_core::spectral::CurvePair;
use cnls_core::region::{Evidence, RegionCell};
use serde::Serialize;

pub const TOOL: &str = concat!("cnls ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_hash: &str, seed: u64) -> Self {
        Provenance { tool: TOOL.to_string(), config_hash: config_hash.to_string(), seed }
    }

    pub fn comment_line(&self) -> String {
        format!("# {} config={} seed={}", self.tool, self.config_hash, self.seed)
    }
}

/// 17 significant digits: round-trips every f64 bit-exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

struct F17Formatter;

impl serde_json::ser::Formatter for F17Formatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize any record with stable key order (struct field order) and
/// 17-significant-digit floats.
pub fn to_json(value: &impl Serialize) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, F17Formatter);
    value.serialize(&mut ser).expect("JSON serialization cannot fail for plain records");
    let mut s = String::from_utf8(out).expect("JSON output is UTF-8");
    s.push('\n');
    s
}

pub const BRANCH_CSV_HEADER: &str =
    "lambda,arclength,mass_u,mass_v,rho,residual_inf,pohozaev_rel";

/// Branch CSV: provenance line, fixed header, one row per point with the
/// mass ratio capped to [1e-9, 1e9].
pub fn branch_csv(branch: &Branch, prov: &Provenance) -> String {
    let mut out = String::new();
    out.push_str(&prov.comment_line());
    out.push('\n');
    out.push_str(BRANCH_CSV_HEADER);
    out.push('\n');
    for p in &branch.points {
        let d = p.state.diagnostics();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_f64(p.state.lambda()),
            fmt_f64(p.arclength),
            fmt_f64(d.mass_u),
            fmt_f64(d.mass_v),
            fmt_f64(d.rho.clamp(1e-9, 1e9)),
            fmt_f64(d.residual_inf),
            fmt_f64(d.pohozaev_rel),
        ));
    }
    out
}

/// Profile CSV with arbitrary named columns of equal length.
pub fn profile_csv(columns: &[(&str, &[f64])], prov: &Provenance) -> String {
    let mut out = String::new();
    out.push_str(&prov.comment_line());
    out.push('\n');
    let names: Vec<&str> = columns.iter().map(|(n, _)| *n).collect();
    out.push_str(&names.join(","));
    out.push('\n');
    if columns.is_empty() {
        return out;
    }
    let rows = columns[0].1.len();
    for i in 0..rows {
        let vals: Vec<String> = columns.iter().map(|(_, c)| fmt_f64(c[i])).collect();
        out.push_str(&vals.join(","));
        out.push('\n');
    }
    out
}

pub fn regions_csv(cells: &[RegionCell], coordinate_name: &str, prov: &Provenance) -> String {
    let mut out = String::new();
    out.push_str(&prov.comment_line());
    out.push('\n');
    out.push_str(&format!(
        "{coordinate_name},verdict,lambda,mass_u,mass_v,residual_inf,pohozaev_rel,note\n"
    ));
    for c in cells {
        match &c.evidence {
            Evidence::Solution(s) => out.push_str(&format!(
                "{},{},{},{},{},{},{},\n",
                fmt_f64(c.coordinate),
                c.verdict,
                fmt_f64(s.lambda),
                fmt_f64(s.mass_u),
                fmt_f64(s.mass_v),
                fmt_f64(s.residual_inf),
                fmt_f64(s.pohozaev_rel),
            )),
            Evidence::Probes { attempted, note, .. } => out.push_str(&format!(
                "{},{},,,,,,\"{} ({} probes)\"\n",
                fmt_f64(c.coordinate),
                c.verdict,
                note.replace('"', "'"),
                attempted,
            )),
        }
    }
    out
}

// ---- SVG ----------------------------------------------------------------

const W: f64 = 720.0;
const H: f64 = 480.0;
const MARGIN: f64 = 64.0;

fn px(x: f64) -> String {
    format!("{x:.3}")
}

struct LogAxes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl LogAxes {
    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let fx = (x.log10() - self.x0) / (self.x1 - self.x0);
        let fy = (y.log10() - self.y0) / (self.y1 - self.y0);
        (MARGIN + fx * (W - 2.0 * MARGIN), H - MARGIN - fy * (H - 2.0 * MARGIN))
    }

    fn decade_ticks(lo: f64, hi: f64) -> Vec<i32> {
        let a = lo.ceil() as i32;
        let b = hi.floor() as i32;
        (a..=b).collect()
    }
}

fn svg_open(prov: &Provenance, title: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<!-- {} config={} seed={} -->\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<title>{title}</title>\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n",
        prov.tool, prov.config_hash, prov.seed
    )
}

fn svg_axes(axes: &LogAxes, xlabel: &str, ylabel: &str) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        px(MARGIN),
        px(MARGIN),
        px(W - 2.0 * MARGIN),
        px(H - 2.0 * MARGIN)
    ));
    for t in LogAxes::decade_ticks(axes.x0, axes.x1) {
        let (x, _) = axes.map(10f64.powi(t), 10f64.powf(axes.y0));
        s.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n\
             <text x=\"{0}\" y=\"{3}\" text-anchor=\"middle\" font-size=\"12\">1e{4}</text>\n",
            px(x),
            px(H - MARGIN),
            px(H - MARGIN + 6.0),
            px(H - MARGIN + 22.0),
            t
        ));
    }
    for t in LogAxes::decade_ticks(axes.y0, axes.y1) {
        let (_, y) = axes.map(10f64.powf(axes.x0), 10f64.powi(t));
        s.push_str(&format!(
            "<line x1=\"{1}\" y1=\"{0}\" x2=\"{2}\" y2=\"{0}\" stroke=\"black\"/>\n\
             <text x=\"{3}\" y=\"{0}\" text-anchor=\"end\" font-size=\"12\">1e{4}</text>\n",
            px(y),
            px(MARGIN - 6.0),
            px(MARGIN),
            px(MARGIN - 10.0),
            t
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\">{xlabel}</text>\n",
        px(W / 2.0),
        px(H - 16.0)
    ));
    s.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\" \
         transform=\"rotate(-90 18 {})\">{ylabel}</text>\n",
        px(H / 2.0),
        px(H / 2.0)
    ));
    s
}

fn polyline(axes: &LogAxes, pts: impl Iterator<Item = (f64, f64)>, color: &str, dash: &str) -> String {
    let coords: Vec<String> = pts
        .filter(|&(x, y)| x > 0.0 && y > 0.0)
        .map(|(x, y)| {
            let (cx, cy) = axes.map(x, y);
            format!("{},{}", px(cx), px(cy))
        })
        .collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\"{} points=\"{}\"/>\n",
        if dash.is_empty() { String::new() } else { format!(" stroke-dasharray=\"{dash}\"") },
        coords.join(" ")
    )
}

/// Bifurcation-curve figure: β₁ decreasing, β₂ increasing on log-log axes,
/// dashed guides at the μᵢτ₀ asymptotes, and a marker at the crossing.
pub fn curves_svg(cp: &CurvePair, prov: &Provenance) -> String {
    let xs = &cp.lambdas;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for v in cp.beta1.iter().chain(cp.beta2.iter()) {
        ymin = ymin.min(*v);
        ymax = ymax.max(*v);
    }
    ymin = ymin.min(cp.asymptote(cnls_core::spectral::Family::One))
        .min(cp.asymptote(cnls_core::spectral::Family::Two));
    let axes = LogAxes {
        x0: xs[0].log10(),
        x1: xs[xs.len() - 1].log10(),
        y0: ymin.log10() - 0.05,
        y1: ymax.log10() + 0.05,
    };
    let mut s = svg_open(prov, "bifurcation curves");
    s.push_str(&svg_axes(&axes, "lambda", "beta"));
    s.push_str(&polyline(
        &axes,
        xs.iter().copied().zip(cp.beta1.iter().copied()),
        "#1f77b4",
        "",
    ));
    s.push_str(&polyline(
        &axes,
        xs.iter().copied().zip(cp.beta2.iter().copied()),
        "#d62728",
        "",
    ));
    for (mu_tau0, color) in [
        (cp.asymptote(cnls_core::spectral::Family::One), "#1f77b4"),
        (cp.asymptote(cnls_core::spectral::Family::Two), "#d62728"),
    ] {
        s.push_str(&polyline(
            &axes,
            [(xs[0], mu_tau0), (xs[xs.len() - 1], mu_tau0)].into_iter(),
            color,
            "6 4",
        ));
    }
    let (cx, cy) = axes.map(cp.lambda_star, cp.beta_star);
    s.push_str(&format!(
        "<circle cx=\"{}\" cy=\"{}\" r=\"5\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>\n",
        px(cx),
        px(cy)
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">lambda* = {:.6}</text>\n",
        px(cx + 8.0),
        px(cy - 8.0),
        cp.lambda_star
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#1f77b4\">beta_1</text>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#d62728\">beta_2</text>\n",
        px(MARGIN + 10.0),
        px(MARGIN + 18.0),
        px(MARGIN + 10.0),
        px(MARGIN + 34.0)
    ));
    s.push_str("</svg>\n");
    s
}

/// Mass-ratio profile ρ(λ) along a branch, log-log, with the ρ = 1 guide.
pub fn rho_profile_svg(profile: &[(f64, f64)], prov: &Provenance) -> String {
    let mut s = svg_open(prov, "mass ratio along the branch");
    if profile.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let (mut x0, mut x1, mut y0, mut y1) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(l, r) in profile {
        x0 = x0.min(l);
        x1 = x1.max(l);
        y0 = y0.min(r);
        y1 = y1.max(r);
    }
    let axes = LogAxes {
        x0: x0.log10() - 0.02,
        x1: x1.log10() + 0.02,
        y0: y0.log10() - 0.05,
        y1: y1.log10() + 0.05,
    };
    s.push_str(&svg_axes(&axes, "lambda", "rho = |u|_2 / |v|_2"));
    if y0 < 1.0 && y1 > 1.0 {
        s.push_str(&polyline(&axes, [(x0, 1.0), (x1, 1.0)].into_iter(), "#888888", "6 4"));
    }
    s.push_str(&polyline(&axes, profile.iter().copied(), "#2ca02c", ""));
    s.push_str("</svg>\n");
    s
}

/// Verdict heat strip over a log coordinate axis.
pub fn regions_svg(cells: &[RegionCell], coordinate_name: &str, prov: &Provenance) -> String {
    let mut s = svg_open(prov, "existence evidence map");
    if cells.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let x0 = cells.iter().map(|c| c.coordinate).fold(f64::INFINITY, f64::min).log10();
    let x1 = cells
        .iter()
        .map(|c| c.coordinate)
        .fold(f64::NEG_INFINITY, f64::max)
        .log10();
    let span = (x1 - x0).max(1e-12);
    let strip_y = H / 2.0 - 40.0;
    for c in cells {
        let fx = (c.coordinate.log10() - x0) / span;
        let x = MARGIN + fx * (W - 2.0 * MARGIN);
        let color = match c.verdict {
            cnls_core::region::Verdict::SolutionFound => "#2ca02c",
            cnls_core::region::Verdict::NoSolutionEvidence => "#d62728",
            cnls_core::region::Verdict::SolverInconclusive => "#999999",
        };
        s.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"80\" fill=\"{color}\"/>\n",
            px(x - 5.0),
            px(strip_y)
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\">{coordinate_name} \
         (log scale, 1e{:.0} .. 1e{:.0})</text>\n",
        px(W / 2.0),
        px(strip_y + 120.0),
        x0,
        x1
    ));
    s.push_str(
        "<text x=\"64\" y=\"100\" font-size=\"12\" fill=\"#2ca02c\">solution-found</text>\n\
         <text x=\"64\" y=\"118\" font-size=\"12\" fill=\"#d62728\">no-solution-evidence</text>\n\
         <text x=\"64\" y=\"136\" font-size=\"12\" fill=\"#999999\">solver-inconclusive</text>\n",
    );
    s.push_str("</svg>\n");
    s
}

/// JSON record mirroring a NormalizedSolution (fields only, profile emitted
/// separately as CSV).
#[derive(Serialize)]
pub struct NormalizedRecord {
    pub provenance: Provenance,
    pub lambda1: f64,
    pub lambda2: f64,
    pub a: f64,
    pub b: f64,
    pub mass_u: f64,
    pub mass_v: f64,
    pub beta: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub source_lambda: f64,
    pub residual_inf: f64,
    pub residual_scale: f64,
    pub pohozaev_rel: f64,
    pub strategy: String,
}

impl NormalizedRecord {
    pub fn new(ns: &NormalizedSolution, strategy: String, prov: Provenance) -> Self {
        NormalizedRecord {
            provenance: prov,
            lambda1: ns.lambda1,
            lambda2: ns.lambda2,
            a: ns.a,
            b: ns.b,
            mass_u: cnls_core::l2_norm(&ns.u),
            mass_v: cnls_core::l2_norm(&ns.v),
            beta: ns.beta,
            mu1: ns.mu1,
            mu2: ns.mu2,
            source_lambda: ns.source_lambda,
            residual_inf: ns.residual_inf,
            residual_scale: ns.residual_scale,
            pohozaev_rel: ns.pohozaev_rel,
            strategy,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_bitwise() {
        #[derive(Serialize)]
        struct R {
            x: f64,
            y: f64,
            z: f64,
        }
        let r = R { x: 0.1 + 0.2, y: f64::MIN_POSITIVE, z: -1.2345678901234567e300 };
        let s = to_json(&r);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["x"].as_f64().unwrap().to_bits(), r.x.to_bits());
        assert_eq!(v["y"].as_f64().unwrap().to_bits(), r.y.to_bits());
        assert_eq!(v["z"].as_f64().unwrap().to_bits(), r.z.to_bits());
    }

    #[test]
    fn csv_floats_round_trip_bitwise() {
        for x in [std::f64::consts::PI, 1.0 / 3.0, 6.02e23, 1e-300] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn profile_csv_shape() {
        let prov = Provenance::new("deadbeef", 7);
        let r = [0.5, 1.5];
        let u = [2.0, 1.0];
        let s = profile_csv(&[("r", &r), ("U", &u)], &prov);
        let lines: Vec<&str> = s.lines().collect();
        assert!(lines[0].starts_with("# cnls"));
        assert_eq!(lines[1], "r,U");
        assert_eq!(lines.len(), 4);
    }
}
