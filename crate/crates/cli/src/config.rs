//! Run configuration: a strict key = value format with `#` comments.
//! Unknown keys and out-of-range values are rejected with line numbers, and
//! the effective configuration is echoed next to every run's outputs.

use cnls_core::continuation::{PipelineOpts, StepOpts};
use cnls_core::coupled::NewtonOpts;
use cnls_core::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // grids per solver class
    pub grid_r_max: f64,
    pub grid_n: usize,
    pub coupled_r_max: f64,
    pub coupled_n: usize,
    // tolerances
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub eig_tol: f64,
    pub ratio_tol: f64,
    // continuation step control
    pub step_ds0: f64,
    pub step_ds_min: f64,
    pub step_ds_max: f64,
    pub step_grow: f64,
    pub step_shrink: f64,
    pub max_steps: usize,
    pub seed_eps: f64,
    // probing
    pub probe_k: usize,
    // reproducibility and output
    pub seed: u64,
    pub out_dir: String,
    pub format: Vec<OutputFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
    Svg,
}

impl std::fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OutputFormat::Csv => write!(f, "csv"),
            OutputFormat::Json => write!(f, "json"),
            OutputFormat::Svg => write!(f, "svg"),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid_r_max: 20.0,
            grid_n: 2000,
            coupled_r_max: 26.0,
            coupled_n: 42000,
            newton_tol: 1e-9,
            newton_max_iter: 25,
            eig_tol: 1e-8,
            ratio_tol: 1e-8,
            step_ds0: 0.05,
            step_ds_min: 1e-7,
            step_ds_max: 0.5,
            step_grow: 1.3,
            step_shrink: 0.5,
            max_steps: 600,
            seed_eps: 1e-2,
            probe_k: 50,
            seed: 0,
            out_dir: ".".into(),
            format: vec![OutputFormat::Csv, OutputFormat::Json, OutputFormat::Svg],
        }
    }
}

impl RunConfig {
    pub fn newton_opts(&self) -> NewtonOpts {
        NewtonOpts {
            tol: self.newton_tol,
            max_iter: self.newton_max_iter,
            max_backtrack: 30,
        }
    }

    pub fn step_opts(&self) -> StepOpts {
        StepOpts {
            ds0: self.step_ds0,
            ds_min: self.step_ds_min,
            ds_max: self.step_ds_max,
            grow: self.step_grow,
            shrink: self.step_shrink,
            max_steps: self.max_steps,
            newton: NewtonOpts { max_iter: 14, ..self.newton_opts() },
            ..StepOpts::default()
        }
    }

    pub fn pipeline_opts(&self) -> PipelineOpts {
        PipelineOpts {
            seed_eps: self.seed_eps,
            step: self.step_opts(),
            ratio_tol: self.ratio_tol,
            ..PipelineOpts::default()
        }
    }

    pub fn wants(&self, f: OutputFormat) -> bool {
        self.format.contains(&f)
    }

    /// Canonical echo, one key per line in fixed order. Floats carry 17
    /// significant digits so the echo reproduces the run exactly.
    pub fn echo(&self) -> String {
        let f = |x: f64| format!("{x:.16e}");
        let formats: Vec<String> = self.format.iter().map(|x| x.to_string()).collect();
        format!(
            "grid_r_max = {}\ngrid_n = {}\ncoupled_r_max = {}\ncoupled_n = {}\n\
             newton_tol = {}\nnewton_max_iter = {}\neig_tol = {}\nratio_tol = {}\n\
             step_ds0 = {}\nstep_ds_min = {}\nstep_ds_max = {}\nstep_grow = {}\n\
             step_shrink = {}\nmax_steps = {}\nseed_eps = {}\nprobe_k = {}\n\
             seed = {}\nout_dir = {}\nformat = {}\n",
            f(self.grid_r_max),
            self.grid_n,
            f(self.coupled_r_max),
            self.coupled_n,
            f(self.newton_tol),
            self.newton_max_iter,
            f(self.eig_tol),
            f(self.ratio_tol),
            f(self.step_ds0),
            f(self.step_ds_min),
            f(self.step_ds_max),
            f(self.step_grow),
            f(self.step_shrink),
            self.max_steps,
            f(self.seed_eps),
            self.probe_k,
            self.seed,
            self.out_dir,
            formats.join(",")
        )
    }

    /// FNV-1a hash of the canonical echo; stamped into every output file.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.echo().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

fn parse_err(line_no: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line_no}: {msg}"))
}

/// Strict parse of the key = value document; defaults fill missing keys.
pub fn parse_config(text: &str) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(line_no, "expected key = value"))?;
        let key = key.trim();
        let value = value.trim();
        let fnum = |v: &str| -> Result<f64, Error> {
            v.parse::<f64>()
                .map_err(|_| parse_err(line_no, format!("non-numeric value '{v}' for {key}")))
        };
        let unum = |v: &str| -> Result<usize, Error> {
            v.parse::<usize>()
                .map_err(|_| parse_err(line_no, format!("non-integer value '{v}' for {key}")))
        };
        let positive = |x: f64| -> Result<f64, Error> {
            if x > 0.0 && x.is_finite() {
                Ok(x)
            } else {
                Err(parse_err(line_no, format!("{key} must be positive, got {x}")))
            }
        };
        match key {
            "grid_r_max" => cfg.grid_r_max = positive(fnum(value)?)?,
            "grid_n" => cfg.grid_n = unum(value)?,
            "coupled_r_max" => cfg.coupled_r_max = positive(fnum(value)?)?,
            "coupled_n" => cfg.coupled_n = unum(value)?,
            "newton_tol" => cfg.newton_tol = positive(fnum(value)?)?,
            "newton_max_iter" => cfg.newton_max_iter = unum(value)?,
            "eig_tol" => cfg.eig_tol = positive(fnum(value)?)?,
            "ratio_tol" => cfg.ratio_tol = positive(fnum(value)?)?,
            "step_ds0" => cfg.step_ds0 = positive(fnum(value)?)?,
            "step_ds_min" => cfg.step_ds_min = positive(fnum(value)?)?,
            "step_ds_max" => cfg.step_ds_max = positive(fnum(value)?)?,
            "step_grow" => cfg.step_grow = positive(fnum(value)?)?,
            "step_shrink" => cfg.step_shrink = positive(fnum(value)?)?,
            "max_steps" => cfg.max_steps = unum(value)?,
            "seed_eps" => cfg.seed_eps = positive(fnum(value)?)?,
            "probe_k" => cfg.probe_k = unum(value)?,
            "seed" => {
                cfg.seed = value
                    .parse::<u64>()
                    .map_err(|_| parse_err(line_no, format!("non-integer seed '{value}'")))?
            }
            "out_dir" => cfg.out_dir = value.to_string(),
            "format" => {
                let mut fmts = Vec::new();
                for part in value.split(',') {
                    fmts.push(match part.trim() {
                        "csv" => OutputFormat::Csv,
                        "json" => OutputFormat::Json,
                        "svg" => OutputFormat::Svg,
                        other => {
                            return Err(parse_err(line_no, format!("unknown format '{other}'")))
                        }
                    });
                }
                cfg.format = fmts;
            }
            other => return Err(parse_err(line_no, format!("unknown key '{other}'"))),
        }
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<(), Error> {
    let check = |ok: bool, msg: &str| -> Result<(), Error> {
        if ok {
            Ok(())
        } else {
            Err(Error::Config(msg.to_string()))
        }
    };
    check(cfg.grid_n >= 16, "grid_n must be at least 16")?;
    check(cfg.coupled_n >= 16, "coupled_n must be at least 16")?;
    check(cfg.newton_max_iter >= 1, "newton_max_iter must be at least 1")?;
    check(cfg.max_steps >= 1, "max_steps must be at least 1")?;
    check(cfg.probe_k >= 1, "probe_k must be at least 1")?;
    check(cfg.step_ds_min <= cfg.step_ds_max, "step_ds_min must not exceed step_ds_max")?;
    check(cfg.step_grow >= 1.0, "step_grow must be at least 1")?;
    check(cfg.step_shrink < 1.0, "step_shrink must be below 1")?;
    check(cfg.seed_eps <= 0.5, "seed_eps must be at most 0.5")?;
    check(!cfg.format.is_empty(), "format list must not be empty")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let cfg = parse_config("# just a comment\n\n").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn negative_tolerance_is_rejected_with_line() {
        let err = parse_config("newton_tol = -1\n").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("line 1"), "{msg}");
        assert!(msg.contains("positive"), "{msg}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = parse_config("grid_n = 2000\nnewton_tolerance = 1e-9\n").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("line 2") && msg.contains("unknown key"), "{msg}");
    }

    #[test]
    fn override_propagates_and_echoes() {
        let cfg = parse_config("grid_r_max = 40 # wider domain\n").unwrap();
        assert_eq!(cfg.grid_r_max, 40.0);
        assert!(cfg.echo().contains("grid_r_max = 4.0000000000000000e1"));
    }

    #[test]
    fn bounds_are_enforced() {
        assert!(parse_config("grid_n = 8\n").is_err());
        assert!(parse_config("probe_k = 0\n").is_err());
        assert!(parse_config("step_grow = 0.9\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default().hash();
        let b = parse_config("seed = 1\n").unwrap().hash();
        assert_ne!(a, b);
        assert_eq!(a, RunConfig::default().hash());
    }
}
