//! Flat key=value run configuration.
//!
//! Grammar: one `key = value` pair per line, `#` starts a comment, blank
//! lines ignored. Unknown keys are errors (no silent typos) and every error
//! message carries the offending line number. All keys except `mode` have
//! documented defaults.

use std::path::{Path, PathBuf};

use crate::adaptive::AdaptiveConfig;
use crate::descent::BaselineConfig;
use crate::error::{Error, Result};
use crate::kacanov::ScheduleConfig;
use crate::relax::{Exponents, RelaxInterval};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Disk,
    Lshape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Schedule,
    FixedInterval,
    Adaptive,
    SteepestCompare,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Schedule => "schedule",
            Mode::FixedInterval => "fixed_interval",
            Mode::Adaptive => "adaptive",
            Mode::SteepestCompare => "steepest_compare",
        }
    }
}

impl Domain {
    pub fn label(self) -> &'static str {
        match self {
            Domain::Disk => "disk",
            Domain::Lshape => "lshape",
        }
    }
}

/// Fully resolved run parameters. Defaults are listed per field; `mode` is
/// the only required key.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// `domain`, default `disk`
    pub domain: Domain,
    /// `p`, default 2.0
    pub p: f64,
    /// `f` (constant right-hand side), default 1.0
    pub f: f64,
    /// `mode`, required
    pub mode: Mode,
    /// `mesh_resolution`: target vertex count built by uniform bisection, default 1000
    pub mesh_resolution: usize,
    /// `eps_minus` / `eps_plus`: fixed relaxation interval, default (1e-6, 1e6)
    pub eps_minus: f64,
    pub eps_plus: f64,
    /// `gap_tolerance`, default 1e-7
    pub gap_tolerance: f64,
    /// `max_iterations`, default 500
    pub max_iterations: usize,
    /// `alpha` / `beta`: schedule exponents, default balanced 1/(2(2-q))
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// `rho`, default 1e-3
    pub rho: f64,
    /// `theta`: Doerfler parameter, default 0.3
    pub theta: f64,
    /// `eps_plus_factor` / `eps_minus_factor`, defaults 1.25 / 0.8
    pub eps_plus_factor: f64,
    pub eps_minus_factor: f64,
    /// `stop_tolerance`, default 1e-7
    pub stop_tolerance: f64,
    /// `max_rounds`, default 500
    pub max_rounds: usize,
    /// `refine_mesh`, default true
    pub refine_mesh: bool,
    /// `delta`, default 1e-6
    pub delta: f64,
    /// `line_search_tol`, default 1e-10
    pub line_search_tol: f64,
    /// `timing`: `none` (wall_time column written as 0, byte-stable reruns)
    /// or `real`; default `none`
    pub timing: bool,
    /// `output_dir`, default `out`
    pub output_dir: PathBuf,
    /// `seed`: reserved, unused by the numerics, default 0
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            domain: Domain::Disk,
            p: 2.0,
            f: 1.0,
            mode: Mode::FixedInterval,
            mesh_resolution: 1000,
            eps_minus: 1e-6,
            eps_plus: 1e6,
            gap_tolerance: 1e-7,
            max_iterations: 500,
            alpha: None,
            beta: None,
            rho: 1e-3,
            theta: 0.3,
            eps_plus_factor: 1.25,
            eps_minus_factor: 0.8,
            stop_tolerance: 1e-7,
            max_rounds: 500,
            refine_mesh: true,
            delta: 1e-6,
            line_search_tol: 1e-10,
            timing: false,
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn exponents(&self) -> Result<Exponents> {
        Exponents::new(self.p)
    }

    pub fn interval(&self) -> Result<RelaxInterval> {
        RelaxInterval::new(self.eps_minus, self.eps_plus)
    }

    pub fn schedule_config(&self) -> Result<ScheduleConfig> {
        let exps = self.exponents()?;
        let balanced = ScheduleConfig::balanced(exps, self.max_iterations);
        let sched = ScheduleConfig {
            alpha: self.alpha.unwrap_or(balanced.alpha),
            beta: self.beta.unwrap_or(balanced.beta),
            max_iterations: self.max_iterations,
        };
        sched.validate(exps)?;
        Ok(sched)
    }

    pub fn adaptive_config(&self) -> Result<AdaptiveConfig> {
        let mut cfg = AdaptiveConfig::new(self.stop_tolerance, self.max_rounds);
        cfg.rho = self.rho;
        cfg.doerfler_theta = self.theta;
        cfg.eps_plus_factor = self.eps_plus_factor;
        cfg.eps_minus_factor = self.eps_minus_factor;
        cfg.refine_mesh = self.refine_mesh;
        cfg.timing = self.timing;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn baseline_config(&self) -> Result<BaselineConfig> {
        let cfg = BaselineConfig {
            delta: self.delta,
            line_search_tol: self.line_search_tol,
            max_iterations: self.max_iterations,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.p >= 2.0 && self.p.is_finite()) {
            return Err(Error::Config(format!("p must satisfy 2 <= p < inf, got {}", self.p)));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Config(format!("theta must lie in (0,1), got {}", self.theta)));
        }
        for (key, v) in [
            ("gap_tolerance", self.gap_tolerance),
            ("stop_tolerance", self.stop_tolerance),
            ("line_search_tol", self.line_search_tol),
            ("rho", self.rho),
            ("delta", self.delta),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{key} must be positive, got {v}")));
            }
        }
        if self.mesh_resolution < 4 {
            return Err(Error::Config(format!(
                "mesh_resolution must be at least 4, got {}",
                self.mesh_resolution
            )));
        }
        self.interval()
            .map_err(|e| Error::Config(format!("invalid relaxation interval: {e}")))?;
        Ok(())
    }
}

fn parse_key<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        Error::Config(format!("line {line}: invalid value {value:?} for key {key:?}"))
    })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "line {line}: invalid value {value:?} for key {key:?} (expected true/false)"
        ))),
    }
}

/// Parses the flat key=value file at `path`. See [`RunConfig`] for keys and
/// defaults. `mode` is required; unknown keys and malformed lines are errors.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut mode = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(Error::Config(format!(
                "line {line}: expected key = value, got {stripped:?}"
            )));
        };
        let key = key.trim();
        let value = value.trim();
        match key {
            "domain" => {
                cfg.domain = match value {
                    "disk" => Domain::Disk,
                    "lshape" => Domain::Lshape,
                    _ => {
                        return Err(Error::Config(format!(
                            "line {line}: unknown domain {value:?} (expected disk or lshape)"
                        )))
                    }
                }
            }
            "mode" => {
                mode = Some(match value {
                    "schedule" => Mode::Schedule,
                    "fixed_interval" => Mode::FixedInterval,
                    "adaptive" => Mode::Adaptive,
                    "steepest_compare" => Mode::SteepestCompare,
                    _ => {
                        return Err(Error::Config(format!(
                            "line {line}: unknown mode {value:?}"
                        )))
                    }
                })
            }
            "p" => cfg.p = parse_key(line, key, value)?,
            "f" => cfg.f = parse_key(line, key, value)?,
            "mesh_resolution" => cfg.mesh_resolution = parse_key(line, key, value)?,
            "eps_minus" => cfg.eps_minus = parse_key(line, key, value)?,
            "eps_plus" => cfg.eps_plus = parse_key(line, key, value)?,
            "gap_tolerance" => cfg.gap_tolerance = parse_key(line, key, value)?,
            "max_iterations" => cfg.max_iterations = parse_key(line, key, value)?,
            "alpha" => cfg.alpha = Some(parse_key(line, key, value)?),
            "beta" => cfg.beta = Some(parse_key(line, key, value)?),
            "rho" => cfg.rho = parse_key(line, key, value)?,
            "theta" => cfg.theta = parse_key(line, key, value)?,
            "eps_plus_factor" => cfg.eps_plus_factor = parse_key(line, key, value)?,
            "eps_minus_factor" => cfg.eps_minus_factor = parse_key(line, key, value)?,
            "stop_tolerance" => cfg.stop_tolerance = parse_key(line, key, value)?,
            "max_rounds" => cfg.max_rounds = parse_key(line, key, value)?,
            "refine_mesh" => cfg.refine_mesh = parse_bool(line, key, value)?,
            "delta" => cfg.delta = parse_key(line, key, value)?,
            "line_search_tol" => cfg.line_search_tol = parse_key(line, key, value)?,
            "timing" => {
                cfg.timing = match value {
                    "none" => false,
                    "real" => true,
                    _ => {
                        return Err(Error::Config(format!(
                            "line {line}: timing must be none or real, got {value:?}"
                        )))
                    }
                }
            }
            "output_dir" => cfg.output_dir = PathBuf::from(value),
            "seed" => cfg.seed = parse_key(line, key, value)?,
            _ => {
                return Err(Error::Config(format!("line {line}: unknown key {key:?}")));
            }
        }
    }
    let Some(mode) = mode else {
        return Err(Error::Config("missing required key \"mode\"".into()));
    };
    cfg.mode = mode;
    cfg.validate()?;
    Ok(cfg)
}

/// Echo of every resolved parameter, written as the run manifest. Re-parsing
/// the manifest reproduces the run.
pub fn manifest(cfg: &RunConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    kv("domain", cfg.domain.label().into());
    kv("mode", cfg.mode.label().into());
    kv("p", format!("{:.16e}", cfg.p));
    kv("f", format!("{:.16e}", cfg.f));
    kv("mesh_resolution", cfg.mesh_resolution.to_string());
    kv("eps_minus", format!("{:.16e}", cfg.eps_minus));
    kv("eps_plus", format!("{:.16e}", cfg.eps_plus));
    kv("gap_tolerance", format!("{:.16e}", cfg.gap_tolerance));
    kv("max_iterations", cfg.max_iterations.to_string());
    if let Ok(sched) = cfg.schedule_config() {
        kv("alpha", format!("{:.16e}", sched.alpha));
        kv("beta", format!("{:.16e}", sched.beta));
    }
    kv("rho", format!("{:.16e}", cfg.rho));
    kv("theta", format!("{:.16e}", cfg.theta));
    kv("eps_plus_factor", format!("{:.16e}", cfg.eps_plus_factor));
    kv("eps_minus_factor", format!("{:.16e}", cfg.eps_minus_factor));
    kv("stop_tolerance", format!("{:.16e}", cfg.stop_tolerance));
    kv("max_rounds", cfg.max_rounds.to_string());
    kv("refine_mesh", cfg.refine_mesh.to_string());
    kv("delta", format!("{:.16e}", cfg.delta));
    kv("line_search_tol", format!("{:.16e}", cfg.line_search_tol));
    kv("timing", if cfg.timing { "real".into() } else { "none".into() });
    kv("output_dir", cfg.output_dir.display().to_string());
    kv("seed", cfg.seed.to_string());
    out
}
