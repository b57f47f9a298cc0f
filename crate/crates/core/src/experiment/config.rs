//! Run configuration and its flat `key=value` text form.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::PotentialSpec;
use crate::finsler::{Forcing, MetricForm};
use crate::grid::Grid1D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Quantile,
    SeededRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// `q̇ = (1, 1)` for every member, then arclength rescaling.
    #[serde(rename = "paper-literal")]
    UnitVelocity,
    /// `q̇¹/q̇⁰ = ∂ₓS(x₀, 0)/m`.
    BohmianConsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown output format '{other}' (csv|json)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub grid_n: usize,
    pub grid_x_min: f64,
    pub grid_x_max: f64,
    pub beta: f64,
    pub k: f64,
    pub q_c: f64,
    pub v0: f64,
    pub a: f64,
    pub q_p: f64,
    pub mass: f64,
    pub dt: f64,
    pub t_final: f64,
    pub n_traj: usize,
    pub sampling: Sampling,
    pub seed: u64,
    pub init_mode: InitMode,
    pub snapshot_start: f64,
    pub snapshot_every: f64,
    pub front_every: f64,
    /// Spacing of the fixed-arclength fronts.
    pub front_every_s: f64,
    pub curvature_every: f64,
    pub curvature_h: f64,
    pub node_threshold: f64,
    /// Largest coordinate-time advance of one geodesic step.
    pub geodesic_dt_max: f64,
    pub forcing: Forcing,
    pub metric_form: MetricForm,
    pub ks_times: Vec<f64>,
    /// Spacing of the exported trajectory rows.
    pub trajectory_every: f64,
    pub output_dir: PathBuf,
    pub format: OutputFormat,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid_n: 4096,
            grid_x_min: -20.0,
            grid_x_max: 40.0,
            beta: 4.0,
            k: 10.8842,
            q_c: 2.0,
            v0: 0.0365,
            a: 0.4,
            q_p: 7.0,
            mass: 2000.0,
            dt: 0.5,
            t_final: 2100.0,
            n_traj: 200,
            sampling: Sampling::Quantile,
            seed: 0,
            init_mode: InitMode::BohmianConsistent,
            snapshot_start: 50.0,
            snapshot_every: 100.0,
            front_every: 50.0,
            front_every_s: 1.0,
            curvature_every: 50.0,
            curvature_h: 1e-4,
            node_threshold: crate::DEFAULT_NODE_THRESHOLD,
            geodesic_dt_max: 0.5,
            forcing: Forcing::Lagrangian,
            metric_form: MetricForm::VelocityIndependent,
            ks_times: vec![500.0, 1000.0, 2000.0],
            trajectory_every: 5.0,
            output_dir: PathBuf::from("qgeo-out"),
            format: OutputFormat::Csv,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>().map_err(|_| Error::Config(format!("{key}: expected a number, got '{v}'")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>().map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got '{v}'")))
}

impl ExperimentConfig {
    /// Parses `key=value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{line}'", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_string(), lineno + 1).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "grid.n" => self.grid_n = parse_usize(key, v)?,
            "grid.x_min" => self.grid_x_min = parse_f64(key, v)?,
            "grid.x_max" => self.grid_x_max = parse_f64(key, v)?,
            "packet.beta" => self.beta = parse_f64(key, v)?,
            "packet.k" => self.k = parse_f64(key, v)?,
            "packet.q_c" => self.q_c = parse_f64(key, v)?,
            "barrier.V0" | "barrier.v0" => self.v0 = parse_f64(key, v)?,
            "barrier.a" => self.a = parse_f64(key, v)?,
            "barrier.q_p" => self.q_p = parse_f64(key, v)?,
            "mass" => self.mass = parse_f64(key, v)?,
            "dt" => self.dt = parse_f64(key, v)?,
            "t_final" => self.t_final = parse_f64(key, v)?,
            "ensemble.n_traj" => self.n_traj = parse_usize(key, v)?,
            "ensemble.sampling" => {
                self.sampling = match v {
                    "quantile" => Sampling::Quantile,
                    "seeded_random" => Sampling::SeededRandom,
                    _ => return Err(Error::Config(format!("{key}: expected quantile|seeded_random, got '{v}'"))),
                }
            }
            "ensemble.seed" => {
                self.seed =
                    v.parse().map_err(|_| Error::Config(format!("{key}: expected an unsigned integer, got '{v}'")))?
            }
            "init_mode" => {
                self.init_mode = match v {
                    "paper-literal" => InitMode::UnitVelocity,
                    "bohmian-consistent" => InitMode::BohmianConsistent,
                    _ => {
                        return Err(Error::Config(format!(
                            "{key}: expected paper-literal|bohmian-consistent, got '{v}'"
                        )))
                    }
                }
            }
            "snapshot_start" => self.snapshot_start = parse_f64(key, v)?,
            "snapshot_every" => self.snapshot_every = parse_f64(key, v)?,
            "front_every" => self.front_every = parse_f64(key, v)?,
            "front_every_s" => self.front_every_s = parse_f64(key, v)?,
            "curvature_every" => self.curvature_every = parse_f64(key, v)?,
            "curvature.h" => self.curvature_h = parse_f64(key, v)?,
            "node_threshold" => self.node_threshold = parse_f64(key, v)?,
            "geodesic.dt_max" => self.geodesic_dt_max = parse_f64(key, v)?,
            "geodesic.forcing" => {
                self.forcing = match v {
                    "lagrangian" => Forcing::Lagrangian,
                    "inverse_metric_gradient" => Forcing::InverseMetricGradient,
                    _ => {
                        return Err(Error::Config(format!(
                            "{key}: expected lagrangian|inverse_metric_gradient, got '{v}'"
                        )))
                    }
                }
            }
            "appendixC_Q0" => {
                self.metric_form = match v {
                    "zero" => MetricForm::VelocityIndependent,
                    "dQdt" => MetricForm::TimeDerivativeSubstitution,
                    _ => return Err(Error::Config(format!("{key}: expected zero|dQdt, got '{v}'"))),
                }
            }
            "diagnostics.ks_times" => {
                self.ks_times = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_f64(key, s))
                    .collect::<Result<_>>()?
            }
            "output.trajectory_every" => self.trajectory_every = parse_f64(key, v)?,
            "output.dir" => self.output_dir = PathBuf::from(v),
            "output.format" => self.format = v.parse()?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("packet.beta", self.beta),
            ("barrier.a", self.a),
            ("mass", self.mass),
            ("dt", self.dt),
            ("t_final", self.t_final),
            ("snapshot_every", self.snapshot_every),
            ("front_every", self.front_every),
            ("front_every_s", self.front_every_s),
            ("curvature_every", self.curvature_every),
            ("curvature.h", self.curvature_h),
            ("node_threshold", self.node_threshold),
            ("geodesic.dt_max", self.geodesic_dt_max),
            ("output.trajectory_every", self.trajectory_every),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.v0 >= 0.0) {
            return Err(Error::Config(format!("barrier.V0 must be non-negative, got {}", self.v0)));
        }
        if self.n_traj < 2 {
            return Err(Error::Config(format!("ensemble.n_traj must be at least 2, got {}", self.n_traj)));
        }
        if self.t_final < self.snapshot_every {
            return Err(Error::Config("t_final must be at least snapshot_every".into()));
        }
        if self.snapshot_start < 0.0 {
            return Err(Error::Config("snapshot_start must be non-negative".into()));
        }
        Grid1D::new(self.grid_n, self.grid_x_min, self.grid_x_max).map_err(|e| Error::Config(e.to_string()))?;
        if !self.grid().contains(self.q_c) {
            return Err(Error::Config("packet.q_c lies outside the grid".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid1D {
        Grid1D { n_points: self.grid_n, x_min: self.grid_x_min, x_max: self.grid_x_max }
    }

    pub fn potential(&self) -> PotentialSpec {
        PotentialSpec::Eckart { v0: self.v0, a: self.a, q_p: self.q_p }
    }

    /// Snapshot times `snapshot_start, snapshot_start + every, …` up to `t_final`.
    pub fn snapshot_times(&self) -> Vec<f64> {
        regular_times(self.snapshot_start, self.snapshot_every, self.t_final)
    }

    pub fn front_times(&self) -> Vec<f64> {
        regular_times(0.0, self.front_every, self.t_final)
    }

    pub fn curvature_times(&self) -> Vec<f64> {
        regular_times(0.0, self.curvature_every, self.t_final)
    }

    /// Canonical `key=value` text; parsing it reproduces `self`.
    pub fn to_text(&self) -> String {
        let sampling = match self.sampling {
            Sampling::Quantile => "quantile",
            Sampling::SeededRandom => "seeded_random",
        };
        let init = match self.init_mode {
            InitMode::UnitVelocity => "paper-literal",
            InitMode::BohmianConsistent => "bohmian-consistent",
        };
        let forcing = match self.forcing {
            Forcing::Lagrangian => "lagrangian",
            Forcing::InverseMetricGradient => "inverse_metric_gradient",
        };
        let q0 = match self.metric_form {
            MetricForm::VelocityIndependent => "zero",
            MetricForm::TimeDerivativeSubstitution => "dQdt",
        };
        let ks: Vec<String> = self.ks_times.iter().map(|t| t.to_string()).collect();
        let lines = [
            format!("grid.n={}", self.grid_n),
            format!("grid.x_min={}", self.grid_x_min),
            format!("grid.x_max={}", self.grid_x_max),
            format!("packet.beta={}", self.beta),
            format!("packet.k={}", self.k),
            format!("packet.q_c={}", self.q_c),
            format!("barrier.V0={}", self.v0),
            format!("barrier.a={}", self.a),
            format!("barrier.q_p={}", self.q_p),
            format!("mass={}", self.mass),
            format!("dt={}", self.dt),
            format!("t_final={}", self.t_final),
            format!("ensemble.n_traj={}", self.n_traj),
            format!("ensemble.sampling={sampling}"),
            format!("ensemble.seed={}", self.seed),
            format!("init_mode={init}"),
            format!("snapshot_start={}", self.snapshot_start),
            format!("snapshot_every={}", self.snapshot_every),
            format!("front_every={}", self.front_every),
            format!("front_every_s={}", self.front_every_s),
            format!("curvature_every={}", self.curvature_every),
            format!("curvature.h={}", self.curvature_h),
            format!("node_threshold={}", self.node_threshold),
            format!("geodesic.dt_max={}", self.geodesic_dt_max),
            format!("geodesic.forcing={forcing}"),
            format!("appendixC_Q0={q0}"),
            format!("diagnostics.ks_times={}", ks.join(",")),
            format!("output.trajectory_every={}", self.trajectory_every),
            format!("output.dir={}", self.output_dir.display()),
            format!("output.format={}", self.format.extension()),
        ];
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

/// `start, start + every, …` up to `end` (inclusive, with rounding slack).
pub fn regular_times(start: f64, every: f64, end: f64) -> Vec<f64> {
    let n = ((end - start) / every + 1e-9).floor();
    if n < 0.0 {
        return Vec::new();
    }
    (0..=n as usize).map(|i| start + i as f64 * every).collect()
}
