//! Batch front end: configuration, case dispatch and artifact writing.
//!
//! Configuration is a flat text file of `key = value` lines with dotted keys
//! (`params.beta`, `cutoff.kind`, `quad.tol_rel`, ...). Blank lines and lines
//! starting with `#` are ignored. Every key can also be given as a flag of the
//! same name (`--quad.tol_rel 1e-9`), and flags win over the file.
//!
//! Each command writes `results.json` into the output directory; sweeps also
//! write `results.csv`. Nothing time- or host-dependent goes into either file.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;

use crate::casestudies::{run_case, CasePoint, CaseResult, CASES};
use crate::cutoff::{CutoffFamily, CutoffKind};
use crate::error::{Error, Result};
use crate::graphs::{enumerate_connected, symmetry_factor, VertexKind};
use crate::propagators::{
    anti_feynman_mixed, feynman_mixed, matsubara_sum_closed, realtime_matrix_entry, thermal_mixed, wightman_mixed,
    ThermalParams,
};
use crate::quadrature::{matsubara_sum, parallel_map, FrequencyDecay, Tolerance};

/// Exit status for a bad command line, config file or case name.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for a numerical failure (domain, budget, non-finite values).
pub const EXIT_NUMERIC: i32 = 1;
/// Exit status when a declared-divergent integral was requested.
pub const EXIT_DIVERGENT: i32 = 3;

/// Tolerances and truncation shared by every case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadConfig {
    pub tol_rel: f64,
    pub tol_abs: f64,
    pub max_evals: usize,
    pub matsubara_n: u64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        let t = Tolerance::default();
        QuadConfig {
            tol_rel: t.rel,
            tol_abs: t.abs,
            max_evals: t.max_evals,
            matsubara_n: 256,
        }
    }
}

impl QuadConfig {
    pub fn tolerance(&self) -> Result<Tolerance> {
        let t = Tolerance {
            rel: self.tol_rel,
            abs: self.tol_abs,
            max_evals: self.max_evals,
        };
        t.validate()?;
        Ok(t)
    }
}

/// Parameters a sweep may vary; these are the CSV's leading columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Beta,
    Mass,
    P,
    ScaleN,
}

impl SweepParam {
    fn parse(name: &str) -> Result<Self> {
        match name {
            "beta" | "params.beta" => Ok(SweepParam::Beta),
            "mass" | "params.mass" => Ok(SweepParam::Mass),
            "p" | "point.p" => Ok(SweepParam::P),
            "scale_n" | "cutoff.scale_n" => Ok(SweepParam::ScaleN),
            other => Err(Error::Config(format!(
                "cannot sweep `{other}`; sweepable parameters are beta, mass, p, scale_n"
            ))),
        }
    }

    fn key(self) -> &'static str {
        match self {
            SweepParam::Beta => "beta",
            SweepParam::Mass => "mass",
            SweepParam::P => "p",
            SweepParam::ScaleN => "scale_n",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Log,
}

/// One sweep axis, written `name=min:max:steps[:linear|log]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepAxis {
    pub param: SweepParam,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
    pub spacing: Spacing,
}

impl SweepAxis {
    pub fn parse(arg: &str) -> Result<Self> {
        let (name, range) = arg
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("sweep axis `{arg}` must look like name=min:max:steps[:log]")))?;
        Self::parse_range(SweepParam::parse(name.trim())?, range)
    }

    fn parse_range(param: SweepParam, range: &str) -> Result<Self> {
        let parts: Vec<&str> = range.trim().split(':').map(str::trim).collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(Error::Config(format!("sweep range `{range}` must be min:max:steps[:linear|log]")));
        }
        let min = parse_f64("sweep min", parts[0])?;
        let max = parse_f64("sweep max", parts[1])?;
        let steps: usize = parts[2]
            .parse()
            .map_err(|_| Error::Config(format!("sweep steps must be a positive integer, got `{}`", parts[2])))?;
        let spacing = match parts.get(3).copied().unwrap_or("linear") {
            "linear" | "lin" => Spacing::Linear,
            "log" => Spacing::Log,
            other => return Err(Error::Config(format!("unknown sweep spacing `{other}`"))),
        };
        if steps == 0 || (steps == 1 && min != max) {
            return Err(Error::Config(format!("sweep over [{min}, {max}] needs at least 2 steps")));
        }
        if spacing == Spacing::Log && !(min > 0.0 && max > 0.0) {
            return Err(Error::Config("log sweeps need positive endpoints".into()));
        }
        Ok(SweepAxis {
            param,
            min,
            max,
            steps,
            spacing,
        })
    }

    /// Grid values, endpoints included exactly.
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                if i == 0 {
                    return self.min;
                }
                if i == self.steps - 1 {
                    return self.max;
                }
                let f = i as f64 / last;
                match self.spacing {
                    Spacing::Linear => self.min + f * (self.max - self.min),
                    Spacing::Log => self.min * (self.max / self.min).powf(f),
                }
            })
            .collect()
    }

    fn to_arg(self) -> String {
        let spacing = match self.spacing {
            Spacing::Linear => "linear",
            Spacing::Log => "log",
        };
        format!("{}:{}:{}:{}", self.min, self.max, self.steps, spacing)
    }
}

/// Everything a command needs, after merging defaults, file and flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub params: ThermalParams,
    pub cutoff: CutoffFamily,
    pub quad: QuadConfig,
    pub case: Option<String>,
    pub point: CasePoint,
    pub degrees: Vec<u32>,
    pub sweep: Vec<SweepAxis>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: ThermalParams {
                beta: 1.0,
                mass: 1.0,
                coupling: 1.0,
                renorm_c: 0.0,
            },
            cutoff: CutoffFamily::default(),
            quad: QuadConfig::default(),
            case: None,
            point: CasePoint::default(),
            degrees: Vec::new(),
            sweep: Vec::new(),
            output_dir: PathBuf::from("."),
        }
    }
}

/// Keys accepted in config files and as `--key value` flags.
pub const CONFIG_KEYS: &[&str] = &[
    "params.beta",
    "params.mass",
    "params.coupling",
    "params.renorm_c",
    "cutoff.kind",
    "cutoff.epsilon",
    "cutoff.t0",
    "cutoff.scale_n",
    "quad.tol_rel",
    "quad.tol_abs",
    "quad.max_evals",
    "quad.matsubara_N",
    "case",
    "point.t",
    "point.dt",
    "point.p",
    "point.lambda",
    "graphs.degrees",
    "output.dir",
];

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("`{key}` expects a number, got `{v}`")))
}

fn parse_degrees(v: &str) -> Result<Vec<u32>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<u32>()
                .map_err(|_| Error::Config(format!("degree `{s}` is not a non-negative integer")))
        })
        .collect()
}

impl RunConfig {
    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "params.beta" => self.params.beta = parse_f64(key, v)?,
            "params.mass" => self.params.mass = parse_f64(key, v)?,
            "params.coupling" => self.params.coupling = parse_f64(key, v)?,
            "params.renorm_c" => self.params.renorm_c = parse_f64(key, v)?,
            "cutoff.kind" => self.cutoff.kind = v.parse::<CutoffKind>()?,
            "cutoff.epsilon" => self.cutoff.epsilon = parse_f64(key, v)?,
            "cutoff.t0" => self.cutoff.t0 = parse_f64(key, v)?,
            "cutoff.scale_n" => self.cutoff.scale_n = parse_f64(key, v)?,
            "quad.tol_rel" => self.quad.tol_rel = parse_f64(key, v)?,
            "quad.tol_abs" => self.quad.tol_abs = parse_f64(key, v)?,
            "quad.max_evals" => {
                self.quad.max_evals = v
                    .parse()
                    .map_err(|_| Error::Config(format!("`{key}` expects a positive integer, got `{v}`")))?
            }
            "quad.matsubara_N" | "quad.matsubara_n" => {
                self.quad.matsubara_n = v
                    .parse()
                    .map_err(|_| Error::Config(format!("`{key}` expects a non-negative integer, got `{v}`")))?
            }
            "case" => self.case = Some(v.to_string()),
            "point.t" => self.point.t = parse_f64(key, v)?,
            "point.dt" => self.point.dt = parse_f64(key, v)?,
            "point.p" => self.point.p = parse_f64(key, v)?,
            "point.lambda" => self.point.lambda = parse_f64(key, v)?,
            "graphs.degrees" => self.degrees = parse_degrees(v)?,
            "output.dir" => self.output_dir = PathBuf::from(v),
            k if k.starts_with("sweep.") => {
                let axis = SweepAxis::parse_range(SweepParam::parse(&k["sweep.".len()..])?, v)?;
                self.sweep.retain(|a| a.param != axis.param);
                self.sweep.push(axis);
            }
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parse config text on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1)))?;
            self.set(k.trim(), v).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", lineno + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Canonical config text; parsing it gives back the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        let c = &self.cutoff;
        let q = &self.quad;
        let pt = &self.point;
        let _ = writeln!(s, "params.beta = {}", p.beta);
        let _ = writeln!(s, "params.mass = {}", p.mass);
        let _ = writeln!(s, "params.coupling = {}", p.coupling);
        let _ = writeln!(s, "params.renorm_c = {}", p.renorm_c);
        let _ = writeln!(s, "cutoff.kind = {}", c.kind);
        let _ = writeln!(s, "cutoff.epsilon = {}", c.epsilon);
        let _ = writeln!(s, "cutoff.t0 = {}", c.t0);
        let _ = writeln!(s, "cutoff.scale_n = {}", c.scale_n);
        let _ = writeln!(s, "quad.tol_rel = {}", q.tol_rel);
        let _ = writeln!(s, "quad.tol_abs = {}", q.tol_abs);
        let _ = writeln!(s, "quad.max_evals = {}", q.max_evals);
        let _ = writeln!(s, "quad.matsubara_N = {}", q.matsubara_n);
        if let Some(case) = &self.case {
            let _ = writeln!(s, "case = {case}");
        }
        let _ = writeln!(s, "point.t = {}", pt.t);
        let _ = writeln!(s, "point.dt = {}", pt.dt);
        let _ = writeln!(s, "point.p = {}", pt.p);
        let _ = writeln!(s, "point.lambda = {}", pt.lambda);
        if !self.degrees.is_empty() {
            let d: Vec<String> = self.degrees.iter().map(u32::to_string).collect();
            let _ = writeln!(s, "graphs.degrees = {}", d.join(","));
        }
        for axis in &self.sweep {
            let _ = writeln!(s, "sweep.{} = {}", axis.param.key(), axis.to_arg());
        }
        let _ = writeln!(s, "output.dir = {}", self.output_dir.display());
        s
    }

    /// Check everything that does not depend on the command.
    pub fn validate(&self) -> Result<()> {
        self.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.cutoff.validate()?;
        self.quad.tolerance()?;
        Ok(())
    }
}

// ------------------------------------------------------------ command line

#[derive(Debug, Parser)]
#[command(
    name = "thermal-kms",
    version,
    about = "Perturbative thermal (KMS) state correlation functions: propagators, graphs and case studies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by every subcommand. Dotted names match the config keys.
#[derive(Debug, Default, Args)]
pub struct Common {
    /// Config file of `key = value` lines; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` settings, applied after the file and before other flags.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[arg(long = "params.beta", visible_alias = "beta", global = true)]
    pub beta: Option<f64>,
    #[arg(long = "params.mass", visible_alias = "mass", global = true)]
    pub mass: Option<f64>,
    #[arg(long = "params.coupling", visible_alias = "coupling", global = true)]
    pub coupling: Option<f64>,
    #[arg(long = "params.renorm_c", visible_alias = "renorm-c", global = true, allow_hyphen_values = true)]
    pub renorm_c: Option<f64>,
    #[arg(long = "cutoff.kind", global = true)]
    pub cutoff_kind: Option<String>,
    #[arg(long = "cutoff.epsilon", global = true)]
    pub cutoff_epsilon: Option<f64>,
    #[arg(long = "cutoff.t0", global = true, allow_hyphen_values = true)]
    pub cutoff_t0: Option<f64>,
    #[arg(long = "cutoff.scale_n", global = true)]
    pub cutoff_scale_n: Option<f64>,
    #[arg(long = "quad.tol_rel", global = true)]
    pub tol_rel: Option<f64>,
    #[arg(long = "quad.tol_abs", global = true)]
    pub tol_abs: Option<f64>,
    #[arg(long = "quad.max_evals", global = true)]
    pub max_evals: Option<usize>,
    #[arg(long = "quad.matsubara_N", global = true)]
    pub matsubara_n: Option<u64>,
    #[arg(long = "point.t", visible_alias = "t", global = true, allow_hyphen_values = true)]
    pub t: Option<f64>,
    #[arg(long = "point.dt", visible_alias = "dt", global = true, allow_hyphen_values = true)]
    pub dt: Option<f64>,
    #[arg(long = "point.p", visible_alias = "p", global = true)]
    pub p: Option<f64>,
    #[arg(long = "point.lambda", visible_alias = "lambda", global = true, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// Directory receiving results.json (and results.csv for sweeps).
    #[arg(long = "output.dir", visible_alias = "out", global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate one case from the registry (or `graphs`).
    Run {
        #[arg(long)]
        case: Option<String>,
        /// Vertex degrees for the `graphs` case, comma separated.
        #[arg(long = "graphs.degrees", visible_alias = "degrees")]
        degrees: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Enumerate connected multigraphs with the given vertex degrees.
    Graphs {
        #[arg(long = "graphs.degrees", visible_alias = "degrees")]
        degrees: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a propagator kernel at one point.
    Propagator {
        #[arg(long, value_enum, default_value_t = PropagatorKind::Wightman)]
        kind: PropagatorKind,
        /// Imaginary time.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        u: f64,
        /// Branch indices for the real-time matrix entry.
        #[arg(long, default_value_t = 1)]
        a: u8,
        #[arg(long, default_value_t = 1)]
        b: u8,
        #[command(flatten)]
        common: Common,
    },
    /// Quadratic interaction at first order.
    Phi2 {
        #[arg(long, value_enum, default_value_t = Phi2Term::F1)]
        term: Phi2Term,
        #[command(flatten)]
        common: Common,
    },
    /// Cubic interaction at second order, large-time limits.
    Phi3 {
        #[arg(long, value_enum, default_value_t = Phi3Term::F2Inf00)]
        term: Phi3Term,
        #[command(flatten)]
        common: Common,
    },
    /// Thermal mass m_β² of the quartic theory.
    ThermalMass {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a case on a grid; writes results.json and results.csv.
    Sweep {
        #[arg(long)]
        case: Option<String>,
        /// Axis `name=min:max:steps[:linear|log]`; repeat for a product grid.
        #[arg(long = "axis")]
        axes: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PropagatorKind {
    Wightman,
    Thermal,
    Feynman,
    AntiFeynman,
    Matrix,
    MatsubaraClosed,
    MatsubaraSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Phi2Term {
    #[value(name = "F1")]
    F1,
    #[value(name = "F1-engine")]
    F1Engine,
    #[value(name = "A1")]
    A1,
    #[value(name = "B1")]
    B1,
    #[value(name = "Btilde-inf")]
    BtildeInf,
    #[value(name = "mass-shift")]
    MassShift,
}

impl Phi2Term {
    fn case(self) -> &'static str {
        match self {
            Phi2Term::F1 => "phi2-F1",
            Phi2Term::F1Engine => "phi2-F1-engine",
            Phi2Term::A1 => "phi2-A1",
            Phi2Term::B1 => "phi2-B1",
            Phi2Term::BtildeInf => "phi2-Btilde-inf",
            Phi2Term::MassShift => "mass-shift",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Phi3Term {
    #[value(name = "A-inf")]
    AInf,
    #[value(name = "B-inf")]
    BInf,
    #[value(name = "Bc")]
    Bc,
    #[value(name = "C-inf")]
    CInf,
    #[value(name = "F2-inf-00")]
    F2Inf00,
}

impl Phi3Term {
    fn case(self) -> &'static str {
        match self {
            Phi3Term::AInf => "phi3-A-inf",
            Phi3Term::BInf => "phi3-B-inf",
            Phi3Term::Bc => "phi3-Bc",
            Phi3Term::CInf => "phi3-C-inf",
            Phi3Term::F2Inf00 => "phi3-F2-inf-00",
        }
    }
}

impl Common {
    /// Defaults, then the config file, then `--set`, then named flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply_text(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v)?;
        }
        let f = |x: Option<f64>| x.map(|v| v.to_string());
        let flags: [(&str, Option<String>); 16] = [
            ("params.beta", f(self.beta)),
            ("params.mass", f(self.mass)),
            ("params.coupling", f(self.coupling)),
            ("params.renorm_c", f(self.renorm_c)),
            ("cutoff.kind", self.cutoff_kind.clone()),
            ("cutoff.epsilon", f(self.cutoff_epsilon)),
            ("cutoff.t0", f(self.cutoff_t0)),
            ("cutoff.scale_n", f(self.cutoff_scale_n)),
            ("quad.tol_rel", f(self.tol_rel)),
            ("quad.tol_abs", f(self.tol_abs)),
            ("quad.max_evals", self.max_evals.map(|v| v.to_string())),
            ("quad.matsubara_N", self.matsubara_n.map(|v| v.to_string())),
            ("point.t", f(self.t)),
            ("point.dt", f(self.dt)),
            ("point.p", f(self.p)),
            ("point.lambda", f(self.lambda)),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

// ------------------------------------------------------------ outputs

/// One enumerated graph in the `graphs` output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphRecord {
    pub edges: Vec<[usize; 3]>,
    pub kinds: Vec<VertexKind>,
    pub symmetry_factor: u64,
}

/// Output of the `graphs` case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphListing {
    pub case: String,
    pub degrees: Vec<u32>,
    pub count: usize,
    pub graphs: Vec<GraphRecord>,
}

pub fn graph_listing(degrees: &[u32]) -> Result<GraphListing> {
    if degrees.is_empty() {
        return Err(Error::Config("graphs needs --degrees, e.g. --degrees 1,1,3,3".into()));
    }
    let graphs: Vec<GraphRecord> = enumerate_connected(degrees)?
        .iter()
        .map(|g| {
            let j = g.to_json();
            GraphRecord {
                edges: j.edges,
                kinds: j.kinds,
                symmetry_factor: symmetry_factor(g),
            }
        })
        .collect();
    Ok(GraphListing {
        case: "graphs".into(),
        degrees: degrees.to_vec(),
        count: graphs.len(),
        graphs,
    })
}

/// One row of a sweep: the varied coordinates and the case result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub mass: f64,
    pub p: f64,
    pub scale_n: f64,
    pub result: CaseResult,
}

pub const CSV_HEADER: &str = "beta,mass,p,scale_n,value_re,value_im,err";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let v = r.result.value;
        let _ = writeln!(
            s,
            "{},{},{},{},{:e},{:e},{:e}",
            r.beta, r.mass, r.p, r.scale_n, v.re, v.im, r.result.error_estimate
        );
    }
    s
}

/// Product grid of the sweep axes; the first axis varies slowest.
pub fn sweep_points(cfg: &RunConfig) -> Result<Vec<(ThermalParams, CasePoint, CutoffFamily)>> {
    if cfg.sweep.is_empty() {
        return Err(Error::Config("sweep needs at least one --axis name=min:max:steps[:log]".into()));
    }
    let mut points = vec![(cfg.params, cfg.point, cfg.cutoff)];
    for axis in &cfg.sweep {
        let values = axis.values();
        let mut next = Vec::with_capacity(points.len() * values.len());
        for base in &points {
            for &v in &values {
                let (mut par, mut pt, mut cut) = *base;
                match axis.param {
                    SweepParam::Beta => par.beta = v,
                    SweepParam::Mass => par.mass = v,
                    SweepParam::P => pt.p = v,
                    SweepParam::ScaleN => cut.scale_n = v,
                }
                next.push((par, pt, cut));
            }
        }
        points = next;
    }
    for (par, _, cut) in &points {
        par.validate().map_err(|e| Error::Config(format!("sweep point: {e}")))?;
        cut.validate()?;
    }
    Ok(points)
}

pub fn run_sweep(case: &str, cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    check_case(case)?;
    if case == "graphs" {
        return Err(Error::Config("the graphs case cannot be swept".into()));
    }
    let tol = cfg.quad.tolerance()?;
    let points = sweep_points(cfg)?;
    let results = parallel_map(&points, |(par, pt, cut)| run_case(case, pt, par, cut, &tol));
    points
        .iter()
        .zip(results)
        .map(|((par, pt, cut), r)| {
            Ok(SweepRow {
                beta: par.beta,
                mass: par.mass,
                p: pt.p,
                scale_n: cut.scale_n,
                result: r?,
            })
        })
        .collect()
}

fn check_case(case: &str) -> Result<()> {
    if case == "graphs" || CASES.contains(&case) {
        Ok(())
    } else {
        Err(Error::UnknownCase(case.to_string()))
    }
}

pub fn propagator_result(kind: PropagatorKind, u: f64, a: u8, b: u8, cfg: &RunConfig) -> Result<CaseResult> {
    let par = &cfg.params;
    let (t, p) = (cfg.point.t, cfg.point.p);
    let (value, err, label) = match kind {
        PropagatorKind::Wightman => (wightman_mixed(t, u, p, par)?, 0.0, "wightman"),
        PropagatorKind::Thermal => (thermal_mixed(t, u, p, par)?, 0.0, "thermal"),
        PropagatorKind::Feynman => (feynman_mixed(t, p, par)?, 0.0, "feynman"),
        PropagatorKind::AntiFeynman => (anti_feynman_mixed(t, p, par)?, 0.0, "anti-feynman"),
        PropagatorKind::Matrix => (realtime_matrix_entry(a, b, t, p, par)?, 0.0, "matrix"),
        PropagatorKind::MatsubaraClosed => {
            (Complex64::new(matsubara_sum_closed(u, p, par)?, 0.0), 0.0, "matsubara-closed")
        }
        PropagatorKind::MatsubaraSum => {
            let w = par.energy(p)?;
            let beta = par.beta;
            let nu = |n: i64| 2.0 * std::f64::consts::PI * n as f64 / beta;
            let e = matsubara_sum(
                |n| Complex64::from_polar(1.0 / (w * w + nu(n) * nu(n)), nu(n) * u),
                cfg.quad.matsubara_n,
                beta,
                FrequencyDecay::InverseSquare { c: 1.0 },
            )?;
            (e.value, e.error, "matsubara-sum")
        }
    };
    let mut r = CaseResult::new(&format!("propagator-{label}"), value, err, par, None)
        .with_meta(format!("t = {t}, u = {u}, p = {p}"));
    if kind == PropagatorKind::Matrix {
        r = r.with_meta(format!("entry ({a}, {b})"));
    }
    if kind == PropagatorKind::MatsubaraSum {
        r = r.with_meta(format!("|n| <= {}, error is the analytic tail bound", cfg.quad.matsubara_n));
    }
    Ok(r)
}

// ------------------------------------------------------------ driver

/// What a command produced, before it is written out.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Results(Vec<CaseResult>),
    Graphs(GraphListing),
    Sweep(Vec<SweepRow>),
}

/// Files written by [`write_outputs`], relative to the output directory.
pub const RESULTS_JSON: &str = "results.json";
pub const RESULTS_CSV: &str = "results.csv";

pub fn write_outputs(out: &Output, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    let json = match out {
        Output::Results(r) => serde_json::to_string_pretty(r),
        Output::Graphs(g) => serde_json::to_string_pretty(g),
        Output::Sweep(rows) => serde_json::to_string_pretty(rows),
    }
    .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
    let write = |name: &str, text: String| -> Result<PathBuf> {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    };
    let mut written = vec![write(RESULTS_JSON, json + "\n")?];
    if let Output::Sweep(rows) = out {
        written.push(write(RESULTS_CSV, sweep_csv(rows))?);
    }
    Ok(written)
}

/// Run a parsed command and return its output together with the directory
/// it should be written to.
pub fn execute(cli: &Cli) -> Result<(Output, PathBuf)> {
    let (common, out) = match &cli.command {
        Command::Run { case, degrees, common } => {
            let mut cfg = common.resolve()?;
            if let Some(d) = degrees {
                cfg.degrees = parse_degrees(d)?;
            }
            if let Some(c) = case {
                cfg.case = Some(c.clone());
            }
            cfg.validate()?;
            let case = cfg
                .case
                .clone()
                .ok_or_else(|| Error::Config("run needs --case (or `case = ...` in the config)".into()))?;
            check_case(&case)?;
            let out = if case == "graphs" {
                Output::Graphs(graph_listing(&cfg.degrees)?)
            } else {
                Output::Results(vec![run_case(&case, &cfg.point, &cfg.params, &cfg.cutoff, &cfg.quad.tolerance()?)?])
            };
            return Ok((out, cfg.output_dir));
        }
        Command::Graphs { degrees, common } => {
            let mut cfg = common.resolve()?;
            if let Some(d) = degrees {
                cfg.degrees = parse_degrees(d)?;
            }
            return Ok((Output::Graphs(graph_listing(&cfg.degrees)?), cfg.output_dir));
        }
        Command::Propagator { kind, u, a, b, common } => {
            let cfg = common.resolve()?;
            cfg.validate()?;
            let r = propagator_result(*kind, *u, *a, *b, &cfg)?;
            return Ok((Output::Results(vec![r]), cfg.output_dir));
        }
        Command::Phi2 { term, common } => (common, term.case()),
        Command::Phi3 { term, common } => (common, term.case()),
        Command::ThermalMass { common } => (common, "thermal-mass"),
        Command::Sweep { case, axes, common } => {
            let mut cfg = common.resolve()?;
            for arg in axes {
                let axis = SweepAxis::parse(arg)?;
                cfg.sweep.retain(|a| a.param != axis.param);
                cfg.sweep.push(axis);
            }
            if let Some(c) = case {
                cfg.case = Some(c.clone());
            }
            cfg.validate()?;
            let case = cfg
                .case
                .clone()
                .ok_or_else(|| Error::Config("sweep needs --case (or `case = ...` in the config)".into()))?;
            return Ok((Output::Sweep(run_sweep(&case, &cfg)?), cfg.output_dir));
        }
    };
    let cfg = common.resolve()?;
    cfg.validate()?;
    let r = run_case(out, &cfg.point, &cfg.params, &cfg.cutoff, &cfg.quad.tolerance()?)?;
    Ok((Output::Results(vec![r]), cfg.output_dir))
}

/// Exit status for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::UnknownCase(_) => EXIT_USAGE,
        Error::Divergent(_) => EXIT_DIVERGENT,
        _ => EXIT_NUMERIC,
    }
}

/// Human-readable summary printed to stdout.
pub fn summary(out: &Output) -> String {
    let mut s = String::new();
    let line = |s: &mut String, r: &CaseResult| {
        let _ = writeln!(s, "{}\t{:e}\t{:e}\terr {:e}", r.case, r.value.re, r.value.im, r.error_estimate);
    };
    match out {
        Output::Results(rs) => rs.iter().for_each(|r| line(&mut s, r)),
        Output::Graphs(g) => {
            let _ = writeln!(s, "graphs\tdegrees {:?}\tcount {}", g.degrees, g.count);
            for gr in &g.graphs {
                let _ = writeln!(s, "  edges {:?}\tsym {}", gr.edges, gr.symmetry_factor);
            }
        }
        Output::Sweep(rows) => {
            let _ = writeln!(s, "sweep\t{} points", rows.len());
            rows.iter().for_each(|r| line(&mut s, &r.result));
        }
    }
    s
}

/// Entry point used by the binary. Returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = execute(&cli).and_then(|(out, dir)| {
        let files = write_outputs(&out, &dir)?;
        Ok((out, files))
    });
    match result {
        Ok((out, files)) => {
            print!("{}", summary(&out));
            for f in files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            let code = exit_code(&e);
            match &e {
                Error::Divergent(_) => eprintln!("thermal-kms: divergence: {e}"),
                Error::UnknownCase(_) => {
                    eprintln!("thermal-kms: usage error: {e}; known cases: {}", CASES.join(", "))
                }
                Error::Config(_) => eprintln!("thermal-kms: usage error: {e}"),
                _ => eprintln!("thermal-kms: error: {e}"),
            }
            code
        }
    }
}
