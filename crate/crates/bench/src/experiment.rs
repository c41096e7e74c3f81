//! Experiment sweeps.
//!
//! A sweep is a TOML document:
//!
//! ```toml
//! instance = "figure3:T=8"
//! algorithm = "fixed_n"          # fixed_n | fixed_eps | span_penalized
//! n = [1024, 2048, 4096]         # fixed_n / span_penalized
//! # eps = [0.3]                  # fixed_eps
//! # max_outer = 18
//! seeds = { start = 0, count = 30 }   # or an explicit list
//! delta = 0.1
//! alpha_scale = 0.05
//! output = "fig3.csv"
//! ```
//!
//! Cells run on a rayon pool whose size is capped by `AMDP_WORKERS`; rows
//! come back in grid order (grid point major, seed minor).

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use amdp_core::calibration::{fixed_eps_calibrate, fixed_n_calibrate, span_penalized_calibrate};
use amdp_core::{
    enumerate_optimal, gain_bias, Algorithm, CalibrationResult, ConfidenceParams, FixedEpsOptions, MdpInstance,
    OptimalSummary, Termination,
};
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::spec::{InstanceSpec, SpecError};

pub const WORKERS_ENV: &str = "AMDP_WORKERS";
pub const DEFAULT_MAX_OUTER: u32 = 18;

/// CSV header; `wall_ms` is always last so it can be dropped when comparing runs.
pub const CSV_COLUMNS: [&str; 17] = [
    "instance",
    "algorithm",
    "n",
    "eps",
    "seed",
    "rho_hat",
    "policy_min_gain",
    "rho_star",
    "suboptimality",
    "horizon",
    "span_index",
    "samples_per_pair",
    "lower",
    "upper",
    "termination",
    "status",
    "wall_ms",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Instance(#[from] SpecError),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum SeedsToml {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigToml {
    instance: String,
    algorithm: String,
    n: Option<Vec<u64>>,
    eps: Option<Vec<f64>>,
    max_outer: Option<u32>,
    seeds: SeedsToml,
    delta: f64,
    #[serde(default = "one")]
    alpha_scale: f64,
    output: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridPoint {
    N(u64),
    Eps(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    pub algorithm: Algorithm,
    pub grid: Vec<GridPoint>,
    pub max_outer: u32,
    pub seeds: Vec<u64>,
    pub delta: f64,
    pub alpha_scale: f64,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: ConfigToml = toml::from_str(text)?;
        let invalid = |m: &str| ConfigError::Invalid(m.to_string());
        let algorithm: Algorithm = raw
            .algorithm
            .parse()
            .map_err(|e| ConfigError::Invalid(format!("{e}")))?;
        let grid: Vec<GridPoint> = match (algorithm, raw.n, raw.eps) {
            (Algorithm::FixedEps, None, Some(eps)) => eps.into_iter().map(GridPoint::Eps).collect(),
            (Algorithm::FixedEps, _, _) => return Err(invalid("fixed_eps takes an `eps` list and no `n`")),
            (_, Some(n), None) => n.into_iter().map(GridPoint::N).collect(),
            (_, _, _) => return Err(invalid("fixed_n and span_penalized take an `n` list and no `eps`")),
        };
        if raw.max_outer.is_some() && algorithm != Algorithm::FixedEps {
            return Err(invalid("max_outer only applies to fixed_eps"));
        }
        let seeds = match raw.seeds {
            SeedsToml::List(v) => v,
            SeedsToml::Range { start, count } => (start..start + count).collect(),
        };
        let config = Self {
            instance: raw.instance.parse()?,
            algorithm,
            grid,
            max_outer: raw.max_outer.unwrap_or(DEFAULT_MAX_OUTER),
            seeds,
            delta: raw.delta,
            alpha_scale: raw.alpha_scale,
            output: raw.output,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.grid.is_empty() {
            return Err(ConfigError::Invalid("grid is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("seed list is empty".into()));
        }
        if self.max_outer == 0 {
            return Err(ConfigError::Invalid("max_outer must be >= 1".into()));
        }
        ConfidenceParams::scaled(self.delta, self.alpha_scale).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for point in &self.grid {
            match *point {
                GridPoint::Eps(e) if !(e > 0.0) => {
                    return Err(ConfigError::Invalid(format!("eps must be positive, got {e}")))
                }
                GridPoint::N(n) if n < 4 => return Err(ConfigError::Invalid(format!("n must be >= 4, got {n}"))),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn params(&self) -> ConfidenceParams {
        ConfidenceParams::scaled(self.delta, self.alpha_scale).expect("validated")
    }
}

/// Outcome of one `(grid point, seed)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub instance: String,
    pub algorithm: Algorithm,
    pub point: GridPoint,
    pub seed: u64,
    pub outcome: Result<CellOutcome, String>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub rho_hat: f64,
    pub policy_min_gain: f64,
    pub rho_star: f64,
    pub horizon: f64,
    pub span_index: Option<u32>,
    pub samples_per_pair: u64,
    pub interval: Option<(f64, f64)>,
    pub termination: Option<Termination>,
}

impl CellOutcome {
    /// Exact suboptimality `max rho* - min rho^pi` of the returned policy.
    pub fn suboptimality(&self) -> f64 {
        self.rho_star - self.policy_min_gain
    }
}

/// Runs one learner call and scores its policy against the exact oracle.
pub fn run_cell(
    mdp: &MdpInstance,
    oracle: &OptimalSummary,
    algorithm: Algorithm,
    point: GridPoint,
    params: &ConfidenceParams,
    max_outer: u32,
    seed: u64,
) -> amdp_core::Result<CellOutcome> {
    let result: CalibrationResult = match (algorithm, point) {
        (Algorithm::FixedN, GridPoint::N(n)) => fixed_n_calibrate(mdp, n, params, seed)?,
        (Algorithm::SpanPenalized, GridPoint::N(n)) => span_penalized_calibrate(mdp, n, params, seed)?,
        (Algorithm::FixedEps, GridPoint::Eps(eps)) => {
            fixed_eps_calibrate(mdp, eps, params, FixedEpsOptions::new(max_outer), seed)?
        }
        _ => {
            return Err(amdp_core::MdpError::Domain(
                "grid point does not match algorithm".into(),
            ))
        }
    };
    let gb = gain_bias(mdp, &result.policy)?;
    Ok(CellOutcome {
        rho_hat: result.rho_hat,
        policy_min_gain: gb.gain.min(),
        rho_star: oracle.rho_star.max(),
        horizon: result.gamma_hat.horizon(),
        span_index: result.selected_row().span_index,
        samples_per_pair: result.samples_per_pair,
        interval: result.interval.as_ref().map(|r| (r.lower, r.upper)),
        termination: result.interval.as_ref().map(|r| r.termination),
    })
}

fn worker_count() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&w| w > 0)
}

/// Runs every cell of the sweep. Learner failures become rows with an error
/// status; only instance construction and the oracle abort the sweep.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRow>, ConfigError> {
    config.validate()?;
    let mdp = config.instance.build()?;
    let oracle = enumerate_optimal(&mdp).map_err(SpecError::from)?;
    let params = config.params();
    let cells: Vec<(GridPoint, u64)> = config
        .grid
        .iter()
        .flat_map(|&p| config.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let run = || {
        cells
            .par_iter()
            .map(|&(point, seed)| {
                let start = Instant::now();
                let outcome = run_cell(&mdp, &oracle, config.algorithm, point, &params, config.max_outer, seed)
                    .map_err(|e| e.to_string());
                RunRow {
                    instance: config.instance.name.clone(),
                    algorithm: config.algorithm,
                    point,
                    seed,
                    outcome,
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                }
            })
            .collect::<Vec<_>>()
    };
    let rows = match worker_count() {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| ConfigError::Invalid(format!("cannot start worker pool: {e}")))?
            .install(run),
        None => run(),
    };
    Ok(rows)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunRow {
    pub fn record(&self) -> Vec<String> {
        let (n, eps) = match self.point {
            GridPoint::N(n) => (n.to_string(), String::new()),
            GridPoint::Eps(e) => (String::new(), e.to_string()),
        };
        let mut rec = vec![
            self.instance.clone(),
            self.algorithm.name().to_string(),
            n,
            eps,
            self.seed.to_string(),
        ];
        match &self.outcome {
            Ok(c) => {
                rec.extend([
                    c.rho_hat.to_string(),
                    c.policy_min_gain.to_string(),
                    c.rho_star.to_string(),
                    c.suboptimality().to_string(),
                    c.horizon.to_string(),
                    opt(c.span_index),
                    c.samples_per_pair.to_string(),
                    opt(c.interval.map(|i| i.0)),
                    opt(c.interval.map(|i| i.1)),
                    match c.termination {
                        Some(Termination::Converged) => "converged".into(),
                        Some(Termination::BudgetExhausted) => "budget_exhausted".into(),
                        None => String::new(),
                    },
                    "ok".into(),
                ]);
            }
            Err(msg) => {
                rec.extend(std::iter::repeat_n(String::new(), 10));
                rec.push(format!("error: {msg}"));
            }
        }
        rec.push(format!("{:.3}", self.wall_ms));
        rec
    }
}

pub fn write_csv<W: io::Write>(rows: &[RunRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(())
}

/// CSV text with the trailing `wall_ms` column removed, for run-to-run comparison.
pub fn csv_without_timing(csv_text: &str) -> String {
    let mut out = String::new();
    for line in csv_text.lines() {
        let kept = line.rsplit_once(',').map_or(line, |(head, _)| head);
        let _ = writeln!(out, "{kept}");
    }
    out
}
