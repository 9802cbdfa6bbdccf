//! One-factor-at-a-time sweeps: simulate every grid value under several
//! seeds, attach the analytic references, and check that the bounds enclose
//! the measurements.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analytic::{self, SystemParams};
use crate::format::{sig, sig_opt};
use crate::simulator::{self, SimConfig, SimStats, DEFAULT_HORIZON};

/// Points on each continuous grid.
pub const CONTINUOUS_GRID_POINTS: usize = 12;
/// Enclosure slack covering simulation noise.
pub const DEFAULT_SLACK: f64 = 0.02;
const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid sweep: {0}")]
    InvalidSpec(String),
    #[error("unknown parameter `{0}` (expected one of lambda_in, mu, c_threads, r_bar, gamma, beta)")]
    UnknownParam(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Params(#[from] analytic::AnalyticError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    LambdaIn,
    Mu,
    CThreads,
    RBar,
    Gamma,
    Beta,
}

impl Param {
    pub const ALL: [Param; 6] = [
        Param::LambdaIn,
        Param::Mu,
        Param::CThreads,
        Param::RBar,
        Param::Gamma,
        Param::Beta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::LambdaIn => "lambda_in",
            Param::Mu => "mu",
            Param::CThreads => "c_threads",
            Param::RBar => "r_bar",
            Param::Gamma => "gamma",
            Param::Beta => "beta",
        }
    }

    /// Experimental range of the parameter.
    pub fn range(self) -> (f64, f64) {
        match self {
            Param::LambdaIn => (5.0, 60.0),
            Param::Mu => (20.0, 60.0),
            Param::CThreads => (1.0, 6.0),
            Param::RBar => (5.0, 100.0),
            Param::Gamma | Param::Beta => (60.0, 200.0),
        }
    }

    pub fn get(self, params: &SystemParams) -> f64 {
        match self {
            Param::LambdaIn => params.lambda_in,
            Param::Mu => params.mu,
            Param::CThreads => f64::from(params.c_threads),
            Param::RBar => params.r_bar,
            Param::Gamma => params.gamma,
            Param::Beta => params.beta,
        }
    }

    /// Copy of `base` with this parameter set to `value`. Thread counts are
    /// rounded to the nearest integer.
    pub fn apply(self, base: &SystemParams, value: f64) -> SystemParams {
        let mut p = *base;
        match self {
            Param::LambdaIn => p.lambda_in = value,
            Param::Mu => p.mu = value,
            Param::CThreads => p.c_threads = value.round().max(0.0) as u32,
            Param::RBar => p.r_bar = value,
            Param::Gamma => p.gamma = value,
            Param::Beta => p.beta = value,
        }
        p
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self> {
        Param::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ExperimentError::UnknownParam(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub name: String,
    pub varied: Param,
    pub grid: Vec<f64>,
    pub base: SystemParams,
    pub horizon: f64,
    pub seeds: Vec<u64>,
    /// Permit grid values outside the experimental range.
    pub allow_out_of_range: bool,
}

pub fn default_seeds() -> Vec<u64> {
    (1..=10).collect()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

impl SweepSpec {
    /// Default grid for `varied`: twelve evenly spaced values, or every
    /// thread count for `c_threads`.
    pub fn for_param(varied: Param) -> Self {
        let (lo, hi) = varied.range();
        let grid = match varied {
            Param::CThreads => (1..=6).map(f64::from).collect(),
            _ => linspace(lo, hi, CONTINUOUS_GRID_POINTS),
        };
        Self {
            name: varied.name().to_string(),
            varied,
            grid,
            base: SystemParams::default(),
            horizon: DEFAULT_HORIZON,
            seeds: default_seeds(),
            allow_out_of_range: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(ExperimentError::InvalidSpec(format!("sweep `{}` has an empty grid", self.name)));
        }
        if self.seeds.is_empty() {
            return Err(ExperimentError::InvalidSpec(format!("sweep `{}` has no seeds", self.name)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ExperimentError::InvalidSpec(format!("horizon must be positive, got {}", self.horizon)));
        }
        self.base.validate()?;
        let (lo, hi) = self.varied.range();
        for &v in &self.grid {
            if !v.is_finite() {
                return Err(ExperimentError::InvalidSpec(format!("non-finite grid value {v}")));
            }
            if !self.allow_out_of_range && !(lo..=hi).contains(&v) {
                return Err(ExperimentError::InvalidSpec(format!(
                    "{} = {v} lies outside [{lo}, {hi}]; set allow_out_of_range to override",
                    self.varied
                )));
            }
        }
        Ok(())
    }
}

/// The six one-factor-at-a-time sweeps, in parameter order.
pub fn default_sweeps() -> Vec<SweepSpec> {
    Param::ALL.into_iter().map(SweepSpec::for_param).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeedSummary {
    pub n: usize,
    pub mean: f64,
    pub std_error: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
}

/// Mean, standard error and normal-approximation 95% interval over
/// per-seed values, using Welford's running update.
pub fn aggregate_seeds(values: &[f64]) -> Result<SeedSummary> {
    if values.len() < 2 {
        return Err(ExperimentError::InsufficientData(format!(
            "need at least 2 per-seed values, got {}",
            values.len()
        )));
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let n = values.len();
    let variance = (m2 / (n - 1) as f64).max(0.0);
    let std_error = (variance / n as f64).sqrt();
    Ok(SeedSummary {
        n,
        mean,
        std_error,
        ci95_lo: mean - Z_95 * std_error,
        ci95_hi: mean + Z_95 * std_error,
    })
}

/// Mean with optional standard error; a single seed has no error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: Option<f64>,
}

impl Estimate {
    fn from_values(values: &[f64]) -> Option<Self> {
        match values {
            [] => None,
            [only] => Some(Self { mean: *only, std_error: None }),
            _ => aggregate_seeds(values).ok().map(|s| Self {
                mean: s.mean,
                std_error: Some(s.std_error),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub p_hat: Option<Estimate>,
    pub p_succ_closed: Option<f64>,
    pub p_succ_transform: Option<f64>,
    pub upper: Option<f64>,
    pub lower: Option<f64>,
    pub empirical_lambda: Option<Estimate>,
    pub lambda_star: Option<f64>,
    pub empirical_hazard: Option<Estimate>,
    pub hazard: Option<f64>,
    /// Seeds whose simulation failed at this point.
    pub failed_runs: usize,
}

pub const CSV_HEADER: [&str; 15] = [
    "value",
    "p_hat_mean",
    "p_hat_se",
    "p_succ_closed",
    "p_succ_transform",
    "upper",
    "lower",
    "empirical_lambda_mean",
    "empirical_lambda_se",
    "lambda_star",
    "empirical_hazard_mean",
    "empirical_hazard_se",
    "hazard",
    "seeds_ok",
    "seeds_failed",
];

impl SweepRow {
    fn csv_record(&self, seeds: usize) -> Vec<String> {
        let mean = |e: &Option<Estimate>| sig_opt(e.map(|e| e.mean));
        let se = |e: &Option<Estimate>| sig_opt(e.and_then(|e| e.std_error));
        vec![
            sig(self.value),
            mean(&self.p_hat),
            se(&self.p_hat),
            sig_opt(self.p_succ_closed),
            sig_opt(self.p_succ_transform),
            sig_opt(self.upper),
            sig_opt(self.lower),
            mean(&self.empirical_lambda),
            se(&self.empirical_lambda),
            sig_opt(self.lambda_star),
            mean(&self.empirical_hazard),
            se(&self.empirical_hazard),
            sig_opt(self.hazard),
            (seeds - self.failed_runs).to_string(),
            self.failed_runs.to_string(),
        ]
    }
}

fn analytic_row(value: f64, params: &SystemParams) -> SweepRow {
    let report = analytic::analyze(params).ok();
    SweepRow {
        value,
        p_hat: None,
        p_succ_closed: report.map(|r| r.p_succ_closed),
        p_succ_transform: report.and_then(|r| r.p_succ_transform),
        upper: report.map(|r| r.upper),
        lower: report.map(|r| r.lower),
        empirical_lambda: None,
        lambda_star: report.map(|r| r.lambda_star),
        empirical_hazard: None,
        hazard: report.map(|r| r.hazard),
        failed_runs: 0,
    }
}

/// Runs every `(value, seed)` simulation and returns one row per grid value
/// in grid order. Per-point failures become `NA` cells.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let jobs: Vec<(usize, u64)> = (0..spec.grid.len())
        .flat_map(|i| spec.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let outcomes: Vec<Option<SimStats>> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let params = spec.varied.apply(&spec.base, spec.grid[i]);
            SimConfig::new(params, spec.horizon, seed)
                .and_then(|cfg| simulator::run_simulation(&cfg))
                .ok()
        })
        .collect();

    let per_value = spec.seeds.len();
    let rows = spec
        .grid
        .iter()
        .zip(outcomes.chunks(per_value))
        .map(|(&value, runs)| {
            let params = spec.varied.apply(&spec.base, value);
            let mut row = analytic_row(value, &params);
            let ok: Vec<&SimStats> = runs.iter().flatten().collect();
            row.failed_runs = per_value - ok.len();
            let collect = |f: fn(&SimStats) -> f64| -> Vec<f64> {
                ok.iter().map(|s| f(s)).filter(|x| x.is_finite()).collect()
            };
            row.p_hat = Estimate::from_values(&collect(SimStats::empirical_p_succ));
            row.empirical_lambda = Estimate::from_values(&collect(SimStats::empirical_lambda));
            row.empirical_hazard = Estimate::from_values(&collect(SimStats::empirical_hazard));
            row
        })
        .collect();
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub value: f64,
    pub p_hat: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundGaps {
    pub value: f64,
    /// `upper - p_hat`.
    pub upper_gap: f64,
    /// `p_hat - lower`.
    pub lower_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub sweep: String,
    pub slack: f64,
    pub points: usize,
    /// Points lacking a measurement or a bound.
    pub na_points: usize,
    pub max_closed_deviation: Option<f64>,
    pub violations: Vec<Violation>,
    pub first: Option<BoundGaps>,
    pub last: Option<BoundGaps>,
}

impl ComparisonReport {
    pub fn enclosed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn gaps(row: &SweepRow) -> Option<BoundGaps> {
    let p = row.p_hat?.mean;
    Some(BoundGaps {
        value: row.value,
        upper_gap: row.upper? - p,
        lower_gap: p - row.lower?,
    })
}

/// Flags rows whose mean success rate leaves `[lower - slack, upper + slack]`.
pub fn check_enclosure(sweep: &str, rows: &[SweepRow], slack: f64) -> ComparisonReport {
    let mut violations = Vec::new();
    let mut na_points = 0;
    let mut max_dev: Option<f64> = None;
    for row in rows {
        let (Some(p), Some(lower), Some(upper)) = (row.p_hat.map(|e| e.mean), row.lower, row.upper) else {
            na_points += 1;
            continue;
        };
        if p > upper + slack || p < lower - slack {
            violations.push(Violation { value: row.value, p_hat: p, lower, upper });
        }
        if let Some(closed) = row.p_succ_closed {
            let dev = (p - closed).abs();
            max_dev = Some(max_dev.map_or(dev, |m| m.max(dev)));
        }
    }
    ComparisonReport {
        sweep: sweep.to_string(),
        slack,
        points: rows.len(),
        na_points,
        max_closed_deviation: max_dev,
        violations,
        first: rows.first().and_then(gaps),
        last: rows.last().and_then(gaps),
    }
}

pub fn write_csv<W: Write>(out: W, rows: &[SweepRow], seeds: usize) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for row in rows {
        writer.write_record(row.csv_record(seeds))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn csv_bytes(rows: &[SweepRow], seeds: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows, seeds)?;
    Ok(buf)
}

/// Rows as a JSON array of objects keyed by [`CSV_HEADER`], with the same
/// rendered values as the CSV; `NA` cells become `null`.
pub fn write_json<W: Write>(mut out: W, rows: &[SweepRow], seeds: usize) -> Result<()> {
    out.write_all(b"[\n")?;
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = CSV_HEADER
            .iter()
            .zip(row.csv_record(seeds))
            .map(|(k, v)| format!("\"{k}\": {}", if v == "NA" { "null".to_string() } else { v }))
            .collect();
        let sep = if i + 1 == rows.len() { "" } else { "," };
        writeln!(out, "  {{{}}}{sep}", cells.join(", "))?;
    }
    out.write_all(b"]\n")?;
    Ok(())
}

pub fn write_summary<W: Write>(mut out: W, report: &ComparisonReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, report)?;
    out.write_all(b"\n")?;
    Ok(())
}
