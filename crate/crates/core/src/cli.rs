//! `succprob` command line: analyze, simulate, sweep and verify.
//!
//! Parameter precedence is flags, then the `--config` file, then the
//! built-in defaults. For `sweep` with a spec file, the spec file sits
//! between the config file and the flags.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::acceptance::{Verifier, VerifyConfig};
use crate::analytic::{self, AnalyticReport, SystemParams};
use crate::experiments::{self, Param, SweepSpec};
use crate::format::{sig, sig_opt};
use crate::plot;
use crate::simulator::{self, SimConfig, TraceWriter};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 1;
pub const EXIT_ACCEPTANCE: u8 = 2;

/// Arrival counts below this trigger a warning from `simulate`.
const MIN_ARRIVALS: u64 = 100;
const MIN_HAZARD_EVENTS: u64 = 30;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}:{line}: {reason}")]
    Config { path: String, line: usize, reason: String },
    #[error(transparent)]
    Analytic(#[from] analytic::AnalyticError),
    #[error(transparent)]
    Sim(#[from] simulator::SimError),
    #[error(transparent)]
    Experiment(#[from] experiments::ExperimentError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

pub type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Parser)]
#[command(name = "succprob", version, about = "Task-success probability for status-driven offloading")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print every analytic quantity for one scenario.
    Analyze,
    /// Run one simulation and compare it with the analytic references.
    Simulate {
        /// Write every event as a JSON line to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a default sweep by name, `all`, or a sweep spec file.
    Sweep {
        /// lambda_in, mu, c_threads, r_bar, gamma, beta, all, or a file path.
        target: String,
    },
    /// Run the acceptance criteria; exit 2 if any fails.
    Verify {
        /// Multiply every tolerance by this factor (test hook).
        #[arg(long, hide = true)]
        tolerance_scale: Option<f64>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Flat key=value file with defaults for the flags below.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Task arrival rate [1/s] (default 40).
    #[arg(long, global = true)]
    pub lambda_in: Option<f64>,
    /// Per-thread service rate [1/s] (default 30).
    #[arg(long, global = true)]
    pub mu: Option<f64>,
    /// Number of server threads (default 2).
    #[arg(long, global = true)]
    pub threads: Option<u32>,
    /// Status generation rate [1/s] (default 20).
    #[arg(long, global = true)]
    pub update_rate: Option<f64>,
    /// Uplink delay rate [1/s] (default 100).
    #[arg(long, global = true)]
    pub uplink: Option<f64>,
    /// Downlink delay rate [1/s] (default 100).
    #[arg(long, global = true)]
    pub downlink: Option<f64>,
    /// Simulated time [s] (default 5000).
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    /// Seed for `simulate` (default 1).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Seeds for `sweep` and `verify`: a count N meaning 1..=N, or a comma list (default 10).
    #[arg(long, global = true)]
    pub seeds: Option<String>,
    /// Output directory for `sweep` (default `.`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format: text for analyze/simulate, csv for sweep rows.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Also write an SVG chart per sweep.
    #[arg(long, global = true)]
    pub plot: bool,
    /// Reduced seeds and horizon with looser tolerances (verify).
    #[arg(long, global = true)]
    pub quick: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

impl Format {
    fn parse(s: &str) -> Option<Self> {
        <Self as ValueEnum>::from_str(s, true).ok()
    }
}

/// Values read from a `--config` or sweep spec file. `None` means unset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileSettings {
    pub lambda_in: Option<f64>,
    pub mu: Option<f64>,
    pub c_threads: Option<u32>,
    pub r_bar: Option<f64>,
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub plot: Option<bool>,
    // Sweep spec files only.
    pub name: Option<String>,
    pub param: Option<Param>,
    pub grid: Option<Vec<f64>>,
    pub allow_out_of_range: Option<bool>,
}

const RUN_KEYS: [&str; 12] = [
    "lambda_in", "mu", "c_threads", "r_bar", "gamma", "beta", "horizon", "seed", "seeds", "out", "format", "plot",
];
const SWEEP_KEYS: [&str; 4] = ["name", "param", "grid", "allow_out_of_range"];

fn parse_seeds(s: &str) -> std::result::Result<Vec<u64>, String> {
    let s = s.trim();
    if !s.contains(',') {
        let n: u64 = s.parse().map_err(|_| format!("expected a seed count or comma list, got `{s}`"))?;
        if n == 0 {
            return Err("seed count must be at least 1".into());
        }
        return Ok((1..=n).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|_| format!("bad seed `{}`", t.trim())))
        .collect()
}

/// `a,b,c` or `lo:hi:n` (n evenly spaced points).
fn parse_grid(s: &str) -> std::result::Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    if let [lo, hi, n] = parts[..] {
        let lo: f64 = lo.parse().map_err(|_| format!("bad grid start `{lo}`"))?;
        let hi: f64 = hi.parse().map_err(|_| format!("bad grid end `{hi}`"))?;
        let n: usize = n.parse().map_err(|_| format!("bad grid size `{n}`"))?;
        return Ok(experiments::linspace(lo, hi, n));
    }
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad grid value `{}`", t.trim())))
        .collect()
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{s}`")),
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("bad number `{s}`"))
}

/// Parses flat `key = value` text. Blank lines and `#` comments are
/// skipped; unknown or repeated keys are errors.
pub fn parse_settings(text: &str, path: &str, allow_sweep_keys: bool) -> Result<FileSettings> {
    let mut s = FileSettings::default();
    let mut seen: Vec<String> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let fail = |reason: String| CliError::Config { path: path.to_string(), line: line_no, reason };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| fail(format!("expected key = value, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let known = RUN_KEYS.contains(&key) || (allow_sweep_keys && SWEEP_KEYS.contains(&key));
        if !known {
            let mut valid: Vec<&str> = RUN_KEYS.to_vec();
            if allow_sweep_keys {
                valid.extend(SWEEP_KEYS);
            }
            return Err(fail(format!("unknown key `{key}` (valid keys: {})", valid.join(", "))));
        }
        if seen.iter().any(|k| k == key) {
            return Err(fail(format!("duplicate key `{key}`")));
        }
        seen.push(key.to_string());
        let r: std::result::Result<(), String> = (|| {
            match key {
                "lambda_in" => s.lambda_in = Some(parse_num(value)?),
                "mu" => s.mu = Some(parse_num(value)?),
                "c_threads" => s.c_threads = Some(parse_num(value)?),
                "r_bar" => s.r_bar = Some(parse_num(value)?),
                "gamma" => s.gamma = Some(parse_num(value)?),
                "beta" => s.beta = Some(parse_num(value)?),
                "horizon" => s.horizon = Some(parse_num(value)?),
                "seed" => s.seed = Some(parse_num(value)?),
                "seeds" => s.seeds = Some(parse_seeds(value)?),
                "out" => s.out = Some(PathBuf::from(value)),
                "format" => s.format = Some(Format::parse(value).ok_or_else(|| format!("unknown format `{value}`"))?),
                "plot" => s.plot = Some(parse_bool(value)?),
                "name" => s.name = Some(value.to_string()),
                "param" => s.param = Some(value.parse().map_err(|e: experiments::ExperimentError| e.to_string())?),
                "grid" => s.grid = Some(parse_grid(value)?),
                "allow_out_of_range" => s.allow_out_of_range = Some(parse_bool(value)?),
                _ => unreachable!("key checked above"),
            }
            Ok(())
        })();
        r.map_err(|reason| fail(format!("{key}: {reason}")))?;
    }
    Ok(s)
}

fn read_settings(path: &Path, allow_sweep_keys: bool) -> Result<FileSettings> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_settings(&text, &path.display().to_string(), allow_sweep_keys)
}

/// Fully resolved inputs of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: SystemParams,
    pub horizon: Option<f64>,
    pub seed: u64,
    pub seeds: Option<Vec<u64>>,
    pub out: PathBuf,
    pub format: Option<Format>,
    pub plot: bool,
    pub quick: bool,
}

impl RunConfig {
    /// Layers `files` (lowest first) under the flags in `args`.
    pub fn resolve(args: &CommonArgs, files: &[&FileSettings]) -> Result<Self> {
        let mut p = SystemParams::default();
        let mut cfg = RunConfig {
            params: p,
            horizon: None,
            seed: 1,
            seeds: None,
            out: PathBuf::from("."),
            format: None,
            plot: false,
            quick: args.quick,
        };
        for f in files {
            p.lambda_in = f.lambda_in.unwrap_or(p.lambda_in);
            p.mu = f.mu.unwrap_or(p.mu);
            p.c_threads = f.c_threads.unwrap_or(p.c_threads);
            p.r_bar = f.r_bar.unwrap_or(p.r_bar);
            p.gamma = f.gamma.unwrap_or(p.gamma);
            p.beta = f.beta.unwrap_or(p.beta);
            cfg.horizon = f.horizon.or(cfg.horizon);
            cfg.seed = f.seed.unwrap_or(cfg.seed);
            cfg.seeds = f.seeds.clone().or(cfg.seeds);
            cfg.out = f.out.clone().unwrap_or(cfg.out);
            cfg.format = f.format.or(cfg.format);
            cfg.plot = f.plot.unwrap_or(cfg.plot);
        }
        p.lambda_in = args.lambda_in.unwrap_or(p.lambda_in);
        p.mu = args.mu.unwrap_or(p.mu);
        p.c_threads = args.threads.unwrap_or(p.c_threads);
        p.r_bar = args.update_rate.unwrap_or(p.r_bar);
        p.gamma = args.uplink.unwrap_or(p.gamma);
        p.beta = args.downlink.unwrap_or(p.beta);
        cfg.params = p;
        cfg.horizon = args.horizon.or(cfg.horizon);
        cfg.seed = args.seed.unwrap_or(cfg.seed);
        if let Some(s) = &args.seeds {
            cfg.seeds = Some(parse_seeds(s).map_err(|e| CliError::Usage(format!("--seeds: {e}")))?);
        }
        cfg.out = args.out.clone().unwrap_or(cfg.out);
        cfg.format = args.format.or(cfg.format);
        cfg.plot = args.plot || cfg.plot;
        Ok(cfg)
    }
}

fn analytic_rows(r: &AnalyticReport) -> Vec<(&'static str, String, &'static str)> {
    let p = &r.params;
    vec![
        ("lambda_in", sig(p.lambda_in), "1/s"),
        ("mu", sig(p.mu), "1/s"),
        ("c_threads", p.c_threads.to_string(), "threads"),
        ("r_bar", sig(p.r_bar), "1/s"),
        ("gamma", sig(p.gamma), "1/s"),
        ("beta", sig(p.beta), "1/s"),
        ("lambda_star", sig(r.lambda_star), "1/s"),
        ("rho", sig(r.rho), "erlang"),
        ("blocking", sig(r.blocking), "prob"),
        ("p_idle", sig(r.p_idle), "prob"),
        ("p_one_idle", sig(r.p_one_idle), "prob"),
        ("hazard", sig(r.hazard), "1/s"),
        ("mean_gap", sig(r.mean_gap), "s"),
        ("second_moment_gap", sig(r.second_moment_gap), "s^2"),
        ("mean_age", sig(r.mean_age), "s"),
        ("mean_aoi", sig(r.mean_aoi), "s"),
        ("g_staleness", sig_opt(r.g_staleness), "factor"),
        ("g_uplink", sig(r.g_uplink), "factor"),
        ("g_downlink", sig(r.g_downlink), "factor"),
        ("p_succ_closed", sig(r.p_succ_closed), "prob"),
        ("p_succ_transform", sig_opt(r.p_succ_transform), "prob"),
        ("upper", sig(r.upper), "prob"),
        ("lower", sig(r.lower), "prob"),
    ]
}

fn json_value(v: &str) -> &str {
    if v == "NA" {
        "null"
    } else {
        v
    }
}

/// Renders `(key, value, unit)` triples. JSON keeps values numeric; its
/// units live in a parallel object.
fn render_table(rows: &[(&str, String, &str)], format: Format) -> String {
    match format {
        Format::Text => {
            let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
            rows.iter()
                .map(|(k, v, u)| format!("{}\n", format!("{k:<width$}  {v:>12}  {u}").trim_end()))
                .collect()
        }
        Format::Csv => {
            let mut s = String::from("quantity,value,unit\n");
            for (k, v, u) in rows {
                s.push_str(&format!("{k},{v},{u}\n"));
            }
            s
        }
        Format::Json => {
            let values: Vec<String> = rows.iter().map(|(k, v, _)| format!("  \"{k}\": {}", json_value(v))).collect();
            let units: Vec<String> = rows.iter().map(|(k, _, u)| format!("    \"{k}\": \"{u}\"")).collect();
            format!("{{\n{},\n  \"units\": {{\n{}\n  }}\n}}\n", values.join(",\n"), units.join(",\n"))
        }
    }
}

pub fn cmd_analyze(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let report = analytic::analyze(&cfg.params)?;
    let text = render_table(&analytic_rows(&report), cfg.format.unwrap_or(Format::Text));
    write_out(out, &text)
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))
}

pub fn cmd_simulate(cfg: &RunConfig, trace: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let sim = SimConfig::new(cfg.params, cfg.horizon.unwrap_or(simulator::DEFAULT_HORIZON), cfg.seed)?;
    let stats = match trace {
        Some(path) => {
            let file = fs::File::create(path).map_err(io_err(path))?;
            let mut writer = TraceWriter::new(io::BufWriter::new(file));
            let stats = simulator::run_simulation_observed(&sim, &mut writer)?;
            writer.into_inner().flush().map_err(io_err(path))?;
            stats
        }
        None => simulator::run_simulation(&sim)?,
    };
    let report = analytic::analyze(&cfg.params).ok();
    let c = &stats.counters;
    let reference = |f: fn(&AnalyticReport) -> f64| sig_opt(report.as_ref().map(f));

    let mut rows: Vec<(&str, String, &str)> = vec![
        ("horizon", sig(sim.horizon), "s"),
        ("seed", sim.seed.to_string(), ""),
        ("n_arr", c.n_arr.to_string(), "tasks"),
        ("n_fwd", c.n_fwd.to_string(), "tasks"),
        ("n_succ", c.n_succ.to_string(), "tasks"),
        ("n_drop_ap", c.n_drop_ap.to_string(), "tasks"),
        ("n_block_server", c.n_block_server.to_string(), "tasks"),
        ("hazard_events", c.hazard_events.to_string(), "events"),
        ("status_generated", c.status_generated.to_string(), "updates"),
        ("status_refreshed", c.status_refreshed.to_string(), "updates"),
        ("empirical_p_succ", sig(stats.empirical_p_succ()), "prob"),
        ("p_succ_closed", reference(|r| r.p_succ_closed), "prob"),
        ("upper", reference(|r| r.upper), "prob"),
        ("lower", reference(|r| r.lower), "prob"),
        ("empirical_lambda", sig(stats.empirical_lambda()), "1/s"),
        ("lambda_star", reference(|r| r.lambda_star), "1/s"),
        ("empirical_hazard", sig(stats.empirical_hazard()), "1/s"),
        ("hazard", reference(|r| r.hazard), "1/s"),
    ];
    if cfg.format.unwrap_or(Format::Text) == Format::Text {
        for r in &mut rows {
            if r.1 == "NA" {
                r.2 = "";
            }
        }
    }
    write_out(out, &render_table(&rows, cfg.format.unwrap_or(Format::Text)))?;

    let mut warn = |msg: String| err.write_all(format!("warning: {msg}\n").as_bytes()).map_err(io_err(Path::new("<stderr>")));
    if c.n_arr < MIN_ARRIVALS {
        warn(format!("insufficient data: only {} task arrivals; empirical_p_succ is unreliable", c.n_arr))?;
    }
    if c.n_fwd < MIN_ARRIVALS {
        warn(format!("insufficient data: only {} forwarded tasks; empirical_lambda is unreliable", c.n_fwd))?;
    }
    if c.hazard_events < MIN_HAZARD_EVENTS {
        warn(format!("insufficient data: only {} hazard events; empirical_hazard is unreliable", c.hazard_events))?;
    }
    Ok(())
}

const SWEEP_NAMES: [&str; 7] = ["lambda_in", "mu", "c_threads", "r_bar", "gamma", "beta", "all"];

/// Default sweeps named by `target`, or the one described by a spec file.
fn sweep_specs(target: &str, args: &CommonArgs, config: &FileSettings) -> Result<(Vec<SweepSpec>, RunConfig)> {
    let named: Vec<Param> = if target == "all" {
        Param::ALL.to_vec()
    } else if let Ok(p) = target.parse::<Param>() {
        vec![p]
    } else {
        Vec::new()
    };
    if !named.is_empty() {
        let run = RunConfig::resolve(args, &[config])?;
        let specs = named
            .into_iter()
            .map(|p| SweepSpec {
                base: run.params,
                horizon: run.horizon.unwrap_or(simulator::DEFAULT_HORIZON),
                seeds: run.seeds.clone().unwrap_or_else(experiments::default_seeds),
                ..SweepSpec::for_param(p)
            })
            .collect();
        return Ok((specs, run));
    }

    let path = Path::new(target);
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "unknown sweep `{target}`; expected one of {} or a sweep spec file",
            SWEEP_NAMES.join(", ")
        )));
    }
    let file = read_settings(path, true)?;
    let fail = |reason: &str| CliError::Config { path: target.to_string(), line: 0, reason: reason.to_string() };
    let varied = file.param.ok_or_else(|| fail("missing key `param`"))?;
    let run = RunConfig::resolve(args, &[config, &file])?;
    let default = SweepSpec::for_param(varied);
    let spec = SweepSpec {
        name: file.name.clone().unwrap_or_else(|| {
            path.file_stem().map_or_else(|| "sweep".to_string(), |s| s.to_string_lossy().into_owned())
        }),
        varied,
        grid: file.grid.clone().unwrap_or(default.grid),
        base: run.params,
        horizon: run.horizon.unwrap_or(simulator::DEFAULT_HORIZON),
        seeds: run.seeds.clone().unwrap_or_else(experiments::default_seeds),
        allow_out_of_range: file.allow_out_of_range.unwrap_or(false),
    };
    if spec.name.is_empty() || spec.name.contains(['/', '\\']) {
        return Err(fail("`name` must be a plain file stem"));
    }
    Ok((vec![spec], run))
}

pub fn cmd_sweep(target: &str, args: &CommonArgs, config: &FileSettings, out: &mut dyn Write) -> Result<()> {
    let (specs, run) = sweep_specs(target, args, config)?;
    let format = match run.format {
        None | Some(Format::Csv) => Format::Csv,
        Some(Format::Json) => Format::Json,
        Some(Format::Text) => return Err(CliError::Usage("sweep writes csv or json rows, not text".into())),
    };
    for spec in &specs {
        spec.validate()?;
    }
    fs::create_dir_all(&run.out).map_err(io_err(&run.out))?;
    for spec in &specs {
        let rows = experiments::run_sweep(spec)?;
        let seeds = spec.seeds.len();
        let (ext, body) = match format {
            Format::Json => {
                let mut buf = Vec::new();
                experiments::write_json(&mut buf, &rows, seeds)?;
                ("json", buf)
            }
            _ => ("csv", experiments::csv_bytes(&rows, seeds)?),
        };
        let data_path = run.out.join(format!("{}.{ext}", spec.name));
        fs::write(&data_path, body).map_err(io_err(&data_path))?;

        let report = experiments::check_enclosure(&spec.name, &rows, experiments::DEFAULT_SLACK);
        let summary_path = run.out.join(format!("{}-summary.json", spec.name));
        let mut summary = Vec::new();
        experiments::write_summary(&mut summary, &report)?;
        fs::write(&summary_path, summary).map_err(io_err(&summary_path))?;

        let mut line = format!(
            "{}: {} points, {} seeds, {} violations, {} NA -> {}",
            spec.name,
            rows.len(),
            seeds,
            report.violations.len(),
            report.na_points,
            data_path.display()
        );
        if run.plot {
            let svg_path = run.out.join(format!("{}.svg", spec.name));
            fs::write(&svg_path, plot::sweep_svg(spec.varied.name(), &rows)).map_err(io_err(&svg_path))?;
            line.push_str(&format!(", {}", svg_path.display()));
        }
        line.push('\n');
        write_out(out, &line)?;
    }
    Ok(())
}

/// Returns whether every criterion passed.
pub fn cmd_verify(run: &RunConfig, tolerance_scale: Option<f64>, out: &mut dyn Write) -> Result<bool> {
    let mut config = if run.quick { VerifyConfig::quick() } else { VerifyConfig::default() };
    if let Some(h) = run.horizon {
        config.horizon = h;
    }
    if let Some(s) = &run.seeds {
        config.seeds = s.clone();
    }
    if let Some(f) = tolerance_scale {
        config.tolerances = config.tolerances.scale_all(f);
    }
    let mode = if config.quick { "quick" } else { "full" };
    write_out(
        out,
        &format!("mode: {mode} ({} seeds, horizon {} s)\n", config.seeds.len(), sig(config.horizon)),
    )?;
    let verifier = Verifier::new(config);
    let outcomes = verifier.run_all();
    for o in &outcomes {
        write_out(out, &format!("{o}\n"))?;
    }
    let passed = outcomes.iter().filter(|o| o.passed()).count();
    write_out(out, &format!("{passed}/{} criteria passed\n", outcomes.len()))?;
    Ok(passed == outcomes.len())
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8> {
    let config = match &cli.common.config {
        Some(path) => read_settings(path, false)?,
        None => FileSettings::default(),
    };
    match &cli.command {
        Command::Analyze => cmd_analyze(&RunConfig::resolve(&cli.common, &[&config])?, out)?,
        Command::Simulate { trace } => {
            cmd_simulate(&RunConfig::resolve(&cli.common, &[&config])?, trace.as_deref(), out, err)?
        }
        Command::Sweep { target } => cmd_sweep(target, &cli.common, &config, out)?,
        Command::Verify { tolerance_scale } => {
            let run = RunConfig::resolve(&cli.common, &[&config])?;
            if !cmd_verify(&run, *tolerance_scale, out)? {
                return Ok(EXIT_ACCEPTANCE);
            }
        }
    }
    Ok(EXIT_OK)
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INVALID
        }
    }
}
