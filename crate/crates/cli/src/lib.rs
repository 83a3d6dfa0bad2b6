//! Command-line front end: scenario files in, JSON or CSV out.
//!
//! Exit codes: 0 success, 1 usage error (bad flags, unreadable or
//! unwritable files), 2 malformed or inadmissible input, 3 numerical
//! failure. Diagnostics go to stderr only.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use gaimd::experiments::{frontier_report, log_grid, parallel_sweep, write_frontier_csv, write_sweep_csv};
use gaimd::relaxed::solve_relaxed;
use gaimd::sim::{simulate_index, simulate_threshold, write_events_csv, RunConfig, StopRule, TrajectoryStats};
use gaimd::steady::{
    characteristic_residuals, fixed_point_closed_form, iterate_to_fixed_point, linearization, SortedProfile,
};
use gaimd::{Scenario, UserParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

const DEFAULT_MAX_EVENTS: usize = 1000;

/// Optional run-length settings carried by a scenario file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_events: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transient_fraction: Option<f64>,
}

/// On-disk scenario schema. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub alpha: f64,
    pub capacity: f64,
    pub users: Vec<UserParams>,
    /// Defaults to `capacity / (2N)` for every user.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_rates: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSettings>,
}

impl ScenarioFile {
    pub fn to_scenario(&self) -> Result<Scenario, CliError> {
        let n = self.users.len();
        let rates = self
            .initial_rates
            .clone()
            .unwrap_or_else(|| vec![self.capacity / (2.0 * n.max(1) as f64); n]);
        Scenario::new(self.users.clone(), self.alpha, self.capacity, rates)
            .map_err(|e| CliError::Input(format!("invalid {}: {e}", e.field())))
    }
}

/// Every data output is wrapped in this envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEnvelope<R = serde_json::Value> {
    pub command: String,
    pub inputs: serde_json::Value,
    pub results: R,
    pub tool_version: String,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Input(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl From<gaimd::Error> for CliError {
    fn from(e: gaimd::Error) -> Self {
        match e {
            gaimd::Error::Validation(v) => Self::Input(format!("invalid {}: {v}", v.field())),
            e if e.is_numerical() => Self::Numerical(e.to_string()),
            e => Self::Input(e.to_string()),
        }
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario_file(path: &Path) -> Result<ScenarioFile, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let file: ScenarioFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    file.to_scenario()?;
    Ok(file)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    load_scenario_file(path)?.to_scenario()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Policy {
    Threshold,
    Index,
}

#[derive(Debug, Parser)]
#[command(name = "gaimd", version, about = "Threshold and index policies for generalized AIMD rate control")]
struct Cli {
    /// Scenario file (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Write data here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Output format; defaults to json, or csv for sweep and frontier.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Relative tolerance for root finding and fixed-point iteration.
    #[arg(long, global = true, default_value_t = 1e-12)]
    tol: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimal thresholds and multiplier for the relaxed problem.
    Analyze,
    /// Exact event-driven simulation.
    Simulate {
        #[arg(long, value_enum, default_value = "index")]
        policy: Policy,
        /// Write the impulse log as CSV.
        #[arg(long, value_name = "PATH")]
        events: Option<PathBuf>,
        #[arg(long, conflicts_with = "max_time")]
        max_events: Option<usize>,
        #[arg(long)]
        max_time: Option<f64>,
        /// Fraction of events discarded before the windowed averages.
        #[arg(long)]
        transient_fraction: Option<f64>,
    },
    /// Periodic profile of the index policy (homogeneous scenarios).
    FixedPoint {
        /// Also iterate the event map from the scenario's initial rates.
        #[arg(long)]
        iterate: bool,
        #[arg(long, default_value_t = 1_000_000)]
        max_iter: usize,
    },
    /// Spectrum of the linearized event map (homogeneous scenarios).
    Stability,
    /// Index policy versus relaxed optimum over population sizes.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64,128,256,512")]
        n_list: Vec<usize>,
        /// Defaults to the scenario capacity divided by its user count.
        #[arg(long)]
        per_user_capacity: Option<f64>,
        /// Which scenario user to replicate.
        #[arg(long, default_value_t = 0)]
        user: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Fairness/load trade-off curve of one user.
    Frontier {
        /// Comma-separated increasing multipliers; defaults to 100
        /// log-spaced values in [0.01, 100].
        #[arg(long, value_delimiter = ',')]
        lambda_grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        user: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Analyze => "analyze",
            Self::Simulate { .. } => "simulate",
            Self::FixedPoint { .. } => "fixed-point",
            Self::Stability => "stability",
            Self::Sweep { .. } => "sweep",
            Self::Frontier { .. } => "frontier",
        }
    }

    fn default_format(&self) -> Format {
        match self {
            Self::Sweep { .. } | Self::Frontier { .. } => Format::Csv,
            _ => Format::Json,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    if !(cli.tol > 0.0 && cli.tol < 1e-3) {
        return Err(CliError::Usage(format!("--tol must lie in (0, 1e-3), got {}", cli.tol)));
    }
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("{} needs --config PATH", cli.command.name())))?;
    let file = load_scenario_file(path)?;
    let scenario = file.to_scenario()?;
    let format = cli.format.unwrap_or(cli.command.default_format());
    let name = cli.command.name();

    let data = match &cli.command {
        Command::Analyze => {
            require_json(format, name)?;
            envelope(name, &file, &solve_relaxed(&scenario)?)?
        }
        Command::Simulate { policy, events, max_events, max_time, transient_fraction } => {
            require_json(format, name)?;
            let settings = file.run.unwrap_or_default();
            let stop = match (max_events, max_time) {
                (Some(n), _) => StopRule::MaxEvents(*n),
                (_, Some(t)) => StopRule::MaxTime(*t),
                (None, None) => match (settings.max_events, settings.max_time) {
                    (Some(_), Some(_)) => {
                        return Err(CliError::Input("invalid run: set max_events or max_time, not both".into()))
                    }
                    (Some(n), None) => StopRule::MaxEvents(n),
                    (None, Some(t)) => StopRule::MaxTime(t),
                    (None, None) => StopRule::MaxEvents(DEFAULT_MAX_EVENTS),
                },
            };
            let transient = transient_fraction.or(settings.transient_fraction).unwrap_or(0.5);
            let mut config = RunConfig::new(stop);
            config.root_tol = cli.tol;
            if events.is_some() {
                config = config.with_events();
            }
            let (stats, thresholds) = match policy {
                Policy::Index => (simulate_index(&scenario, &config)?, None),
                Policy::Threshold => {
                    let relaxed = solve_relaxed(&scenario)?;
                    (simulate_threshold(&scenario, &relaxed.thresholds, &config)?, Some(relaxed.thresholds))
                }
            };
            if let (Some(path), Some(log)) = (events, stats.event_log.as_ref()) {
                let mut buf = Vec::new();
                write_events_csv(log, &mut buf).map_err(|e| CliError::Usage(e.to_string()))?;
                write_file(path, &buf)?;
            }
            envelope(name, &file, &SimulationReport::new(&stats, *policy, thresholds, transient)?)?
        }
        Command::FixedPoint { iterate, max_iter } => {
            require_json(format, name)?;
            let user = homogeneous_user(&scenario)?;
            let closed = fixed_point_closed_form(scenario.len(), &user, scenario.capacity)?;
            let iterated = if *iterate {
                let start = rescaled_start(&scenario)?;
                let (fp, trace) = iterate_to_fixed_point(&start, &user, cli.tol * scenario.capacity, *max_iter)?;
                Some(serde_json::json!({
                    "fixed_point": fp,
                    "trace": trace,
                    "distance_to_closed_form": fp.profile.distance(&closed.profile),
                }))
            } else {
                None
            };
            let results = serde_json::json!({ "closed_form": closed, "iterated": iterated });
            envelope(name, &file, &results)?
        }
        Command::Stability => {
            require_json(format, name)?;
            let user = homogeneous_user(&scenario)?;
            let fp = fixed_point_closed_form(scenario.len(), &user, scenario.capacity)?;
            let report = linearization(&fp, &user)?;
            let results = serde_json::json!({
                "report": report.export(),
                "structural_zero": report.structural_zero,
                "characteristic_residuals": characteristic_residuals(&report),
            });
            envelope(name, &file, &results)?
        }
        Command::Sweep { n_list, per_user_capacity, user, jobs } => {
            let u = pick_user(&scenario, *user)?;
            let c1 = per_user_capacity.unwrap_or(scenario.capacity / scenario.len() as f64);
            let rows = parallel_sweep(&u, scenario.alpha, c1, n_list, *jobs)?;
            match format {
                Format::Csv => csv_bytes(|buf| write_sweep_csv(&rows, buf))?,
                Format::Json => envelope(name, &file, &rows)?,
            }
        }
        Command::Frontier { lambda_grid, user } => {
            let u = pick_user(&scenario, *user)?;
            let grid = match lambda_grid {
                Some(g) => g.clone(),
                None => log_grid(1e-2, 1e2, 100)?,
            };
            let points = frontier_report(&u, scenario.alpha, &grid)?;
            match format {
                Format::Csv => csv_bytes(|buf| write_frontier_csv(&points, buf))?,
                Format::Json => envelope(name, &file, &points)?,
            }
        }
    };

    match &cli.output {
        Some(path) => write_file(path, &data),
        None => io::stdout()
            .lock()
            .write_all(&data)
            .map_err(|e| CliError::Usage(format!("cannot write to stdout: {e}"))),
    }
}

/// Summary of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub policy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    pub horizon: f64,
    pub events: usize,
    pub repair_events: usize,
    pub fairness_total: f64,
    pub load_total: f64,
    pub average_fairness: f64,
    pub average_load: f64,
    pub transient_fraction: f64,
    pub window_start: f64,
    pub window_fairness: f64,
    pub window_load: f64,
    pub final_rates: Vec<f64>,
}

impl SimulationReport {
    fn new(
        stats: &TrajectoryStats,
        policy: Policy,
        thresholds: Option<Vec<f64>>,
        transient: f64,
    ) -> Result<Self, CliError> {
        let window = stats.window(transient)?;
        Ok(Self {
            policy: match policy {
                Policy::Threshold => "threshold".into(),
                Policy::Index => "index".into(),
            },
            thresholds,
            horizon: stats.horizon,
            events: stats.events,
            repair_events: stats.repair_events,
            fairness_total: stats.fairness_total,
            load_total: stats.load_total,
            average_fairness: stats.average_fairness(),
            average_load: stats.average_load(),
            transient_fraction: transient,
            window_start: window.start_time,
            window_fairness: window.fairness,
            window_load: window.load,
            final_rates: stats.final_rates.clone(),
        })
    }
}

fn require_json(format: Format, command: &str) -> Result<(), CliError> {
    match format {
        Format::Json => Ok(()),
        Format::Csv => Err(CliError::Usage(format!("{command} only supports --format json"))),
    }
}

fn homogeneous_user(scenario: &Scenario) -> Result<UserParams, CliError> {
    if !scenario.is_homogeneous() {
        return Err(CliError::Input("this command needs identical users".into()));
    }
    let user = scenario.users[0];
    if user.is_exponential() {
        return Err(CliError::Input("invalid users[0].gamma: this command needs gamma < 1".into()));
    }
    Ok(user)
}

fn pick_user(scenario: &Scenario, index: usize) -> Result<UserParams, CliError> {
    scenario
        .users
        .get(index)
        .copied()
        .ok_or_else(|| CliError::Usage(format!("--user {index} out of range ({} users)", scenario.len())))
}

/// Initial rates sorted and rescaled to sum to capacity.
fn rescaled_start(scenario: &Scenario) -> Result<SortedProfile, CliError> {
    let total: f64 = scenario.initial_rates.iter().sum();
    let mut rates: Vec<f64> = scenario.initial_rates.iter().map(|x| x / total * scenario.capacity).collect();
    rates.sort_by(|a, b| b.total_cmp(a));
    let drift = scenario.capacity - rates.iter().sum::<f64>();
    rates[0] += drift;
    Ok(SortedProfile::new(rates, scenario.capacity)?)
}

fn envelope<R: Serialize>(command: &str, file: &ScenarioFile, results: &R) -> Result<Vec<u8>, CliError> {
    let out = OutputEnvelope {
        command: command.to_owned(),
        inputs: serde_json::to_value(file).map_err(|e| CliError::Usage(e.to_string()))?,
        results,
        tool_version: TOOL_VERSION.to_owned(),
    };
    let mut bytes = serde_json::to_vec_pretty(&out).map_err(|e| CliError::Usage(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_bytes<F, E>(write: F) -> Result<Vec<u8>, CliError>
where
    F: FnOnce(&mut Vec<u8>) -> Result<(), E>,
    E: std::fmt::Display,
{
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(buf)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}
