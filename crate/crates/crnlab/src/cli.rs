//! The `crnlab` command line.
//!
//! Exit codes: 0 success, 1 runtime failure (for example a propensity
//! overflow or too many replicas hitting a limit), 2 input error, 3 an
//! experiment threshold was violated, 4 a precondition of the requested
//! analysis does not hold.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::harness::{load_experiment, run_experiment, ExperimentResult, HarnessError, RunError};
use crate::network::{CoreError, ReactionNetwork, StateVector};
use crate::parser::{parse_network, ModelSource};
use crate::sim::{simulate, SimConfig, SimError, Thinning, DEFAULT_MAX_EVENTS};
use crate::structural::{
    analyze, deterministic_equilibrium, stationarity_residual, ProductFormMeasure, StructuralError, Window,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_THRESHOLD: u8 = 3;
pub const EXIT_PRECONDITION: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "crnlab", version, about = "Analyze and simulate stochastic chemical reaction networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the structural report of a model as JSON.
    Analyze {
        model: PathBuf,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one trajectory and write it as CSV.
    Simulate {
        model: PathBuf,
        /// Initial state, comma separated (one count per species).
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        init: Vec<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_time: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_EVENTS)]
        max_events: u64,
        /// Keep every k-th event instead of every event.
        #[arg(long, conflicts_with = "grid")]
        every: Option<u64>,
        /// Record the state on a time grid of this step instead of at events.
        #[arg(long)]
        grid: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment configuration and check its thresholds.
    Experiment {
        config: PathBuf,
        /// JSON result file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a per-N (or per-state) CSV table here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Product-form stationary measure on a window, with its balance residual.
    Stationary {
        model: PathBuf,
        /// A state of the class to normalize on, comma separated (default: all ones).
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        base_state: Option<Vec<u64>>,
        /// Side of the window {0, ..., side-1}^n.
        #[arg(long, default_value_t = 30)]
        window: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Error carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }

    fn input(message: impl Into<String>) -> Self {
        CliError::new(EXIT_INPUT, message)
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::Config(_) | SimError::Rule(_) | SimError::Core(CoreError::DimensionMismatch { .. }) => EXIT_INPUT,
            _ => EXIT_FAILURE,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        let code = match &e {
            RunError::Config(_) => EXIT_INPUT,
            RunError::Harness(HarnessError::Spec(_) | HarnessError::Limit(_)) => EXIT_INPUT,
            RunError::Harness(HarnessError::Sim(s)) => CliError::from(s.clone()).code,
            RunError::Harness(HarnessError::Core(CoreError::DimensionMismatch { .. })) => EXIT_INPUT,
            RunError::Harness(_) => EXIT_FAILURE,
        };
        CliError::new(code, e.to_string())
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze { model, out } => {
            let net = read_model(&model)?;
            write_json(out.as_deref(), &analyze(&net))
        }
        Command::Simulate { model, init, seed, max_time, max_events, every, grid, out } => {
            let net = read_model(&model)?;
            if init.len() != net.n_species() {
                return Err(CliError::input(format!(
                    "--init has {} values, model has {} species",
                    init.len(),
                    net.n_species()
                )));
            }
            let thinning = match (every, grid) {
                (Some(k), _) => Thinning::EveryK { k },
                (_, Some(dt)) => Thinning::OnGrid { dt },
                _ => Thinning::EveryEvent,
            };
            let cfg = SimConfig::new(seed, max_time).with_max_events(max_events).with_thinning(thinning);
            let record = simulate(&net, &StateVector(init), &cfg)?;
            let mut w = open_output(out.as_deref())?;
            record.write_csv(net.n_species(), &mut w).map_err(|e| io_failure(out.as_deref(), e))?;
            w.flush().map_err(|e| io_failure(out.as_deref(), e))
        }
        Command::Experiment { config, out, csv, jobs } => {
            if let Some(j) = jobs {
                if j == 0 {
                    return Err(CliError::input("--jobs must be at least 1"));
                }
                // Only fails if the global pool was already built, which keeps the first size.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
            }
            let (cfg, base) = load_experiment(&config).map_err(RunError::from)?;
            let outcome = run_experiment(&cfg, &base)?;
            if let Some(path) = csv.as_deref() {
                let file = File::create(path).map_err(|e| io_failure(Some(path), e))?;
                match &outcome.result {
                    ExperimentResult::Comparison(c) => c.write_csv(file),
                    ExperimentResult::Drift(d) => d.write_csv(file),
                }
                .map_err(|e| io_failure(Some(path), e))?;
            }
            write_json(out.as_deref(), &outcome)?;
            if outcome.passed {
                Ok(())
            } else {
                Err(CliError::new(EXIT_THRESHOLD, format!("thresholds violated: {}", outcome.violations.join("; "))))
            }
        }
        Command::Stationary { model, base_state, window, out } => {
            let net = read_model(&model)?;
            let n = net.n_species();
            let base = base_state.unwrap_or_else(|| vec![1; n]);
            if base.len() != n {
                return Err(CliError::input(format!("--base-state has {} values, model has {n} species", base.len())));
            }
            let report = stationary(&net, &base, window).map_err(|e| match e {
                StructuralError::Precondition(_) => CliError::new(EXIT_PRECONDITION, e.to_string()),
                StructuralError::EmptyWindow => CliError::input(e.to_string()),
                _ => CliError::new(EXIT_FAILURE, e.to_string()),
            })?;
            write_json(out.as_deref(), &report)
        }
    }
}

#[derive(Debug, Serialize)]
struct StationaryReport {
    equilibrium: Vec<f64>,
    base_state: Vec<u64>,
    window: Window,
    residual: f64,
    boundary_leak: f64,
    normalizable: bool,
    states: Vec<StationaryState>,
}

#[derive(Debug, Serialize)]
struct StationaryState {
    state: Vec<u64>,
    probability: f64,
}

fn stationary(net: &ReactionNetwork, base: &[u64], side: u64) -> Result<StationaryReport, StructuralError> {
    let c = deterministic_equilibrium(net, None)?;
    let measure = ProductFormMeasure::new(&c)?;
    let window = Window::cube(net.n_species(), side);
    let truncated = measure.truncate(net, base, &window)?;
    let residual = stationarity_residual(net, &measure, &window)?;
    Ok(StationaryReport {
        equilibrium: c,
        base_state: base.to_vec(),
        residual,
        boundary_leak: truncated.boundary_leak,
        normalizable: truncated.normalizable,
        states: truncated
            .states
            .into_iter()
            .map(|(state, probability)| StationaryState { state, probability })
            .collect(),
        window,
    })
}

fn read_model(path: &Path) -> Result<ReactionNetwork, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let name = path.display().to_string();
    parse_network(&ModelSource { text, name: name.clone() }).map_err(|e| CliError::input(format!("{name}:{e}")))
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_failure(Some(p), e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut w = open_output(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_failure(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| io_failure(path, e))
}

fn io_failure(path: Option<&Path>, e: impl std::fmt::Display) -> CliError {
    let target = path.map(|p| p.display().to_string()).unwrap_or_else(|| "stdout".into());
    CliError::new(EXIT_FAILURE, format!("writing {target}: {e}"))
}
