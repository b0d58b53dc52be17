//! Command-line front end for the retune simulator.
//!
//! Parses a TOML scenario, runs it, and emits CSV files. Exit codes:
//! 0 success, 1 scenario/flag validation problem, 2 runtime fault.

pub mod config;
pub mod output;
pub mod study;

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use retune_core::sim::{run_scenario, ChannelSummary, Scenario, SimError};

#[derive(Debug, Parser)]
#[command(
    name = "retune",
    about = "Multi-channel PID control simulator with swarm-based self-tuning",
    version
)]
pub struct CliArgs {
    /// Scenario file (TOML); omitted runs the stock three-channel setup
    #[arg(long)]
    pub scenario: Option<PathBuf>,

    /// Directory for emitted files
    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    /// Override the scenario seed
    #[arg(long)]
    pub seed: Option<u64>,

    /// Override the simulation step in seconds
    #[arg(long)]
    pub dt: Option<f64>,

    /// Outputs to write (comma separated); default telemetry,events,metrics
    #[arg(long, value_delimiter = ',')]
    pub emit: Option<Vec<Emit>>,

    /// Particle counts for the convergence study (comma separated);
    /// providing this turns the study output on
    #[arg(long = "study-particles", value_delimiter = ',')]
    pub study_particles: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Emit {
    #[value(name = "telemetry")]
    Telemetry,
    #[value(name = "events")]
    Events,
    #[value(name = "metrics")]
    Metrics,
    #[value(name = "swarm_trace")]
    SwarmTrace,
    #[value(name = "convergence_study")]
    ConvergenceStudy,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad input: scenario file problems, invalid values, flag misuse.
    Validation(String),
    /// The run itself failed: simulation fault or output I/O.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

/// What a successful run produced.
pub struct RunOutput {
    pub summaries: Vec<ChannelSummary>,
    pub written: Vec<PathBuf>,
}

/// Loads the scenario with overrides applied.
pub fn load_scenario(args: &CliArgs) -> Result<Scenario, CliError> {
    let text = match &args.scenario {
        Some(path) => fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read scenario {}: {e}", path.display()))
        })?,
        None => String::new(),
    };
    let mut scenario =
        config::parse_scenario(&text).map_err(|e| CliError::Validation(e.to_string()))?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
        scenario.pso.seed = seed;
    }
    if let Some(dt) = args.dt {
        scenario.dt = dt;
    }
    scenario
        .validate()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(scenario)
}

/// Runs the scenario and writes the requested outputs.
pub fn run(args: &CliArgs) -> Result<RunOutput, CliError> {
    let scenario = load_scenario(args)?;

    let mut emit = args
        .emit
        .clone()
        .unwrap_or_else(|| vec![Emit::Telemetry, Emit::Events, Emit::Metrics]);
    if args.study_particles.is_some() && !emit.contains(&Emit::ConvergenceStudy) {
        emit.push(Emit::ConvergenceStudy);
    }
    if emit.contains(&Emit::ConvergenceStudy) && args.study_particles.is_none() {
        return Err(CliError::Validation(String::from(
            "--study-particles is required when emitting convergence_study",
        )));
    }

    let result = run_scenario(&scenario).map_err(|e| match e {
        SimError::Validation(v) => CliError::Validation(v.to_string()),
        other => CliError::Runtime(other.to_string()),
    })?;

    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", args.out.display())))?;
    let mut written = Vec::new();
    let write = |name: String, contents: String| -> Result<PathBuf, CliError> {
        let path = args.out.join(name);
        output::write_atomic(&path, &contents)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    };

    for kind in &emit {
        match kind {
            Emit::Telemetry => {
                written.push(write(
                    String::from("telemetry.csv"),
                    output::telemetry_csv(&result.telemetry),
                )?);
            }
            Emit::Events => {
                written.push(write(
                    String::from("events.csv"),
                    output::events_csv(&result.events),
                )?);
            }
            Emit::Metrics => {
                written.push(write(
                    String::from("metrics.csv"),
                    output::metrics_csv(&result.summaries),
                )?);
            }
            Emit::SwarmTrace => {
                let mut per_channel = std::collections::BTreeMap::new();
                for (label, trace) in &result.tuning_traces {
                    let n = per_channel.entry(*label).or_insert(0usize);
                    *n += 1;
                    written.push(write(
                        format!("swarm_trace_ch{label}_{n}.csv"),
                        output::swarm_trace_csv(trace),
                    )?);
                }
            }
            Emit::ConvergenceStudy => {
                let counts = args.study_particles.as_ref().expect("checked above");
                let rows =
                    study::convergence_study(&scenario, counts).map_err(CliError::Validation)?;
                written.push(write(
                    String::from("convergence_study.csv"),
                    study::study_csv(&rows),
                )?);
            }
        }
    }

    Ok(RunOutput {
        summaries: result.summaries,
        written,
    })
}

/// One line per channel: final mode plus metrics.
pub fn summary_lines(summaries: &[ChannelSummary]) -> Vec<String> {
    summaries
        .iter()
        .map(|s| {
            let mut line = format!(
                "channel {} ({}): mode={} overshoot={:.4} ",
                s.label,
                s.name,
                s.final_mode.as_str(),
                s.metrics.overshoot
            );
            match s.metrics.settling_time {
                Some(t) => write!(line, "settling={t:.3}s ").expect("string write"),
                None => line.push_str("settling=never "),
            }
            write!(
                line,
                "iae={:.4} ise={:.4}",
                s.metrics.iae, s.metrics.ise
            )
            .expect("string write");
            if let Some(hz) = s.final_tach_hz {
                write!(line, " tach={hz:.1}Hz").expect("string write");
            }
            line
        })
        .collect()
}

/// Full CLI entry point; returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match CliArgs::try_parse_from(argv) {
        Ok(args) => args,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&args) {
        Ok(out) => {
            for line in summary_lines(&out.summaries) {
                println!("{line}");
            }
            0
        }
        Err(CliError::Validation(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}
