//! `ringwire` subcommands.

use std::fmt;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use thiserror::Error;

use ringwire_core::experiment::log::{
    read_command_file, read_trial_file, replay, LogError, COMMAND_LOG_SUFFIX, TRIAL_LOG_EXT,
};
use ringwire_core::experiment::report::{emit_report, render_text, ExperimentReport};
use ringwire_core::experiment::{
    read_json, report_from_logs, run_experiment, ExperimentConfig, ExperimentError, CONFIG_FILE, LOG_DIR,
};
use ringwire_core::forcefield::FieldMode;
use ringwire_core::geometry::{GeometryError, WirePath};
use ringwire_core::simulator::TrialPhase;

use crate::server::{self, ServeConfig, ServeError, DEFAULT_PORT, DEFAULT_PUBLISH_HZ};
use crate::session::SessionSettings;

#[derive(Debug, Parser)]
#[command(name = "ringwire", version, about = "Ring-on-wire teleoperation training simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a headless cohort of synthetic operators and write logs and report.
    RunExperiment {
        /// Experiment JSON; missing fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; overrides the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild the report from a log directory.
    Report {
        #[arg(long)]
        logs: PathBuf,
        /// Also write report.json and report.txt here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print JSON instead of the text table.
        #[arg(long)]
        json: bool,
    },
    /// Re-run a trial from its command log and compare with its trial log.
    Replay {
        /// Trial log (`dDD_tTT.jsonl`) or command log (`dDD_tTT.cmd.jsonl`).
        #[arg(long)]
        trial: PathBuf,
        /// Experiment JSON holding the wire; found beside the logs if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Serve one trainee over a WebSocket at `/ws`, wire geometry at `/path.json`.
    Serve {
        #[arg(long, env = "RINGWIRE_PORT", default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        host: IpAddr,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "S01")]
        subject: String,
        /// c, d or n.
        #[arg(long, default_value = "n", value_parser = parse_group)]
        group: FieldMode,
        /// Defaults to `<output_dir>/logs` from the config.
        #[arg(long, env = "RINGWIRE_LOG_DIR")]
        log_dir: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_PUBLISH_HZ)]
        publish_hz: f64,
    },
}

fn parse_group(s: &str) -> Result<FieldMode, String> {
    FieldMode::from_letter(s).ok_or_else(|| format!("expected c, d or n, got {s:?}"))
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Serve(#[from] ServeError),
    #[error("{0}")]
    Usage(String),
    #[error("replay differs from the trial log: {0}")]
    ReplayMismatch(String),
    #[error("cannot start runtime: {0}")]
    Runtime(std::io::Error),
}

pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    Ok(match path {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::default(),
    })
}

pub fn cmd_run_experiment(config: Option<&Path>, out: Option<&Path>) -> Result<ExperimentReport, CliError> {
    let cfg = load_config(config)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());
    Ok(run_experiment(&cfg, &out)?)
}

pub fn cmd_report(logs: &Path, out: Option<&Path>) -> Result<ExperimentReport, CliError> {
    let report = report_from_logs(logs)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io { path: dir.into(), source })?;
        emit_report(&report, dir)?;
    }
    Ok(report)
}

/// Result of replaying one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayOutcome {
    pub trial_id: String,
    pub steps: u64,
    pub samples: usize,
    pub phase: TrialPhase,
    pub elapsed: f64,
    /// `None` when no trial log sits beside the command log.
    pub matches_log: Option<bool>,
}

impl fmt::Display for ReplayOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} steps, {} samples, {}, {:.3} s",
            self.trial_id,
            self.steps,
            self.samples,
            serde_json::to_value(self.phase).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            self.elapsed
        )?;
        match self.matches_log {
            Some(true) => write!(f, ", identical to trial log"),
            Some(false) => write!(f, ", differs from trial log"),
            None => write!(f, ", no trial log to compare"),
        }
    }
}

/// Trial log and command log paths for either one of them.
pub fn log_pair(file: &Path) -> Result<(PathBuf, PathBuf), CliError> {
    let name = file.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let dir = file.parent().unwrap_or(Path::new("."));
    let trial_ext = format!(".{TRIAL_LOG_EXT}");
    if let Some(stem) = name.strip_suffix(COMMAND_LOG_SUFFIX) {
        Ok((dir.join(format!("{stem}{trial_ext}")), file.to_path_buf()))
    } else if let Some(stem) = name.strip_suffix(&trial_ext) {
        Ok((file.to_path_buf(), dir.join(format!("{stem}{COMMAND_LOG_SUFFIX}"))))
    } else {
        Err(CliError::Usage(format!("{}: not a trial or command log", file.display())))
    }
}

/// Nearest experiment config in the log's directory or its ancestors.
fn find_config(file: &Path) -> Option<PathBuf> {
    file.ancestors().skip(1).take(4).flat_map(|d| [d.join(CONFIG_FILE), d.join("..").join(CONFIG_FILE)]).find(|p| p.is_file())
}

pub fn cmd_replay(trial: &Path, config: Option<&Path>) -> Result<ReplayOutcome, CliError> {
    let (trial_log, cmd_log) = log_pair(trial)?;
    let commands = read_command_file(&cmd_log)?;
    let config = config.map(Path::to_path_buf).or_else(|| find_config(trial));
    let cfg = load_config(config.as_deref())?;
    let path = Arc::new(WirePath::from_spec(&cfg.path)?);
    let replayed = replay(&commands, path)?;
    let matches_log = if trial_log.is_file() {
        let original = read_trial_file(&trial_log)?;
        if let Some(i) = (0..original.samples.len().max(replayed.samples.len()))
            .find(|&i| original.samples.get(i) != replayed.samples.get(i))
        {
            return Err(CliError::ReplayMismatch(format!("{}: first difference at sample {i}", trial_log.display())));
        }
        Some(true)
    } else {
        None
    };
    Ok(ReplayOutcome {
        trial_id: commands.header.trial_id,
        steps: commands.header.steps,
        samples: replayed.samples.len(),
        phase: replayed.phase,
        elapsed: replayed.elapsed,
        matches_log,
    })
}

pub fn serve_config(
    host: IpAddr,
    port: u16,
    config: Option<&Path>,
    subject: &str,
    group: FieldMode,
    log_dir: Option<&Path>,
    publish_hz: f64,
) -> Result<ServeConfig, CliError> {
    let experiment = load_config(config)?;
    let log_dir = log_dir.map(Path::to_path_buf).unwrap_or_else(|| experiment.output_dir.join(LOG_DIR));
    Ok(ServeConfig {
        addr: SocketAddr::new(host, port),
        session: SessionSettings { experiment, subject: subject.to_string(), group, log_dir },
        publish_hz,
    })
}

/// Execute a parsed command line, printing results to stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::RunExperiment { config, out } => {
            let report = cmd_run_experiment(config.as_deref(), out.as_deref())?;
            print!("{}", render_text(&report));
        }
        Command::Report { logs, out, json } => {
            let report = cmd_report(&logs, out.as_deref())?;
            if json {
                print!("{}", report.to_json());
            } else {
                print!("{}", render_text(&report));
            }
        }
        Command::Replay { trial, config } => {
            println!("{}", cmd_replay(&trial, config.as_deref())?);
        }
        Command::Serve { port, host, config, subject, group, log_dir, publish_hz } => {
            let cfg = serve_config(host, port, config.as_deref(), &subject, group, log_dir.as_deref(), publish_hz)?;
            let runtime = tokio::runtime::Runtime::new().map_err(CliError::Runtime)?;
            runtime.block_on(async {
                let server = server::start(cfg).await?;
                println!("serving on ws://{}/ws", server.local_addr());
                let _ = tokio::signal::ctrl_c().await;
                server.shutdown().await;
                Ok::<_, CliError>(())
            })?;
        }
    }
    Ok(())
}
