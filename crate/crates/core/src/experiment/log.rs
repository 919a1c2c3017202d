//! JSON-lines trial and command logs.
//!
//! A trial log is one header object followed by one [`PoseSample`] per line.
//! A command log is one header followed by `{step, command}` records written
//! whenever the operator's command changes; replaying it through a fresh
//! simulator reproduces the trial exactly.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::plan::Block;
use crate::forcefield::{FieldMode, ForceFieldConfig};
use crate::geometry::{Pose, WirePath};
use crate::metrics::TrialMetrics;
use crate::simulator::{OperatorCommand, PoseSample, SimConfig, Simulator, TrialPhase, TrialState};

pub const TRIAL_LOG_EXT: &str = "jsonl";
pub const COMMAND_LOG_SUFFIX: &str = ".cmd.jsonl";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{0}: log is empty")]
    Empty(PathBuf),
    #[error("{path}: path hash {found} does not match {expected}")]
    PathMismatch { path: PathBuf, found: String, expected: String },
}

impl LogError {
    fn io(path: &Path, source: io::Error) -> Self {
        LogError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialHeader {
    pub trial_id: String,
    pub subject: String,
    pub group: FieldMode,
    pub day: u8,
    pub trial: u8,
    pub block: Block,
    pub field: ForceFieldConfig,
    pub sim: SimConfig,
    pub path_hash: String,
    pub phase: TrialPhase,
    pub elapsed: f64,
    pub drops: u32,
    pub abort_reason: Option<String>,
    /// Weight used for the CET in `metrics`.
    pub cf: f64,
    pub metrics: Option<TrialMetrics>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub header: TrialHeader,
    pub samples: Vec<PoseSample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandHeader {
    pub trial_id: String,
    pub field: ForceFieldConfig,
    pub sim: SimConfig,
    pub path_hash: String,
    pub initial_ring: Pose,
    pub initial_instrument: Pose,
    /// Steps the original run took; replay stops here at the latest.
    pub steps: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub step: u64,
    pub command: OperatorCommand,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommandLog {
    pub header: CommandHeader,
    pub records: Vec<CommandRecord>,
}

/// Collects command changes while driving a simulator.
#[derive(Clone, Debug, Default)]
pub struct CommandRecorder {
    records: Vec<CommandRecord>,
}

impl CommandRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, step: u64, command: &OperatorCommand) {
        if self.records.last().map(|r| r.command) != Some(*command) {
            self.records.push(CommandRecord { step, command: *command });
        }
    }

    pub fn records(&self) -> &[CommandRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<CommandRecord> {
        self.records
    }
}

fn write_jsonl<H: Serialize, R: Serialize>(out: &mut impl Write, header: &H, rows: &[R]) -> io::Result<()> {
    serde_json::to_writer(&mut *out, header)?;
    out.write_all(b"\n")?;
    for r in rows {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn read_jsonl<H: DeserializeOwned, R: DeserializeOwned>(
    input: impl BufRead,
    path: &Path,
) -> Result<(H, Vec<R>), LogError> {
    let mut header = None;
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| LogError::io(path, e))?;
        let parse_err = |e: serde_json::Error| LogError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        };
        if header.is_none() {
            header = Some(serde_json::from_str(&line).map_err(parse_err)?);
        } else {
            if line.trim().is_empty() {
                continue;
            }
            rows.push(serde_json::from_str(&line).map_err(parse_err)?);
        }
    }
    let header = header.ok_or_else(|| LogError::Empty(path.to_path_buf()))?;
    Ok((header, rows))
}

fn create(path: &Path) -> Result<BufWriter<File>, LogError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| LogError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| LogError::io(path, e))?))
}

fn open(path: &Path) -> Result<BufReader<File>, LogError> {
    Ok(BufReader::new(File::open(path).map_err(|e| LogError::io(path, e))?))
}

pub fn write_trial(out: &mut impl Write, record: &TrialRecord) -> io::Result<()> {
    write_jsonl(out, &record.header, &record.samples)
}

pub fn read_trial(input: impl BufRead, path: &Path) -> Result<TrialRecord, LogError> {
    let (header, samples) = read_jsonl(input, path)?;
    Ok(TrialRecord { header, samples })
}

pub fn write_trial_file(path: &Path, record: &TrialRecord) -> Result<(), LogError> {
    let mut w = create(path)?;
    write_trial(&mut w, record).and_then(|_| w.flush()).map_err(|e| LogError::io(path, e))
}

pub fn read_trial_file(path: &Path) -> Result<TrialRecord, LogError> {
    read_trial(open(path)?, path)
}

pub fn write_commands(out: &mut impl Write, log: &CommandLog) -> io::Result<()> {
    write_jsonl(out, &log.header, &log.records)
}

pub fn read_commands(input: impl BufRead, path: &Path) -> Result<CommandLog, LogError> {
    let (header, records) = read_jsonl(input, path)?;
    Ok(CommandLog { header, records })
}

pub fn write_command_file(path: &Path, log: &CommandLog) -> Result<(), LogError> {
    let mut w = create(path)?;
    write_commands(&mut w, log).and_then(|_| w.flush()).map_err(|e| LogError::io(path, e))
}

pub fn read_command_file(path: &Path) -> Result<CommandLog, LogError> {
    read_commands(open(path)?, path)
}

/// `<root>/<subject>/dDD_tTT.jsonl`
pub fn trial_log_path(root: &Path, subject: &str, day: u8, trial: u8) -> PathBuf {
    root.join(subject).join(format!("d{day:02}_t{trial:02}.{TRIAL_LOG_EXT}"))
}

/// `<root>/<subject>/dDD_tTT.cmd.jsonl`
pub fn command_log_path(root: &Path, subject: &str, day: u8, trial: u8) -> PathBuf {
    root.join(subject).join(format!("d{day:02}_t{trial:02}{COMMAND_LOG_SUFFIX}"))
}

fn collect_trial_paths(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), LogError> {
    for entry in fs::read_dir(dir).map_err(|e| LogError::io(dir, e))? {
        let path = entry.map_err(|e| LogError::io(dir, e))?.path();
        if path.is_dir() {
            collect_trial_paths(&path, out)?;
        } else {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if name.ends_with(&format!(".{TRIAL_LOG_EXT}")) && !name.ends_with(COMMAND_LOG_SUFFIX) {
                out.push(path);
            }
        }
    }
    Ok(())
}

/// Every trial log below `dir`, ordered by subject, day and trial.
pub fn load_trials(dir: &Path) -> Result<Vec<TrialRecord>, LogError> {
    let mut paths = Vec::new();
    collect_trial_paths(dir, &mut paths)?;
    let mut records = paths.iter().map(|p| read_trial_file(p)).collect::<Result<Vec<_>, _>>()?;
    records.sort_by(|a, b| {
        let key = |h: &TrialHeader| (h.subject.clone(), h.day, h.trial);
        key(&a.header).cmp(&key(&b.header))
    });
    Ok(records)
}

/// Re-run a command log against `path` and return the resulting trial.
pub fn replay(log: &CommandLog, path: Arc<WirePath>) -> Result<TrialState, LogError> {
    if log.header.path_hash != path.hash() {
        return Err(LogError::PathMismatch {
            path: PathBuf::from(&log.header.trial_id),
            found: log.header.path_hash.clone(),
            expected: path.hash(),
        });
    }
    let h = &log.header;
    let mut sim = Simulator::with_initial_poses(path, h.field, h.sim, h.initial_ring, h.initial_instrument);
    let mut next = 0;
    let mut current = OperatorCommand::idle(false);
    while !sim.trial().phase.is_finished() && sim.step_count() < h.steps {
        while next < log.records.len() && log.records[next].step <= sim.step_count() {
            current = log.records[next].command;
            next += 1;
        }
        sim.step(&current);
    }
    Ok(sim.into_trial())
}
