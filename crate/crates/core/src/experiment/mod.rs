//! Cohort experiments with synthetic operators.
//!
//! [`run_experiment`] assigns subjects to groups, runs every planned trial,
//! writes one trial log (and optionally one command log) per trial, then
//! builds the report from the logs on disk. The report is a pure function of
//! the logs and the analysis settings stored beside them.

pub mod log;
pub mod operator;
pub mod plan;
pub mod report;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::forcefield::{FieldMode, ForceFieldConfig};
use crate::geometry::{GeometryError, PathSpec, Pose, WirePath};
use crate::metrics::{trial_metrics, MetricsConfig};
use crate::simulator::{SimConfig, Simulator, TrialPhase, TrialState};
use crate::stats::Adjustment;

use self::log::{
    command_log_path, trial_log_path, write_command_file, write_trial_file, CommandHeader, CommandLog,
    CommandRecord, CommandRecorder, LogError, TrialHeader, TrialRecord,
};
use self::operator::{SubjectModel, SyntheticOperator};
use self::plan::{build_session_plan, pseudo_randomize_into, Block, SessionPlan};
use self::report::{build_report, emit_report, ExperimentReport};

pub const ANALYSIS_FILE: &str = "analysis.json";
pub const CONFIG_FILE: &str = "experiment.json";
pub const LOG_DIR: &str = "logs";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("report: {0}")]
    Report(String),
}

/// How the CET weight is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CfPolicy {
    /// `mean(RPE)/mean(TPE)` over every completed trial in the logs.
    Derived,
    Fixed(f64),
}

impl Default for CfPolicy {
    fn default() -> Self {
        CfPolicy::Fixed(MetricsConfig::default().cf)
    }
}

/// Settings the report needs beyond the logs themselves.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub cf: CfPolicy,
    pub adjustment: Adjustment,
    /// Subjects left out of every group statistic.
    pub dropouts: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Subjects per group.
    pub subjects_per_group: usize,
    pub groups: Vec<FieldMode>,
    pub seed: u64,
    pub operator: SubjectModel,
    /// Log-normal spread of each subject's noise level around the model's.
    pub subject_spread: f64,
    pub field: ForceFieldConfig,
    pub sim: SimConfig,
    pub path: PathSpec,
    pub analysis: AnalysisConfig,
    pub command_logs: bool,
    /// Used by the command line when no output directory is given.
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            subjects_per_group: 4,
            groups: FieldMode::ALL.to_vec(),
            seed: 1,
            operator: SubjectModel::default(),
            subject_spread: 0.25,
            field: ForceFieldConfig::default(),
            sim: SimConfig::default(),
            path: PathSpec::canonical(),
            analysis: AnalysisConfig::default(),
            command_logs: true,
            output_dir: PathBuf::from("ringwire-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn subject_count(&self) -> usize {
        self.subjects_per_group * self.groups.len()
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.subjects_per_group == 0 {
            return bad("subjects_per_group must be at least 1".into());
        }
        if self.groups.is_empty() {
            return bad("at least one group is required".into());
        }
        for (i, g) in self.groups.iter().enumerate() {
            if self.groups[..i].contains(g) {
                return bad(format!("group {g} listed twice"));
            }
        }
        if !(self.subject_spread.is_finite() && self.subject_spread >= 0.0) {
            return bad(format!("subject_spread = {} must be non-negative", self.subject_spread));
        }
        if let CfPolicy::Fixed(cf) = self.analysis.cf {
            if !(cf.is_finite() && cf >= 0.0) {
                return bad(format!("cf = {cf} must be non-negative"));
            }
        }
        self.operator.validate().map_err(ExperimentError::Config)?;
        self.sim.validate().map_err(ExperimentError::Config)?;
        self.field.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn subject_ids(&self) -> Vec<String> {
        let n = self.subject_count();
        let width = n.to_string().len().max(2);
        (1..=n).map(|i| format!("S{i:0width$}")).collect()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent seed for one subject, stable under reordering of subjects.
pub fn subject_seed(master: u64, subject: &str) -> u64 {
    let digest = Sha256::digest(subject.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    splitmix64(master ^ u64::from_le_bytes(head))
}

/// Everything one subject needs to run their sessions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectSetup {
    pub plan: SessionPlan,
    pub seed: u64,
    pub model: SubjectModel,
}

pub fn subject_setups(cfg: &ExperimentConfig) -> Vec<SubjectSetup> {
    let ids = cfg.subject_ids();
    pseudo_randomize_into(&ids, &cfg.groups, splitmix64(cfg.seed))
        .into_iter()
        .map(|(id, group)| {
            let seed = subject_seed(cfg.seed, &id);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let factor = Normal::new(0.0, cfg.subject_spread).map(|n| n.sample(&mut rng).exp()).unwrap_or(1.0);
            let model = SubjectModel {
                noise_sd: cfg.operator.noise_sd * factor,
                angular_noise_sd: cfg.operator.angular_noise_sd * factor,
                ..cfg.operator
            };
            SubjectSetup { plan: build_session_plan(&id, group), seed, model }
        })
        .collect()
}

impl AnalysisConfig {
    /// CET weight written into trial headers. Under a derived policy the
    /// report recomputes it from the logs.
    pub fn header_cf(&self) -> f64 {
        match self.cf {
            CfPolicy::Fixed(cf) => cf,
            CfPolicy::Derived => MetricsConfig::default().cf,
        }
    }
}

pub fn trial_id(subject: &str, day: u8, trial: u8) -> String {
    format!("{subject}-d{day:02}-t{trial:02}")
}

/// Where a trial sits in a session.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialSlot {
    pub subject: String,
    pub group: FieldMode,
    pub day: u8,
    pub trial: u8,
}

impl TrialSlot {
    pub fn id(&self) -> String {
        trial_id(&self.subject, self.day, self.trial)
    }
}

/// Trial log for a finished simulator. Metrics are attached only to
/// completed trials.
pub fn trial_record(slot: &TrialSlot, sim: &Simulator, trial: TrialState, cf: f64) -> TrialRecord {
    let completed = trial.phase == TrialPhase::Completed;
    let metrics = if completed { trial_metrics(&trial.samples, &MetricsConfig { cf }).ok() } else { None };
    TrialRecord {
        header: TrialHeader {
            trial_id: slot.id(),
            subject: slot.subject.clone(),
            group: slot.group,
            day: slot.day,
            trial: slot.trial,
            block: Block::of(slot.day, slot.trial),
            field: *sim.field(),
            sim: *sim.config(),
            path_hash: sim.path().hash(),
            phase: trial.phase,
            elapsed: trial.elapsed,
            drops: trial.drops,
            abort_reason: trial.abort_reason,
            cf,
            metrics,
        },
        samples: trial.samples,
    }
}

/// Command log that reproduces `sim` from `start`.
pub fn command_log(slot: &TrialSlot, sim: &Simulator, start: Pose, records: Vec<CommandRecord>) -> CommandLog {
    CommandLog {
        header: CommandHeader {
            trial_id: slot.id(),
            field: *sim.field(),
            sim: *sim.config(),
            path_hash: sim.path().hash(),
            initial_ring: start,
            initial_instrument: start,
            steps: sim.step_count(),
        },
        records,
    }
}

/// Write both logs of one finished trial below `log_dir`.
pub fn persist_trial(
    log_dir: &Path,
    slot: &TrialSlot,
    record: &TrialRecord,
    commands: Option<&CommandLog>,
) -> Result<(), ExperimentError> {
    write_trial_file(&trial_log_path(log_dir, &slot.subject, slot.day, slot.trial), record)?;
    if let Some(log) = commands {
        write_command_file(&command_log_path(log_dir, &slot.subject, slot.day, slot.trial), log)?;
    }
    Ok(())
}

/// Run one subject's full schedule, writing logs below `log_dir`.
pub fn run_subject(
    cfg: &ExperimentConfig,
    path: &Arc<WirePath>,
    setup: &SubjectSetup,
    log_dir: &Path,
) -> Result<(), ExperimentError> {
    let plan = &setup.plan;
    let mut op = SyntheticOperator::new(setup.model, setup.seed, cfg.sim.dt);
    let cf = cfg.analysis.header_cf();
    for (ordinal, (day, planned)) in plan.iter().enumerate() {
        let field = cfg.field.with_mode(planned.field);
        let start = path.pose_at(0.0);
        let mut sim = Simulator::with_initial_poses(path.clone(), field, cfg.sim, start, start);
        let mut recorder = CommandRecorder::new();
        op.reseed(setup.seed, ordinal as u64 + 1);
        op.begin_trial(planned.field);
        while !sim.trial().phase.is_finished() {
            let cmd = op.act(&sim.observe(), path);
            recorder.record(sim.step_count(), &cmd);
            sim.step(&cmd);
        }
        let trial = sim.trial().clone();
        op.end_trial(trial.phase == TrialPhase::Completed);

        let slot = TrialSlot { subject: plan.subject.clone(), group: plan.group, day, trial: planned.index };
        let record = trial_record(&slot, &sim, trial, cf);
        let commands = cfg.command_logs.then(|| command_log(&slot, &sim, start, recorder.into_records()));
        persist_trial(log_dir, &slot, &record, commands.as_ref())?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ExperimentError::Json { path: path.into(), source: e })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| ExperimentError::Io { path: path.into(), source: e })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|e| ExperimentError::Io { path: path.into(), source: e })?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Json { path: path.into(), source: e })
}

/// Analysis settings stored beside the logs, or defaults if absent.
pub fn load_analysis(log_dir: &Path) -> Result<AnalysisConfig, ExperimentError> {
    let p = log_dir.join(ANALYSIS_FILE);
    if p.exists() {
        read_json(&p)
    } else {
        Ok(AnalysisConfig::default())
    }
}

/// Run the whole cohort into `out_dir` and return the report.
///
/// Layout: `experiment.json`, `logs/<subject>/dDD_tTT[.cmd].jsonl`,
/// `logs/analysis.json`, `report.json`, `report.txt`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let path = Arc::new(WirePath::from_spec(&cfg.path)?);
    let log_dir = out_dir.join(LOG_DIR);
    fs::create_dir_all(&log_dir).map_err(|e| ExperimentError::Io { path: log_dir.clone(), source: e })?;
    write_json(&out_dir.join(CONFIG_FILE), cfg)?;
    write_json(&log_dir.join(ANALYSIS_FILE), &cfg.analysis)?;

    let setups = subject_setups(cfg);
    setups.par_iter().try_for_each(|s| run_subject(cfg, &path, s, &log_dir))?;

    let report = report_from_logs(&log_dir)?;
    emit_report(&report, out_dir)?;
    Ok(report)
}

/// Rebuild the report from a log directory alone.
pub fn report_from_logs(log_dir: &Path) -> Result<ExperimentReport, ExperimentError> {
    let analysis = load_analysis(log_dir)?;
    let trials = log::load_trials(log_dir)?;
    build_report(&trials, &analysis).map_err(ExperimentError::Report)
}
