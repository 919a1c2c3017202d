//! One trainee's session: the schedule, the live trial and its logs.
//!
//! Driven by a single owner. Every call returns the messages to send, so the
//! engine runs the same way under the network loop and in tests.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ringwire_core::experiment::log::CommandRecorder;
use ringwire_core::experiment::plan::{build_session_plan, SessionPlan, DAYS, TRIALS_PER_DAY};
use ringwire_core::experiment::{
    command_log, persist_trial, trial_record, ExperimentConfig, ExperimentError, TrialSlot, ANALYSIS_FILE,
    CONFIG_FILE,
};
use ringwire_core::forcefield::FieldMode;
use ringwire_core::geometry::{Pose, WirePath};
use ringwire_core::metrics::block_stats;
use ringwire_core::simulator::{ring_color, OperatorCommand, Simulator, TrialPhase};

use crate::protocol::{
    ClientMessage, ControlMessage, DaySummary, ErrorCode, ErrorMessage, InputMessage, ServerMessage, SessionInfo,
    SessionPhase, StateUpdate, TrialResult,
};

pub const DISCONNECT_REASON: &str = "client disconnected";
pub const ABORT_REASON: &str = "aborted by operator";

/// Defaults for a served session.
#[derive(Clone, Debug)]
pub struct SessionSettings {
    pub experiment: ExperimentConfig,
    pub subject: String,
    pub group: FieldMode,
    pub log_dir: PathBuf,
}

pub struct SessionEngine {
    settings: SessionSettings,
    path: Arc<WirePath>,
    start: Pose,
    plan: Option<SessionPlan>,
    phase: SessionPhase,
    day: u8,
    trial: u8,
    sim: Simulator,
    recorder: CommandRecorder,
    latched: OperatorCommand,
    day_results: Vec<TrialResult>,
}

fn error(code: ErrorCode, message: impl Into<String>) -> ServerMessage {
    ServerMessage::Error(ErrorMessage::new(code, message))
}

fn write_json_once<T: serde::Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    if path.exists() {
        return Ok(());
    }
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

impl SessionEngine {
    pub fn new(settings: SessionSettings) -> Result<Self, ExperimentError> {
        settings.experiment.validate()?;
        let path = Arc::new(WirePath::from_spec(&settings.experiment.path)?);
        let start = path.pose_at(0.0);
        let sim = Self::idle_sim(&settings.experiment, &path, start, FieldMode::Null);
        Ok(Self {
            settings,
            path,
            start,
            plan: None,
            phase: SessionPhase::Idle,
            day: 0,
            trial: 0,
            sim,
            recorder: CommandRecorder::new(),
            latched: OperatorCommand::idle(false),
            day_results: Vec::new(),
        })
    }

    fn idle_sim(cfg: &ExperimentConfig, path: &Arc<WirePath>, start: Pose, mode: FieldMode) -> Simulator {
        Simulator::with_initial_poses(path.clone(), cfg.field.with_mode(mode), cfg.sim, start, start)
    }

    pub fn path(&self) -> &Arc<WirePath> {
        &self.path
    }

    pub fn phase(&self) -> SessionPhase {
        self.phase
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    /// Seconds per [`tick`](Self::tick).
    pub fn dt(&self) -> f64 {
        self.settings.experiment.sim.dt
    }

    pub fn log_dir(&self) -> &Path {
        &self.settings.log_dir
    }

    fn planned_field(&self) -> FieldMode {
        match &self.plan {
            Some(p) if self.day >= 1 && self.trial >= 1 => {
                p.days[self.day as usize - 1].trials[self.trial as usize - 1].field
            }
            _ => FieldMode::Null,
        }
    }

    fn prepare_trial(&mut self) {
        self.sim = Self::idle_sim(&self.settings.experiment, &self.path, self.start, self.planned_field());
        self.recorder = CommandRecorder::new();
        self.latched = OperatorCommand::idle(false);
    }

    pub fn info(&self) -> SessionInfo {
        let (subject, group) = match &self.plan {
            Some(p) => (p.subject.clone(), p.group),
            None => (self.settings.subject.clone(), self.settings.group),
        };
        SessionInfo {
            subject,
            group,
            session: self.phase,
            day: self.day,
            trial: self.trial,
            days: DAYS,
            trials_per_day: TRIALS_PER_DAY,
            field: self.sim.field().mode,
            path_hash: self.path.hash(),
        }
    }

    pub fn state(&self) -> StateUpdate {
        let snap = self.sim.snapshot();
        StateUpdate {
            session: self.phase,
            phase: snap.phase,
            step: snap.step,
            sim_time: snap.step as f64 * self.dt(),
            elapsed: snap.elapsed,
            ring: snap.ring,
            instrument: snap.instrument.pose,
            grip_closed: snap.instrument.grip_closed,
            holding_ring: snap.instrument.holding_ring,
            color: ring_color(snap.deviation, self.sim.config().d_red),
            deviation_mm: snap.deviation * 1000.0,
            angular_deviation: snap.angular_deviation,
            progress: snap.progress,
            day: self.day,
            trial: self.trial,
            field: self.sim.field().mode,
        }
    }

    pub fn handle(&mut self, message: ClientMessage) -> Vec<ServerMessage> {
        match message {
            ClientMessage::Input(m) => {
                self.input(&m);
                Vec::new()
            }
            ClientMessage::Control(c) => self.control(c),
        }
    }

    /// Latch a command. Ignored outside a trial.
    pub fn input(&mut self, m: &InputMessage) {
        if self.phase == SessionPhase::InTrial {
            self.latched = m.to_command();
        }
    }

    pub fn control(&mut self, c: ControlMessage) -> Vec<ServerMessage> {
        match c {
            ControlMessage::StartSession { subject, group, day } => self.start_session(subject, group, day),
            ControlMessage::StartTrial => {
                if self.phase != SessionPhase::Ready {
                    return vec![error(ErrorCode::InvalidPhase, format!("StartTrial needs a ready session, not {:?}", self.phase))];
                }
                self.prepare_trial();
                self.phase = SessionPhase::InTrial;
                vec![ServerMessage::Session(self.info())]
            }
            ControlMessage::AbortTrial => {
                if self.phase != SessionPhase::InTrial {
                    return vec![error(ErrorCode::InvalidPhase, format!("AbortTrial needs a running trial, not {:?}", self.phase))];
                }
                self.sim.abort(ABORT_REASON);
                self.finish_trial()
            }
            ControlMessage::NextDay => {
                if self.phase != SessionPhase::DayComplete {
                    return vec![error(ErrorCode::InvalidPhase, format!("NextDay needs a completed day, not {:?}", self.phase))];
                }
                self.day += 1;
                self.trial = 1;
                self.day_results.clear();
                self.phase = SessionPhase::Ready;
                self.prepare_trial();
                vec![ServerMessage::Session(self.info())]
            }
        }
    }

    fn start_session(&mut self, subject: Option<String>, group: Option<FieldMode>, day: Option<u8>) -> Vec<ServerMessage> {
        if self.phase == SessionPhase::InTrial {
            return vec![error(ErrorCode::InvalidPhase, "StartSession during a running trial")];
        }
        let day = day.unwrap_or(1);
        if !(1..=DAYS).contains(&day) {
            return vec![error(ErrorCode::InvalidParameter, format!("day must be 1..={DAYS}, got {day}"))];
        }
        let subject = subject.unwrap_or_else(|| self.settings.subject.clone());
        if subject.is_empty() || subject.contains(['/', '\\']) || subject.starts_with('.') {
            return vec![error(ErrorCode::InvalidParameter, format!("invalid subject id {subject:?}"))];
        }
        let group = group.unwrap_or(self.settings.group);
        if let Err(e) = self.write_session_files() {
            return vec![error(ErrorCode::Internal, format!("cannot prepare log directory: {e}"))];
        }
        self.plan = Some(build_session_plan(&subject, group));
        self.day = day;
        self.trial = 1;
        self.day_results.clear();
        self.phase = SessionPhase::Ready;
        self.prepare_trial();
        vec![ServerMessage::Session(self.info())]
    }

    fn write_session_files(&self) -> std::io::Result<()> {
        let dir = &self.settings.log_dir;
        fs::create_dir_all(dir)?;
        write_json_once(&dir.join(ANALYSIS_FILE), &self.settings.experiment.analysis)?;
        write_json_once(&dir.join(CONFIG_FILE), &self.settings.experiment)
    }

    /// Advance one simulation step if a trial is running.
    pub fn tick(&mut self) -> Vec<ServerMessage> {
        if self.phase != SessionPhase::InTrial {
            return Vec::new();
        }
        self.recorder.record(self.sim.step_count(), &self.latched);
        self.sim.step(&self.latched);
        if self.sim.trial().phase.is_finished() {
            self.finish_trial()
        } else {
            Vec::new()
        }
    }

    /// The client went away: abort and log any running trial.
    pub fn disconnect(&mut self) -> Vec<ServerMessage> {
        self.stop(DISCONNECT_REASON)
    }

    /// Abort and log any running trial.
    pub fn stop(&mut self, reason: &str) -> Vec<ServerMessage> {
        if self.phase != SessionPhase::InTrial {
            return Vec::new();
        }
        self.sim.abort(reason);
        self.finish_trial()
    }

    fn finish_trial(&mut self) -> Vec<ServerMessage> {
        let plan = self.plan.as_ref().expect("a trial runs only inside a session");
        let slot = TrialSlot { subject: plan.subject.clone(), group: plan.group, day: self.day, trial: self.trial };
        let cfg = &self.settings.experiment;
        let record = trial_record(&slot, &self.sim, self.sim.trial().clone(), cfg.analysis.header_cf());
        let records = std::mem::take(&mut self.recorder).into_records();
        let commands = cfg.command_logs.then(|| command_log(&slot, &self.sim, self.start, records));

        let mut out = Vec::new();
        if let Err(e) = persist_trial(&self.settings.log_dir, &slot, &record, commands.as_ref()) {
            log::error!("{}: {e}", slot.id());
            out.push(error(ErrorCode::Internal, format!("trial log not written: {e}")));
        }
        let h = record.header;
        let result = TrialResult {
            trial_id: h.trial_id,
            day: h.day,
            trial: h.trial,
            field: h.field.mode,
            phase: h.phase,
            elapsed: h.elapsed,
            drops: h.drops,
            abort_reason: h.abort_reason,
            metrics: h.metrics,
        };
        self.day_results.push(result.clone());
        out.push(ServerMessage::TrialResult(result));

        if self.trial < TRIALS_PER_DAY {
            self.trial += 1;
            self.phase = SessionPhase::Ready;
            self.prepare_trial();
        } else {
            out.push(ServerMessage::DaySummary(self.day_summary()));
            self.phase = if self.day < DAYS { SessionPhase::DayComplete } else { SessionPhase::Finished };
        }
        out.push(ServerMessage::Session(self.info()));
        out
    }

    fn day_summary(&self) -> DaySummary {
        let metrics: Vec<_> = self.day_results.iter().filter_map(|r| r.metrics).collect();
        let completed = self.day_results.iter().filter(|r| r.phase == TrialPhase::Completed).count();
        DaySummary {
            day: self.day,
            completed,
            aborted: self.day_results.len() - completed,
            stats: block_stats(&format!("day{}", self.day), &metrics),
        }
    }
}
