//! Fixed-step ring-on-wire simulation.
//!
//! The instrument is a kinematic body driven by velocity commands. While the
//! ring is held, the guidance wrench displaces it through an admittance
//! (`Δx = C_T·F·dt`, `Δθ = C_R·τ·dt`), standing in for the force a haptic
//! master would put on the operator's hand. All timing comes from the step
//! counter; nothing here reads a wall clock.

use std::sync::Arc;

use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};

use crate::forcefield::{compute_wrench, ForceFieldConfig, Wrench};
use crate::geometry::{canonicalize, rotation_angle, Pose, Quat, Twist, Vec3, WirePath};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Control period, seconds.
    pub dt: f64,
    /// Translational compliance, m/(N·s).
    pub compliance_t: f64,
    /// Rotational compliance, rad/(N·m·s).
    pub compliance_r: f64,
    pub max_linear_speed: f64,
    pub max_angular_speed: f64,
    /// Grasp succeeds when the tip is within this distance of the ring center (inclusive).
    pub capture_radius: f64,
    /// Deviation at which the ring is fully red.
    pub d_red: f64,
    /// Completion once progress reaches `length - end_tolerance`.
    pub end_tolerance: f64,
    pub sample_hz: u32,
    /// Simulated seconds before a trial is aborted.
    pub timeout: f64,
    /// Slack around the path bounding box that the ring may not leave.
    pub workspace_margin: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.001,
            compliance_t: 0.015,
            compliance_r: 40.0,
            max_linear_speed: 0.25,
            max_angular_speed: 3.0,
            capture_radius: 0.005,
            d_red: 0.010,
            end_tolerance: 0.005,
            sample_hz: 30,
            timeout: 300.0,
            workspace_margin: 0.5,
        }
    }
}

impl SimConfig {
    /// Integral number of control steps per second.
    pub fn steps_per_second(&self) -> u64 {
        (1.0 / self.dt).round() as u64
    }

    pub fn validate(&self) -> Result<(), String> {
        let sps = 1.0 / self.dt;
        if !(self.dt.is_finite() && self.dt > 0.0) || (sps - sps.round()).abs() > 1e-6 {
            return Err(format!("dt = {} must divide one second evenly", self.dt));
        }
        if self.sample_hz == 0 || self.sample_hz as u64 > self.steps_per_second() {
            return Err(format!("sample rate {} Hz exceeds the control rate", self.sample_hz));
        }
        let positive = [
            ("compliance_t", self.compliance_t),
            ("compliance_r", self.compliance_r),
            ("max_linear_speed", self.max_linear_speed),
            ("max_angular_speed", self.max_angular_speed),
            ("capture_radius", self.capture_radius),
            ("d_red", self.d_red),
            ("timeout", self.timeout),
            ("workspace_margin", self.workspace_margin),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} = {v} must be positive"));
            }
        }
        if !(self.end_tolerance.is_finite() && self.end_tolerance >= 0.0) {
            return Err("end_tolerance must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstrumentState {
    pub pose: Pose,
    pub twist: Twist,
    pub grip_closed: bool,
    pub holding_ring: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OperatorCommand {
    pub linear: Vec3,
    pub angular: Vec3,
    pub grip_closed: bool,
    #[serde(default)]
    pub timestamp: f64,
}

impl OperatorCommand {
    pub fn idle(grip_closed: bool) -> Self {
        Self { grip_closed, ..Default::default() }
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|v| v.is_finite())
    }

    /// Scale each velocity down to its speed limit, keeping direction.
    pub fn clamped(&self, cfg: &SimConfig) -> Self {
        let clamp = |v: Vec3, max: f64| {
            let n = v.norm();
            if n > max {
                v * (max / n)
            } else {
                v
            }
        };
        Self {
            linear: clamp(self.linear, cfg.max_linear_speed),
            angular: clamp(self.angular, cfg.max_angular_speed),
            ..*self
        }
    }
}

/// One 30 Hz log record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    /// Trial clock, seconds since grasp (paused while the ring is dropped).
    pub t: f64,
    pub ring: Pose,
    pub twist: Twist,
    pub grip_closed: bool,
    /// Arc length of the closest wire point, meters.
    pub s_star: f64,
    /// Distance from the wire, meters.
    pub deviation: f64,
    /// Angle to the desired frame, radians.
    pub angular_deviation: f64,
    pub wrench: Wrench,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialPhase {
    Ready,
    Running,
    Completed,
    Aborted,
}

impl TrialPhase {
    pub fn is_finished(self) -> bool {
        matches!(self, TrialPhase::Completed | TrialPhase::Aborted)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialState {
    pub phase: TrialPhase,
    /// Seconds of held, running time.
    pub elapsed: f64,
    pub samples: Vec<PoseSample>,
    /// Furthest arc length reached while holding the ring.
    pub progress: f64,
    /// Times the ring was released mid-trial.
    pub drops: u32,
    pub abort_reason: Option<String>,
}

impl TrialState {
    fn new() -> Self {
        Self {
            phase: TrialPhase::Ready,
            elapsed: 0.0,
            samples: Vec::new(),
            progress: 0.0,
            drops: 0,
            abort_reason: None,
        }
    }
}

/// Decides when a 30 Hz sample is due from the integer trial-step count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleClock {
    hz: u64,
    steps_per_second: u64,
    next: u64,
}

impl SampleClock {
    pub fn new(hz: u32, steps_per_second: u64) -> Self {
        Self { hz: hz as u64, steps_per_second, next: 0 }
    }

    /// True when sample `next` is due at this step; advances the clock.
    pub fn poll(&mut self, trial_steps: u64) -> bool {
        if trial_steps * self.hz >= self.next * self.steps_per_second {
            self.next += 1;
            true
        } else {
            false
        }
    }

    pub fn emitted(&self) -> u64 {
        self.next
    }
}

/// Grasp test: tip within the capture radius of the ring center, boundary inclusive.
pub fn try_grasp(instrument: &InstrumentState, ring: &Pose, capture_radius: f64) -> bool {
    (instrument.pose.translation() - ring.translation()).norm() <= capture_radius
}

/// Accuracy color: 1 is yellow (on the wire), 0 is red (at or beyond `d_red`).
pub fn ring_color(deviation: f64, d_red: f64) -> f64 {
    (1.0 - deviation / d_red).clamp(0.0, 1.0)
}

/// True once the ring has been carried to within the end tolerance.
pub fn check_completion(state: &TrialState, path: &WirePath, end_tolerance: f64) -> bool {
    state.progress >= path.length() - end_tolerance
}

fn integrate(pose: &Pose, linear: &Vec3, angular: &Vec3, dt: f64) -> Pose {
    let q = UnitQuaternion::from_scaled_axis(angular * dt) * pose.rotation();
    Pose::new(pose.translation() + linear * dt, UnitQuaternion::new_normalize(q.into_inner()))
}

fn finite_difference(from: &Pose, to: &Pose, dt: f64) -> Twist {
    let dq = canonicalize(to.rotation() * from.rotation().inverse());
    Twist {
        linear: (to.translation() - from.translation()) / dt,
        angular: dq.scaled_axis() / dt,
    }
}

/// Read-only view published after every step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub phase: TrialPhase,
    pub elapsed: f64,
    pub ring: Pose,
    pub instrument: InstrumentState,
    pub deviation: f64,
    pub angular_deviation: f64,
    pub s_star: f64,
    pub progress: f64,
}

/// What an operator sees each step; cheaper than a [`Snapshot`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub step: u64,
    pub phase: TrialPhase,
    pub holding_ring: bool,
    pub ring: Pose,
}

/// Single-trial simulation.
#[derive(Clone, Debug)]
pub struct Simulator {
    path: Arc<WirePath>,
    field: ForceFieldConfig,
    cfg: SimConfig,
    instrument: InstrumentState,
    ring: Pose,
    ring_twist: Twist,
    grasp_offset: Option<Pose>,
    trial: TrialState,
    clock: SampleClock,
    step: u64,
    trial_steps: u64,
    last_wrench: Wrench,
    ws_lo: Vec3,
    ws_hi: Vec3,
}

impl Simulator {
    /// Ring resting at the start of the wire, instrument tip on the ring with
    /// the gripper open.
    pub fn new(path: Arc<WirePath>, field: ForceFieldConfig, cfg: SimConfig) -> Self {
        let start = path.pose_at(0.0);
        Self::with_initial_poses(path, field, cfg, start, start)
    }

    pub fn with_initial_poses(
        path: Arc<WirePath>,
        field: ForceFieldConfig,
        cfg: SimConfig,
        ring: Pose,
        instrument: Pose,
    ) -> Self {
        let (lo, hi) = path.bounding_box();
        let margin = Vec3::repeat(cfg.workspace_margin);
        Self {
            clock: SampleClock::new(cfg.sample_hz, cfg.steps_per_second()),
            field,
            cfg,
            instrument: InstrumentState {
                pose: instrument,
                twist: Twist::zero(),
                grip_closed: false,
                holding_ring: false,
            },
            ring,
            ring_twist: Twist::zero(),
            grasp_offset: None,
            trial: TrialState::new(),
            step: 0,
            trial_steps: 0,
            last_wrench: Wrench::zero(),
            ws_lo: lo - margin,
            ws_hi: hi + margin,
            path,
        }
    }

    pub fn path(&self) -> &Arc<WirePath> {
        &self.path
    }

    pub fn field(&self) -> &ForceFieldConfig {
        &self.field
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn trial(&self) -> &TrialState {
        &self.trial
    }

    pub fn into_trial(self) -> TrialState {
        self.trial
    }

    pub fn instrument(&self) -> &InstrumentState {
        &self.instrument
    }

    pub fn ring(&self) -> &Pose {
        &self.ring
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn grasp_offset(&self) -> Option<Pose> {
        self.grasp_offset
    }

    /// Current state with a fresh projection of the ring onto the wire.
    pub fn snapshot(&self) -> Snapshot {
        let p = self.path.closest_pose(&self.ring.translation());
        Snapshot {
            step: self.step,
            phase: self.trial.phase,
            elapsed: self.trial.elapsed,
            ring: self.ring,
            instrument: self.instrument,
            deviation: p.distance,
            angular_deviation: rotation_angle(&self.ring.rotation(), &p.desired.rotation()),
            s_star: p.s_star,
            progress: self.trial.progress,
        }
    }

    pub fn observe(&self) -> Observation {
        Observation {
            step: self.step,
            phase: self.trial.phase,
            holding_ring: self.instrument.holding_ring,
            ring: self.ring,
        }
    }

    pub fn abort(&mut self, reason: impl Into<String>) {
        if !self.trial.phase.is_finished() {
            self.trial.phase = TrialPhase::Aborted;
            self.trial.abort_reason = Some(reason.into());
        }
    }

    fn timed_out(&self) -> bool {
        self.step as f64 * self.cfg.dt >= self.cfg.timeout
    }

    /// Advance one control period under `cmd`. No-op once the trial is finished.
    pub fn step(&mut self, cmd: &OperatorCommand) {
        if self.trial.phase.is_finished() {
            return;
        }
        if !cmd.is_finite() {
            self.abort(format!("non-finite command at step {}", self.step));
            return;
        }
        let cmd = cmd.clamped(&self.cfg);
        let dt = self.cfg.dt;

        if cmd.grip_closed && !self.instrument.grip_closed {
            self.instrument.grip_closed = true;
            if try_grasp(&self.instrument, &self.ring, self.cfg.capture_radius) {
                self.instrument.holding_ring = true;
                self.grasp_offset = Some(self.instrument.pose.inverse().compose(&self.ring));
                if self.trial.phase == TrialPhase::Ready {
                    self.trial.phase = TrialPhase::Running;
                    self.record_sample();
                }
            }
        } else if !cmd.grip_closed && self.instrument.grip_closed {
            self.instrument.grip_closed = false;
            if self.instrument.holding_ring {
                self.instrument.holding_ring = false;
                self.grasp_offset = None;
                self.ring_twist = Twist::zero();
                if self.trial.phase == TrialPhase::Running {
                    self.trial.drops += 1;
                }
            }
        }

        let before = self.instrument.pose;
        let mut pose = integrate(&before, &cmd.linear, &cmd.angular, dt);

        if let Some(offset) = self.grasp_offset {
            let carried = pose.compose(&offset);
            let proj = self.path.closest_pose(&carried.translation());
            let w = compute_wrench(&carried, &self.ring_twist, &proj.desired, &self.field, true)
                .expect("simulator poses are unit quaternions");
            let moved = integrate(
                &carried,
                &(self.cfg.compliance_t * w.force),
                &(self.cfg.compliance_r * w.torque),
                dt,
            );
            let clamped = moved.translation().sup(&self.ws_lo).inf(&self.ws_hi);
            let ring = Pose::new(clamped, moved.rotation());
            pose = ring.compose(&offset.inverse());
            self.ring_twist = finite_difference(&self.ring, &ring, dt);
            self.ring = ring;
            self.last_wrench = w;
            if self.trial.phase == TrialPhase::Running {
                self.trial.progress = self.trial.progress.max(proj.s_star);
            }
        } else {
            self.last_wrench = Wrench::zero();
        }

        self.instrument.twist = finite_difference(&before, &pose, dt);
        self.instrument.pose = pose;
        self.step += 1;

        if self.trial.phase == TrialPhase::Running && self.instrument.holding_ring {
            self.trial_steps += 1;
            self.trial.elapsed = self.trial_steps as f64 * dt;
            if self.clock.poll(self.trial_steps) {
                self.record_sample();
            }
            if check_completion(&self.trial, &self.path, self.cfg.end_tolerance) {
                self.trial.phase = TrialPhase::Completed;
                return;
            }
        }
        if self.timed_out() {
            self.abort(format!("timeout after {} s", self.cfg.timeout));
        }
    }

    fn record_sample(&mut self) {
        if self.trial_steps == 0 {
            // Initial sample at grasp; consume slot 0.
            self.clock.poll(0);
        }
        let proj = self.path.closest_pose(&self.ring.translation());
        self.trial.progress = self.trial.progress.max(proj.s_star);
        self.trial.samples.push(PoseSample {
            t: self.trial_steps as f64 * self.cfg.dt,
            ring: self.ring,
            twist: self.ring_twist,
            grip_closed: self.instrument.grip_closed,
            s_star: proj.s_star,
            deviation: proj.distance,
            angular_deviation: rotation_angle(&self.ring.rotation(), &proj.desired.rotation()),
            wrench: self.last_wrench,
        });
    }
}

/// Quaternion helper for callers building offsets by hand.
pub fn rotate_about_world(q: &Quat, rotvec: &Vec3) -> Quat {
    UnitQuaternion::from_scaled_axis(*rotvec) * q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcefield::FieldMode;
    use crate::geometry::build_canonical_path;

    fn sim(mode: FieldMode) -> Simulator {
        let path = Arc::new(build_canonical_path());
        Simulator::new(path, ForceFieldConfig::default().with_mode(mode), SimConfig::default())
    }

    /// Ring held `offset` meters off the wire at arc length 0.1 along the
    /// frame's normal axis.
    fn held_off_path(mode: FieldMode, offset: f64) -> Simulator {
        let path = Arc::new(build_canonical_path());
        let on = path.pose_at(0.1);
        let normal = on.rotation() * Vec3::y();
        let ring = Pose::new(on.translation() + offset * normal, on.rotation());
        let mut s = Simulator::with_initial_poses(
            path,
            ForceFieldConfig::default().with_mode(mode),
            SimConfig::default(),
            ring,
            ring,
        );
        s.step(&OperatorCommand::idle(true));
        assert!(s.instrument().holding_ring);
        s
    }

    #[test]
    fn null_field_zero_command_holds_still() {
        let mut s = sim(FieldMode::Null);
        s.step(&OperatorCommand::idle(true));
        let start = *s.ring();
        for _ in 0..1000 {
            s.step(&OperatorCommand::idle(true));
        }
        assert_eq!(s.ring().translation(), start.translation());
        assert_eq!(s.trial().phase, TrialPhase::Running);
    }

    #[test]
    fn convergent_field_pulls_back_monotonically() {
        let mut s = held_off_path(FieldMode::Convergent, 0.005);
        let mut last = s.snapshot().deviation;
        for _ in 0..2000 {
            s.step(&OperatorCommand::idle(true));
            let d = s.snapshot().deviation;
            assert!(d < last, "deviation rose from {last} to {d}");
            last = d;
        }
        assert!(last < 0.001, "final deviation {last}");
    }

    #[test]
    fn divergent_field_pushes_away_monotonically() {
        let mut s = held_off_path(FieldMode::Divergent, 0.001);
        let mut last = s.snapshot().deviation;
        let mut max_rate: f64 = 0.0;
        for _ in 0..2000 {
            s.step(&OperatorCommand::idle(true));
            let d = s.snapshot().deviation;
            assert!(d > last, "deviation fell from {last} to {d}");
            max_rate = max_rate.max((d - last) / 0.001);
            last = d;
        }
        let cfg = SimConfig::default();
        let f_max = ForceFieldConfig::default().f_max;
        assert!(max_rate <= cfg.compliance_t * f_max * (1.0 + 1e-9), "rate {max_rate}");
    }

    #[test]
    fn grasp_capture_radius_is_inclusive() {
        let ring = Pose::identity();
        let mut inst = InstrumentState {
            pose: Pose::identity(),
            twist: Twist::zero(),
            grip_closed: false,
            holding_ring: false,
        };
        assert!(try_grasp(&inst, &ring, 0.005));
        inst.pose = Pose::new(Vec3::new(0.05, 0.0, 0.0), Quat::identity());
        assert!(!try_grasp(&inst, &ring, 0.005));
        inst.pose = Pose::new(Vec3::new(0.005, 0.0, 0.0), Quat::identity());
        assert!(try_grasp(&inst, &ring, 0.005));
    }

    #[test]
    fn ring_color_endpoints_and_midpoint() {
        assert_eq!(ring_color(0.0, 0.01), 1.0);
        assert_eq!(ring_color(0.01, 0.01), 0.0);
        assert_eq!(ring_color(0.005, 0.01), 0.5);
        assert_eq!(ring_color(0.5, 0.01), 0.0);
    }

    #[test]
    fn completion_threshold() {
        let path = build_canonical_path();
        let mut st = TrialState::new();
        assert!(!check_completion(&st, &path, 0.005));
        st.progress = path.length();
        assert!(check_completion(&st, &path, 0.005));
        st.progress = path.length() - 0.006;
        assert!(!check_completion(&st, &path, 0.005));
    }

    #[test]
    fn sample_clock_counts() {
        let mut c = SampleClock::new(30, 1000);
        let mut n = 0;
        for k in 0..=10_000u64 {
            if c.poll(k) {
                n += 1;
            }
        }
        assert_eq!(n, 301);
    }

    #[test]
    fn first_sample_at_grasp() {
        let mut s = sim(FieldMode::Null);
        s.step(&OperatorCommand::idle(true));
        assert_eq!(s.trial().samples.len(), 1);
        assert_eq!(s.trial().samples[0].t, 0.0);
    }

    #[test]
    fn ten_second_trial_has_301_samples() {
        let mut s = sim(FieldMode::Null);
        s.step(&OperatorCommand::idle(true));
        for _ in 0..10_000 {
            s.step(&OperatorCommand::idle(true));
        }
        let t = s.trial();
        assert_eq!(t.samples.len(), 301);
        assert!((t.samples.last().unwrap().t - 10.0).abs() < 1e-9);
        assert!(t.samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn non_finite_command_aborts() {
        let mut s = sim(FieldMode::Null);
        let cmd = OperatorCommand { linear: Vec3::new(f64::NAN, 0.0, 0.0), ..Default::default() };
        s.step(&cmd);
        assert_eq!(s.trial().phase, TrialPhase::Aborted);
        assert!(s.trial().abort_reason.as_deref().unwrap().contains("non-finite"));
    }

    #[test]
    fn far_grasp_does_not_start_trial() {
        let path = Arc::new(build_canonical_path());
        let ring = path.pose_at(0.0);
        let inst = Pose::new(ring.translation() + Vec3::new(0.05, 0.0, 0.0), ring.rotation());
        let mut s = Simulator::with_initial_poses(path, ForceFieldConfig::default(), SimConfig::default(), ring, inst);
        s.step(&OperatorCommand::idle(true));
        assert!(!s.instrument().holding_ring);
        assert_eq!(s.trial().phase, TrialPhase::Ready);
    }

    #[test]
    fn drop_pauses_the_trial_clock() {
        let mut s = sim(FieldMode::Null);
        s.step(&OperatorCommand::idle(true));
        for _ in 0..500 {
            s.step(&OperatorCommand::idle(true));
        }
        for _ in 0..700 {
            s.step(&OperatorCommand::idle(false));
        }
        // The grasp step itself counts as held time.
        assert_eq!(s.trial().drops, 1);
        assert!((s.trial().elapsed - 0.501).abs() < 1e-12);
        s.step(&OperatorCommand::idle(true));
        assert!(s.instrument().holding_ring);
        assert!((s.trial().elapsed - 0.502).abs() < 1e-12);
    }

    #[test]
    fn speeds_are_clamped() {
        let cfg = SimConfig::default();
        let cmd = OperatorCommand { linear: Vec3::new(3.0, 4.0, 0.0), angular: Vec3::new(0.0, 0.0, 30.0), ..Default::default() };
        let c = cmd.clamped(&cfg);
        assert!((c.linear.norm() - 0.25).abs() < 1e-15);
        assert!((c.angular.norm() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn timeout_aborts() {
        let path = Arc::new(build_canonical_path());
        let cfg = SimConfig { timeout: 0.5, ..Default::default() };
        let mut s = Simulator::new(path, ForceFieldConfig::default(), cfg);
        for _ in 0..600 {
            s.step(&OperatorCommand::idle(true));
        }
        assert_eq!(s.trial().phase, TrialPhase::Aborted);
        assert_eq!(s.step_count(), 500);
    }
}
