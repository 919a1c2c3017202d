//! Synthetic operator: a noisy, delayed pursuit controller that carries the
//! ring along the wire.
//!
//! Every decision period it predicts where the ring is now from a delayed
//! observation plus its own commands since then, then steers toward a point
//! slightly ahead along the local tangent. Commands are held between
//! decisions. Noise shrinks geometrically with completed trials.

use std::collections::VecDeque;

use nalgebra::UnitQuaternion;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::forcefield::FieldMode;
use crate::geometry::{canonicalize, Pose, Vec3, WirePath};
use crate::simulator::{Observation, OperatorCommand, TrialPhase};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubjectModel {
    /// 1/s
    pub tracking_gain: f64,
    /// 1/s
    pub angular_gain: f64,
    /// m
    pub lookahead: f64,
    /// m, per decision, before the gain.
    pub noise_sd: f64,
    /// rad, per decision, before the gain.
    pub angular_noise_sd: f64,
    /// s
    pub reaction_lag: f64,
    /// s
    pub decision_period: f64,
    /// Fractional noise reduction per completed trial.
    pub learning_rate: f64,
    /// Noise never drops below this fraction of its starting level.
    pub noise_floor: f64,
    /// Share of the learning from convergent-field trials that is lost once
    /// the field is removed. 0 transfers fully; 1 learns nothing unassisted.
    pub guidance_dependence: f64,
}

impl Default for SubjectModel {
    fn default() -> Self {
        Self {
            tracking_gain: 4.0,
            angular_gain: 4.0,
            lookahead: 0.01,
            noise_sd: 0.01,
            angular_noise_sd: 0.15,
            reaction_lag: 0.1,
            decision_period: 0.01,
            learning_rate: 0.015,
            noise_floor: 0.2,
            guidance_dependence: 0.0,
        }
    }
}

impl SubjectModel {
    pub fn validate(&self) -> Result<(), String> {
        let non_negative = [
            ("tracking_gain", self.tracking_gain),
            ("angular_gain", self.angular_gain),
            ("lookahead", self.lookahead),
            ("noise_sd", self.noise_sd),
            ("angular_noise_sd", self.angular_noise_sd),
            ("reaction_lag", self.reaction_lag),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        if !(self.decision_period.is_finite() && self.decision_period > 0.0) {
            return Err(format!("decision_period = {} must be positive", self.decision_period));
        }
        if !(0.0..1.0).contains(&self.learning_rate) {
            return Err(format!("learning_rate = {} must be in [0, 1)", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.noise_floor) {
            return Err(format!("noise_floor = {} must be in [0, 1]", self.noise_floor));
        }
        if !(0.0..=1.0).contains(&self.guidance_dependence) {
            return Err(format!("guidance_dependence = {} must be in [0, 1]", self.guidance_dependence));
        }
        Ok(())
    }
}

fn gaussian3(rng: &mut ChaCha8Rng, sd: f64) -> Vec3 {
    if sd == 0.0 {
        return Vec3::zeros();
    }
    Vec3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    ) * sd
}

/// One pursuit decision for a believed ring pose.
pub fn synthetic_command(
    model: &SubjectModel,
    noise_scale: f64,
    path: &WirePath,
    believed: &Pose,
    rng: &mut ChaCha8Rng,
) -> OperatorCommand {
    let x = believed.translation();
    let proj = path.closest_pose(&x);
    let tangent = path.unit_tangent_at_u(proj.u);
    let remaining = (path.length() - proj.s_star).max(0.0);
    let ahead = model.lookahead.min(remaining + 0.5 * model.lookahead);

    let lateral_noise = gaussian3(rng, model.noise_sd * noise_scale);
    let linear = model.tracking_gain * (proj.desired.translation() - x + ahead * tangent + lateral_noise);

    let speed = linear.dot(&tangent).max(0.0);
    let feed_forward = path.frame_rate_at(proj.s_star) * speed;
    let err = canonicalize(proj.desired.rotation() * believed.rotation().inverse()).scaled_axis();
    let angular_noise = gaussian3(rng, model.angular_noise_sd * noise_scale);
    let angular = feed_forward + model.angular_gain * (err + angular_noise);

    OperatorCommand { linear, angular, grip_closed: true, timestamp: 0.0 }
}

/// Stateful driver around [`synthetic_command`]: reaction delay, forward
/// prediction, zero-order hold and learning across trials.
#[derive(Clone, Debug)]
pub struct SyntheticOperator {
    model: SubjectModel,
    rng: ChaCha8Rng,
    noise_scale: f64,
    /// Extra noise factor that appears when a convergent field is removed.
    dependence_scale: f64,
    dt: f64,
    lag_steps: usize,
    decision_steps: u64,
    /// Ring poses observed at each of the last `lag_steps + 1` steps.
    observed: VecDeque<Pose>,
    /// Commands issued at each of the last `lag_steps` steps.
    issued: VecDeque<OperatorCommand>,
    held: OperatorCommand,
    field: FieldMode,
    trials_completed: u32,
}

impl SyntheticOperator {
    pub fn new(model: SubjectModel, seed: u64, dt: f64) -> Self {
        Self {
            lag_steps: (model.reaction_lag / dt).round() as usize,
            decision_steps: ((model.decision_period / dt).round() as u64).max(1),
            model,
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise_scale: 1.0,
            dependence_scale: 1.0,
            dt,
            observed: VecDeque::new(),
            issued: VecDeque::new(),
            held: OperatorCommand::idle(true),
            field: FieldMode::Null,
            trials_completed: 0,
        }
    }

    pub fn model(&self) -> &SubjectModel {
        &self.model
    }

    /// Noise multiplier in effect for a trial in `field`.
    pub fn noise_scale(&self, field: FieldMode) -> f64 {
        match field {
            FieldMode::Convergent => self.noise_scale,
            _ => self.noise_scale * self.dependence_scale,
        }
    }

    pub fn trials_completed(&self) -> u32 {
        self.trials_completed
    }

    /// Reseed the noise stream, e.g. once per trial so that trial `k` draws
    /// the same numbers regardless of how earlier trials were scheduled.
    pub fn reseed(&mut self, seed: u64, stream: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.rng.set_stream(stream);
    }

    /// Clear per-trial memory before a new trial in `field`.
    pub fn begin_trial(&mut self, field: FieldMode) {
        self.field = field;
        self.observed.clear();
        self.issued.clear();
        self.held = OperatorCommand::idle(true);
    }

    /// Update the learning state after a trial ends.
    pub fn end_trial(&mut self, completed: bool) {
        if !completed {
            return;
        }
        self.trials_completed += 1;
        let before = self.noise_scale;
        self.noise_scale = (before * (1.0 - self.model.learning_rate)).max(self.model.noise_floor);
        if self.field == FieldMode::Convergent {
            // The assisted share of this gain does not carry over to unassisted trials.
            self.dependence_scale *= (before / self.noise_scale).powf(self.model.guidance_dependence);
        }
    }

    fn believed_pose(&self) -> Pose {
        let base = *self.observed.front().expect("at least one observation");
        let mut t = base.translation();
        let mut q = base.rotation();
        for c in &self.issued {
            t += c.linear * self.dt;
            q = UnitQuaternion::from_scaled_axis(c.angular * self.dt) * q;
        }
        Pose::new(t, q)
    }

    /// Command for the next step given the current simulator state.
    pub fn act(&mut self, obs: &Observation, path: &WirePath) -> OperatorCommand {
        self.observed.push_back(obs.ring);
        while self.observed.len() > self.lag_steps + 1 {
            self.observed.pop_front();
        }
        // Commands issued after the delayed observation was taken.
        let pending = self.observed.len() - 1;
        while self.issued.len() > pending {
            self.issued.pop_front();
        }

        let cmd = if obs.phase != TrialPhase::Running || !obs.holding_ring {
            OperatorCommand::idle(true)
        } else {
            if obs.step.is_multiple_of(self.decision_steps) || self.held.linear == Vec3::zeros() {
                let believed = self.believed_pose();
                let scale = self.noise_scale(self.field);
                self.held = synthetic_command(&self.model, scale, path, &believed, &mut self.rng);
            }
            self.held
        };
        self.issued.push_back(cmd);
        cmd
    }
}
