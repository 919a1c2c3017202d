//! Spring-damper guidance wrench.
//!
//! ```text
//! F = -σ·k_T·(T_C - T_D) - d_T·Ṫ_C
//! τ =  σ·k_R·rpy(Q_D·Q_C⁻¹) - d_R·ω_C
//! ```
//!
//! `σ` is +1 in the convergent field, -1 in the divergent field and 0 in the
//! null field. `rpy(Q_D·Q_C⁻¹)` is the rotation still needed to reach the
//! desired frame, so with `σ = +1` the torque turns the ring toward it.
//! Damping keeps its sign in every mode. The result is norm-saturated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{quat_error_rpy, Pose, Quat, Twist, Vec3};

const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldMode {
    Convergent,
    Divergent,
    Null,
}

impl FieldMode {
    pub const ALL: [FieldMode; 3] = [FieldMode::Convergent, FieldMode::Divergent, FieldMode::Null];

    /// Sign applied to the stiffness terms.
    pub fn sign(self) -> f64 {
        match self {
            FieldMode::Convergent => 1.0,
            FieldMode::Divergent => -1.0,
            FieldMode::Null => 0.0,
        }
    }

    pub fn letter(self) -> char {
        match self {
            FieldMode::Convergent => 'c',
            FieldMode::Divergent => 'd',
            FieldMode::Null => 'n',
        }
    }

    pub fn from_letter(c: &str) -> Option<Self> {
        match c.to_ascii_lowercase().as_str() {
            "c" | "convergent" => Some(FieldMode::Convergent),
            "d" | "divergent" => Some(FieldMode::Divergent),
            "n" | "null" => Some(FieldMode::Null),
            _ => None,
        }
    }
}

impl std::fmt::Display for FieldMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FieldMode::Convergent => "convergent",
            FieldMode::Divergent => "divergent",
            FieldMode::Null => "null",
        })
    }
}

/// Field gains. Stiffness and damping are magnitudes; the mode supplies the
/// stiffness sign.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForceFieldConfig {
    pub mode: FieldMode,
    /// N/m
    pub k_t: f64,
    /// N·m/rad
    pub k_r: f64,
    /// N·s/m
    pub d_t: f64,
    /// N·m·s/rad
    pub d_r: f64,
    /// N
    pub f_max: f64,
    /// N·m
    pub tau_max: f64,
}

impl Default for ForceFieldConfig {
    fn default() -> Self {
        Self {
            mode: FieldMode::Null,
            k_t: 150.0,
            k_r: 0.05,
            d_t: 10.0,
            d_r: 0.002,
            f_max: 4.0,
            tau_max: 0.05,
        }
    }
}

impl ForceFieldConfig {
    pub fn with_mode(self, mode: FieldMode) -> Self {
        Self { mode, ..self }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let gains = [("k_t", self.k_t), ("k_r", self.k_r), ("d_t", self.d_t), ("d_r", self.d_r)];
        for (name, v) in gains {
            if !(v.is_finite() && v >= 0.0) {
                return Err(FieldError::InvalidGain { name, value: v });
            }
        }
        for (name, v) in [("f_max", self.f_max), ("tau_max", self.tau_max)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(FieldError::InvalidGain { name, value: v });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("{which} quaternion is not unit length (|q| = {norm})")]
    NonUnitQuaternion { which: &'static str, norm: f64 },
    #[error("gain {name} = {value} is out of range")]
    InvalidGain { name: &'static str, value: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

impl Wrench {
    pub fn zero() -> Self {
        Self::default()
    }
}

impl std::ops::Add for Wrench {
    type Output = Wrench;
    fn add(self, rhs: Wrench) -> Wrench {
        Wrench { force: self.force + rhs.force, torque: self.torque + rhs.torque }
    }
}

fn check_unit(q: &Quat, which: &'static str) -> Result<(), FieldError> {
    let norm = q.into_inner().norm();
    if (norm - 1.0).abs() > UNIT_TOLERANCE || !norm.is_finite() {
        return Err(FieldError::NonUnitQuaternion { which, norm });
    }
    Ok(())
}

/// Position and orientation springs, before saturation.
pub fn stiffness_wrench(current: &Pose, desired: &Pose, cfg: &ForceFieldConfig) -> Wrench {
    let sigma = cfg.mode.sign();
    let displacement = current.translation() - desired.translation();
    let rot_error = quat_error_rpy(&desired.rotation(), &current.rotation());
    Wrench {
        force: -sigma * (cfg.k_t * displacement),
        torque: sigma * (cfg.k_r * rot_error),
    }
}

/// Velocity damping, before saturation. Always dissipative.
pub fn damping_wrench(twist: &Twist, cfg: &ForceFieldConfig) -> Wrench {
    Wrench {
        force: -cfg.d_t * twist.linear,
        torque: -cfg.d_r * twist.angular,
    }
}

/// Guidance wrench at the instrument tip. Zero unless the gripper is closed.
pub fn compute_wrench(
    current: &Pose,
    twist: &Twist,
    desired: &Pose,
    cfg: &ForceFieldConfig,
    grip_closed: bool,
) -> Result<Wrench, FieldError> {
    check_unit(&current.rotation(), "current")?;
    check_unit(&desired.rotation(), "desired")?;
    if !grip_closed {
        return Ok(Wrench::zero());
    }
    let raw = stiffness_wrench(current, desired, cfg) + damping_wrench(twist, cfg);
    Ok(saturate(&raw, cfg))
}

fn cap(v: Vec3, limit: f64) -> Vec3 {
    let n = v.norm();
    if n > limit {
        v * (limit / n)
    } else {
        v
    }
}

/// Rescale force and torque to their caps, keeping direction.
pub fn saturate(w: &Wrench, cfg: &ForceFieldConfig) -> Wrench {
    Wrench { force: cap(w.force, cfg.f_max), torque: cap(w.torque, cfg.tau_max) }
}
