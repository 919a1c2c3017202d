#![allow(dead_code)]

use std::path::Path;

use ringwire_core::experiment::operator::SubjectModel;
use ringwire_core::experiment::ExperimentConfig;
use ringwire_core::forcefield::FieldMode;
use ringwire_core::geometry::PathSpec;
use ringwire_service::session::SessionSettings;

/// A 6 cm wire so trials finish in a couple of seconds.
pub fn short_path() -> PathSpec {
    PathSpec {
        control_points: vec![[0.0, 0.0, 0.0], [0.02, 0.01, 0.0], [0.04, 0.0, 0.01], [0.06, 0.0, 0.0]],
        twist_angle: 30f64.to_radians(),
        sample_count: 256,
    }
}

pub fn settings(log_dir: &Path, group: FieldMode) -> SessionSettings {
    SessionSettings {
        experiment: ExperimentConfig { path: short_path(), ..Default::default() },
        subject: "T01".into(),
        group,
        log_dir: log_dir.to_path_buf(),
    }
}

/// Operator driven by sparse observations: no modeled lag, a fresh decision
/// on every call.
pub fn remote_model() -> SubjectModel {
    SubjectModel { reaction_lag: 0.0, decision_period: 0.001, ..Default::default() }
}
