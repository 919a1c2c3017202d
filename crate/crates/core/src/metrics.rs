//! Trial and session performance metrics.
//!
//! Path errors are arc-length-weighted integrals over the reference wire,
//! reported in millimeters: TPE in mm², RPE in rad·mm. Progress is measured
//! along the wire (`Δs = |s*ᵢ − s*ᵢ₋₁|`), so dithering in place adds nothing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulator::PoseSample;

const MM: f64 = 1000.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("a trial needs at least 2 samples, got {0}")]
    InvalidTrial(usize),
    #[error("cf is undefined: every trial has zero translational path error")]
    UndefinedCf,
    #[error("{0} set is empty")]
    Empty(&'static str),
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    /// Weight of TPE against RPE in CET, rad/mm.
    pub cf: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { cf: 17.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    /// s
    pub time: f64,
    /// mm²
    pub tpe: f64,
    /// rad·mm
    pub rpe: f64,
    /// rad·mm·s
    pub cet: f64,
}

impl TrialMetrics {
    pub fn new(time: f64, tpe: f64, rpe: f64, cfg: &MetricsConfig) -> Self {
        Self { time, tpe, rpe, cet: combined_error_time(time, tpe, rpe, cfg) }
    }

    /// Same time and errors, CET recomputed under another `cf`.
    pub fn with_cf(&self, cfg: &MetricsConfig) -> Self {
        Self::new(self.time, self.tpe, self.rpe, cfg)
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Time => self.time,
            Metric::Tpe => self.tpe,
            Metric::Rpe => self.rpe,
            Metric::Cet => self.cet,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Time,
    Tpe,
    Rpe,
    Cet,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Time, Metric::Tpe, Metric::Rpe, Metric::Cet];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Time => "Time [s]",
            Metric::Tpe => "TPE [mm^2]",
            Metric::Rpe => "RPE [rad*mm]",
            Metric::Cet => "CET [rad*mm*s]",
        }
    }
}

pub fn trial_time(samples: &[PoseSample]) -> Result<f64, MetricsError> {
    match samples {
        [first, .., last] => Ok(last.t - first.t),
        _ => Err(MetricsError::InvalidTrial(samples.len())),
    }
}

/// `∫ e ds` over `(s, e)` pairs by the trapezoid rule on `|Δs|`.
///
/// Returns the integral and the total traversed arc length.
pub fn path_integral(points: impl IntoIterator<Item = (f64, f64)>) -> (f64, f64) {
    let mut it = points.into_iter();
    let Some((mut s_prev, mut e_prev)) = it.next() else {
        return (0.0, 0.0);
    };
    let mut total = 0.0;
    let mut travelled = 0.0;
    for (s, e) in it {
        let ds = (s - s_prev).abs();
        total += 0.5 * (e + e_prev) * ds;
        travelled += ds;
        s_prev = s;
        e_prev = e;
    }
    (total, travelled)
}

fn warn_if_degenerate(travelled: f64, what: &str) {
    if travelled == 0.0 {
        log::warn!("degenerate trial: no arc length traversed, {what} is 0");
    }
}

/// Translational path error, mm².
pub fn translational_path_error(samples: &[PoseSample]) -> f64 {
    let (v, travelled) = path_integral(samples.iter().map(|s| (s.s_star * MM, s.deviation * MM)));
    warn_if_degenerate(travelled, "TPE");
    v
}

/// Rotational path error, rad·mm.
pub fn rotational_path_error(samples: &[PoseSample]) -> f64 {
    let (v, travelled) = path_integral(samples.iter().map(|s| (s.s_star * MM, s.angular_deviation)));
    warn_if_degenerate(travelled, "RPE");
    v
}

pub fn combined_error_time(time: f64, tpe: f64, rpe: f64, cfg: &MetricsConfig) -> f64 {
    time * (rpe + cfg.cf * tpe)
}

pub fn trial_metrics(samples: &[PoseSample], cfg: &MetricsConfig) -> Result<TrialMetrics, MetricsError> {
    let time = trial_time(samples)?;
    Ok(TrialMetrics::new(
        time,
        translational_path_error(samples),
        rotational_path_error(samples),
        cfg,
    ))
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// `mean(RPE) / mean(TPE)` over every supplied trial.
pub fn derive_cf(trials: &[TrialMetrics]) -> Result<f64, MetricsError> {
    if trials.is_empty() {
        return Err(MetricsError::Empty("trial"));
    }
    let n = trials.len() as f64;
    let tpe = trials.iter().map(|t| t.tpe).sum::<f64>() / n;
    let rpe = trials.iter().map(|t| t.rpe).sum::<f64>() / n;
    if tpe <= 0.0 {
        return Err(MetricsError::UndefinedCf);
    }
    Ok(rpe / tpe)
}

/// `mean(final) − mean(baseline)`; negative means time or error went down.
pub fn improvement(baseline: &[TrialMetrics], final_day: &[TrialMetrics], metric: Metric) -> Result<f64, MetricsError> {
    let pick = |set: &[TrialMetrics]| set.iter().map(|t| t.get(metric)).collect::<Vec<_>>();
    let b = mean(&pick(baseline)).ok_or(MetricsError::Empty("baseline"))?;
    let f = mean(&pick(final_day)).ok_or(MetricsError::Empty("final"))?;
    Ok(f - b)
}

/// Sample standard deviation of CET (n − 1 denominator).
pub fn combined_performance_variability(cets: &[f64]) -> Result<f64, MetricsError> {
    if cets.len() < 2 {
        return Err(MetricsError::TooFew { need: 2, got: cets.len() });
    }
    // Welford
    let (mut m, mut m2) = (0.0, 0.0);
    for (i, x) in cets.iter().enumerate() {
        let delta = x - m;
        m += delta / (i + 1) as f64;
        m2 += delta * (x - m);
    }
    Ok((m2 / (cets.len() - 1) as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

/// Linear interpolation between order statistics (`h = (n − 1)·p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quartiles(values: &[f64]) -> Result<Quartiles, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty("value"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(Quartiles {
        q25: quantile_sorted(&v, 0.25),
        q50: quantile_sorted(&v, 0.5),
        q75: quantile_sorted(&v, 0.75),
    })
}

/// Per-block statistics of one subject's trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub label: String,
    pub trials: usize,
    pub mean: BTreeMap<Metric, f64>,
    pub quartiles: BTreeMap<Metric, Quartiles>,
    /// Needs at least two trials.
    pub cpv: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub blocks: Vec<BlockStats>,
    pub improvement: BTreeMap<Metric, f64>,
}

pub fn block_stats(label: &str, trials: &[TrialMetrics]) -> BlockStats {
    let mut mean_map = BTreeMap::new();
    let mut q_map = BTreeMap::new();
    for m in Metric::ALL {
        let v: Vec<f64> = trials.iter().map(|t| t.get(m)).collect();
        if let (Some(mu), Ok(q)) = (mean(&v), quartiles(&v)) {
            mean_map.insert(m, mu);
            q_map.insert(m, q);
        }
    }
    let cets: Vec<f64> = trials.iter().map(|t| t.cet).collect();
    BlockStats {
        label: label.to_string(),
        trials: trials.len(),
        mean: mean_map,
        quartiles: q_map,
        cpv: combined_performance_variability(&cets).ok(),
    }
}

/// Summarize labelled blocks; improvement is taken between the blocks at
/// indices `baseline` and `final_block`.
pub fn summarize_session(
    blocks: &[(&str, &[TrialMetrics])],
    baseline: usize,
    final_block: usize,
) -> Result<SessionSummary, MetricsError> {
    let (_, b) = blocks.get(baseline).ok_or(MetricsError::Empty("baseline"))?;
    let (_, f) = blocks.get(final_block).ok_or(MetricsError::Empty("final"))?;
    let mut imp = BTreeMap::new();
    for m in Metric::ALL {
        imp.insert(m, improvement(b, f, m)?);
    }
    Ok(SessionSummary {
        blocks: blocks.iter().map(|(l, t)| block_stats(l, t)).collect(),
        improvement: imp,
    })
}
