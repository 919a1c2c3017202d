//! Cohort report: group quartiles, improvement, variability and rank tests,
//! all recomputed from trial logs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::log::TrialRecord;
use super::plan::Block;
use super::{AnalysisConfig, CfPolicy, ExperimentError};
use crate::forcefield::FieldMode;
use crate::metrics::{
    derive_cf, quartiles, summarize_session, trial_metrics, Metric, MetricsConfig, Quartiles, SessionSummary,
    TrialMetrics,
};
use crate::simulator::TrialPhase;
use crate::stats::{dunn_test, kruskal_wallis, wilcoxon_signed_rank, Adjustment, TestResult};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectSummary {
    pub subject: String,
    pub group: FieldMode,
    pub completed: usize,
    pub aborted: usize,
    /// Why the subject is left out of group statistics.
    pub excluded: Option<String>,
    pub session: Option<SessionSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupBlock {
    pub block: Block,
    /// Quartiles of per-subject block means.
    pub metrics: BTreeMap<Metric, Quartiles>,
    pub cpv: Option<Quartiles>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: FieldMode,
    pub subjects: Vec<String>,
    pub blocks: Vec<GroupBlock>,
    pub improvement: BTreeMap<Metric, Quartiles>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pairwise {
    pub a: FieldMode,
    pub b: FieldMode,
    pub z: f64,
    pub p_value: f64,
    pub p_unadjusted: f64,
}

/// Kruskal-Wallis across groups plus Dunn's pairwise follow-up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    /// `baseline`, `final`, `improvement` or `cpv_final`.
    pub quantity: String,
    pub metric: Option<Metric>,
    pub groups: Vec<FieldMode>,
    pub kruskal_wallis: Option<TestResult>,
    pub dunn: Vec<Pairwise>,
    pub error: Option<String>,
}

/// Signed-rank test of final against baseline within one group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WithinGroup {
    pub group: FieldMode,
    /// A metric label, or `cpv`.
    pub quantity: String,
    pub subjects: usize,
    pub result: Option<TestResult>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub path_hash: String,
    pub cf_policy: CfPolicy,
    pub cf: f64,
    pub adjustment: Adjustment,
    pub trials: usize,
    pub completed: usize,
    pub aborted: Vec<String>,
    pub subjects: Vec<SubjectSummary>,
    pub groups: Vec<GroupSummary>,
    pub between_groups: Vec<GroupComparison>,
    pub within_groups: Vec<WithinGroup>,
}

impl ExperimentReport {
    pub fn comparison(&self, quantity: &str, metric: Option<Metric>) -> Option<&GroupComparison> {
        self.between_groups.iter().find(|c| c.quantity == quantity && c.metric == metric)
    }

    pub fn within(&self, group: FieldMode, quantity: &str) -> Option<&WithinGroup> {
        self.within_groups.iter().find(|w| w.group == group && w.quantity == quantity)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn compare(quantity: &str, metric: Option<Metric>, data: &[(FieldMode, Vec<f64>)], adj: Adjustment) -> GroupComparison {
    let groups: Vec<FieldMode> = data.iter().map(|(g, _)| *g).collect();
    let values: Vec<&[f64]> = data.iter().map(|(_, v)| v.as_slice()).collect();
    let mut out = GroupComparison {
        quantity: quantity.to_string(),
        metric,
        groups: groups.clone(),
        kruskal_wallis: None,
        dunn: Vec::new(),
        error: None,
    };
    match kruskal_wallis(&values) {
        Ok(kw) => out.kruskal_wallis = Some(kw),
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    }
    match dunn_test(&values, adj) {
        Ok(d) => {
            out.dunn = d
                .iter()
                .map(|c| Pairwise {
                    a: groups[c.group_a],
                    b: groups[c.group_b],
                    z: c.result.statistic,
                    p_value: c.result.p_value,
                    p_unadjusted: c.p_unadjusted,
                })
                .collect()
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

fn within(group: FieldMode, quantity: &str, diffs: Vec<f64>) -> WithinGroup {
    let (result, error) = match wilcoxon_signed_rank(&diffs) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    WithinGroup { group, quantity: quantity.to_string(), subjects: diffs.len(), result, error }
}

fn block_index(b: Block) -> usize {
    Block::ALL.iter().position(|x| *x == b).expect("listed block")
}

/// Build the report from trial records.
pub fn build_report(trials: &[TrialRecord], analysis: &AnalysisConfig) -> Result<ExperimentReport, String> {
    let first = trials.first().ok_or("no trial logs")?;
    let path_hash = first.header.path_hash.clone();
    if let Some(t) = trials.iter().find(|t| t.header.path_hash != path_hash) {
        return Err(format!("{} was run on a different wire ({})", t.header.trial_id, t.header.path_hash));
    }

    // Time and path errors from the samples; CET once cf is known.
    let mut raw: Vec<Option<TrialMetrics>> = Vec::with_capacity(trials.len());
    for t in trials {
        raw.push(if t.header.phase == TrialPhase::Completed {
            Some(trial_metrics(&t.samples, &MetricsConfig::default()).map_err(|e| format!("{}: {e}", t.header.trial_id))?)
        } else {
            None
        });
    }
    let cf = match analysis.cf {
        CfPolicy::Fixed(cf) => cf,
        CfPolicy::Derived => {
            let done: Vec<TrialMetrics> = raw.iter().flatten().copied().collect();
            derive_cf(&done).map_err(|e| e.to_string())?
        }
    };
    let mcfg = MetricsConfig { cf };
    let metrics: Vec<Option<TrialMetrics>> = raw.iter().map(|m| m.map(|m| m.with_cf(&mcfg))).collect();

    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in trials.iter().enumerate() {
        by_subject.entry(&t.header.subject).or_default().push(i);
    }

    let mut subjects = Vec::new();
    for (id, idx) in &by_subject {
        let group = trials[idx[0]].header.group;
        if let Some(&j) = idx.iter().find(|&&j| trials[j].header.group != group) {
            return Err(format!("{} is logged in two groups", trials[j].header.trial_id));
        }
        let mut blocks: Vec<Vec<TrialMetrics>> = vec![Vec::new(); Block::ALL.len()];
        let mut aborted = 0;
        for &j in idx {
            match metrics[j] {
                Some(m) => blocks[block_index(trials[j].header.block)].push(m),
                None => aborted += 1,
            }
        }
        let labelled: Vec<(&str, &[TrialMetrics])> =
            Block::ALL.iter().zip(&blocks).map(|(b, v)| (b.label(), v.as_slice())).collect();
        let session = summarize_session(&labelled, block_index(Block::Baseline), block_index(Block::Final)).ok();
        let excluded = if analysis.dropouts.iter().any(|d| d == id) {
            Some("dropout".to_string())
        } else if blocks[block_index(Block::Baseline)].is_empty() {
            Some("no completed baseline trials".to_string())
        } else if blocks[block_index(Block::Final)].is_empty() {
            Some("no completed final trials".to_string())
        } else {
            None
        };
        subjects.push(SubjectSummary {
            subject: id.to_string(),
            group,
            completed: idx.len() - aborted,
            aborted,
            excluded,
            session,
        });
    }

    let present: Vec<FieldMode> =
        FieldMode::ALL.into_iter().filter(|g| subjects.iter().any(|s| s.group == *g)).collect();
    let included = |g: FieldMode| -> Vec<&SessionSummary> {
        subjects
            .iter()
            .filter(|s| s.group == g && s.excluded.is_none())
            .filter_map(|s| s.session.as_ref())
            .collect()
    };
    let block_means = |g: FieldMode, b: Block, m: Metric| -> Vec<f64> {
        included(g).iter().filter_map(|s| s.blocks[block_index(b)].mean.get(&m).copied()).collect()
    };
    let block_cpv = |g: FieldMode, b: Block| -> Vec<f64> {
        included(g).iter().filter_map(|s| s.blocks[block_index(b)].cpv).collect()
    };
    let improvements = |g: FieldMode, m: Metric| -> Vec<f64> { included(g).iter().map(|s| s.improvement[&m]).collect() };

    let groups = present
        .iter()
        .map(|&g| GroupSummary {
            group: g,
            subjects: subjects
                .iter()
                .filter(|s| s.group == g && s.excluded.is_none())
                .map(|s| s.subject.clone())
                .collect(),
            blocks: Block::ALL
                .iter()
                .map(|&b| GroupBlock {
                    block: b,
                    metrics: Metric::ALL
                        .iter()
                        .filter_map(|&m| quartiles(&block_means(g, b, m)).ok().map(|q| (m, q)))
                        .collect(),
                    cpv: quartiles(&block_cpv(g, b)).ok(),
                })
                .collect(),
            improvement: Metric::ALL
                .iter()
                .filter_map(|&m| quartiles(&improvements(g, m)).ok().map(|q| (m, q)))
                .collect(),
        })
        .collect();

    let adj = analysis.adjustment;
    let mut between = Vec::new();
    for (quantity, block) in [("baseline", Block::Baseline), ("final", Block::Final)] {
        for m in Metric::ALL {
            let data: Vec<_> = present.iter().map(|&g| (g, block_means(g, block, m))).collect();
            between.push(compare(quantity, Some(m), &data, adj));
        }
    }
    for m in Metric::ALL {
        let data: Vec<_> = present.iter().map(|&g| (g, improvements(g, m))).collect();
        between.push(compare("improvement", Some(m), &data, adj));
    }
    let data: Vec<_> = present.iter().map(|&g| (g, block_cpv(g, Block::Final))).collect();
    between.push(compare("cpv_final", None, &data, adj));

    let mut within_groups = Vec::new();
    for &g in &present {
        for m in Metric::ALL {
            within_groups.push(within(g, m.label(), improvements(g, m)));
        }
        let diffs: Vec<f64> = included(g)
            .iter()
            .filter_map(|s| {
                let b = s.blocks[block_index(Block::Baseline)].cpv?;
                let f = s.blocks[block_index(Block::Final)].cpv?;
                Some(f - b)
            })
            .collect();
        within_groups.push(within(g, "cpv", diffs));
    }

    Ok(ExperimentReport {
        path_hash,
        cf_policy: analysis.cf,
        cf,
        adjustment: adj,
        trials: trials.len(),
        completed: metrics.iter().flatten().count(),
        aborted: trials
            .iter()
            .zip(&metrics)
            .filter(|(_, m)| m.is_none())
            .map(|(t, _)| t.header.trial_id.clone())
            .collect(),
        subjects,
        groups,
        between_groups: between,
        within_groups,
    })
}

fn fmt_q(q: Option<&Quartiles>) -> String {
    match q {
        Some(q) => format!("{:>10.3} {:>10.3} {:>10.3}", q.q25, q.q50, q.q75),
        None => format!("{:>10} {:>10} {:>10}", "-", "-", "-"),
    }
}

fn fmt_test(r: &Option<TestResult>, err: &Option<String>) -> String {
    match (r, err) {
        (Some(r), _) => r.to_string(),
        (None, Some(e)) => format!("not computed ({e})"),
        (None, None) => "not computed".to_string(),
    }
}

/// Plain-text tables mirroring the JSON report.
pub fn render_text(r: &ExperimentReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "wire {}", r.path_hash);
    let _ = writeln!(s, "trials {} completed {} aborted {}", r.trials, r.completed, r.aborted.len());
    let policy = match r.cf_policy {
        CfPolicy::Derived => "derived",
        CfPolicy::Fixed(_) => "fixed",
    };
    let _ = writeln!(s, "cf {:.6} ({policy})", r.cf);
    for sub in r.subjects.iter().filter(|s| s.excluded.is_some()) {
        let _ = writeln!(s, "excluded {}: {}", sub.subject, sub.excluded.as_deref().unwrap_or_default());
    }

    for m in Metric::ALL {
        let _ = writeln!(s, "\n{}", m.label());
        let _ = writeln!(s, "{:<12}{:>10} {:>10} {:>10}   {:>10} {:>10} {:>10}", "group", "base q25", "q50", "q75", "final q25", "q50", "q75");
        for g in &r.groups {
            let base = g.blocks[block_index(Block::Baseline)].metrics.get(&m);
            let fin = g.blocks[block_index(Block::Final)].metrics.get(&m);
            let _ = writeln!(s, "{:<12}{}   {}", g.group.to_string(), fmt_q(base), fmt_q(fin));
        }
        let _ = writeln!(s, "{:<12}{:>10} {:>10} {:>10}", "improvement", "q25", "q50", "q75");
        for g in &r.groups {
            let _ = writeln!(s, "{:<12}{}", g.group.to_string(), fmt_q(g.improvement.get(&m)));
        }
    }

    let _ = writeln!(s, "\nCPV");
    let _ = writeln!(s, "{:<12}{:>10} {:>10} {:>10}   {:>10} {:>10} {:>10}", "group", "base q25", "q50", "q75", "final q25", "q50", "q75");
    for g in &r.groups {
        let base = g.blocks[block_index(Block::Baseline)].cpv.as_ref();
        let fin = g.blocks[block_index(Block::Final)].cpv.as_ref();
        let _ = writeln!(s, "{:<12}{}   {}", g.group.to_string(), fmt_q(base), fmt_q(fin));
    }

    let _ = writeln!(s, "\nbetween groups");
    for c in &r.between_groups {
        let what = match c.metric {
            Some(m) => format!("{} {}", c.quantity, m.label()),
            None => c.quantity.clone(),
        };
        let _ = writeln!(s, "{what}: {}", fmt_test(&c.kruskal_wallis, &c.error));
        for d in &c.dunn {
            let _ = writeln!(s, "  {} vs {}: Z={:.4}, p={:.4}", d.a, d.b, d.z, d.p_value);
        }
    }
    let _ = writeln!(s, "\nwithin groups (final vs baseline)");
    for w in &r.within_groups {
        let _ = writeln!(s, "{} {}: {}", w.group, w.quantity, fmt_test(&w.result, &w.error));
    }
    s
}

/// Write `report.json` and `report.txt` into `dir`.
pub fn emit_report(r: &ExperimentReport, dir: &Path) -> Result<(), ExperimentError> {
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| ExperimentError::Io { path: p, source: e }
    };
    let json = dir.join(REPORT_JSON);
    fs::write(&json, r.to_json()).map_err(io(&json))?;
    let text = dir.join(REPORT_TEXT);
    fs::write(&text, render_text(r)).map_err(io(&text))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::log::TrialHeader;
    use crate::forcefield::{ForceFieldConfig, Wrench};
    use crate::geometry::{Pose, Twist};
    use crate::simulator::{PoseSample, SimConfig};

    /// Straight 100 mm run at constant deviation over `time` seconds.
    fn record(subject: &str, group: FieldMode, day: u8, trial: u8, time: f64, dev: f64, completed: bool) -> TrialRecord {
        let samples = (0..=10)
            .map(|i| PoseSample {
                t: time * i as f64 / 10.0,
                ring: Pose::identity(),
                twist: Twist::zero(),
                grip_closed: true,
                s_star: 0.01 * i as f64,
                deviation: dev,
                angular_deviation: 0.01,
                wrench: Wrench::zero(),
            })
            .collect();
        TrialRecord {
            header: TrialHeader {
                trial_id: format!("{subject}-d{day:02}-t{trial:02}"),
                subject: subject.into(),
                group,
                day,
                trial,
                block: Block::of(day, trial),
                field: ForceFieldConfig::default(),
                sim: SimConfig::default(),
                path_hash: "h".into(),
                phase: if completed { TrialPhase::Completed } else { TrialPhase::Aborted },
                elapsed: time,
                drops: 0,
                abort_reason: None,
                cf: 17.0,
                metrics: None,
            },
            samples,
        }
    }

    fn cohort() -> Vec<TrialRecord> {
        let mut v = Vec::new();
        for (k, g) in FieldMode::ALL.into_iter().enumerate() {
            for s in 0..3 {
                let id = format!("S{}{}", k, s);
                for t in 1..=2 {
                    v.push(record(&id, g, 1, t, 10.0 + s as f64, 0.002, true));
                    v.push(record(&id, g, 5, t, 8.0 - k as f64 + 0.1 * t as f64, 0.001 * (k + 1) as f64, true));
                }
            }
        }
        v
    }

    #[test]
    fn fixed_cf_and_improvement() {
        let r = build_report(&cohort(), &AnalysisConfig::default()).unwrap();
        assert_eq!(r.cf, 17.0);
        assert_eq!(r.groups.len(), 3);
        let s = &r.subjects[0];
        let sess = s.session.as_ref().unwrap();
        // baseline mean time 10, final mean 8.15
        assert!((sess.improvement[&Metric::Time] - (8.15 - 10.0)).abs() < 1e-9);
        // TPE = 2 mm × 100 mm
        assert!((sess.blocks[0].mean[&Metric::Tpe] - 200.0).abs() < 1e-9);
        let kw = r.comparison("final", Some(Metric::Time)).unwrap().kruskal_wallis.unwrap();
        assert!(kw.p_value < 0.05);
        assert_eq!(r.comparison("final", Some(Metric::Time)).unwrap().dunn.len(), 3);
        assert!(r.within(FieldMode::Null, Metric::Time.label()).is_some());
    }

    #[test]
    fn derived_cf_is_ratio_of_means() {
        let trials = cohort();
        let a = AnalysisConfig { cf: CfPolicy::Derived, ..Default::default() };
        let r = build_report(&trials, &a).unwrap();
        let ms: Vec<TrialMetrics> =
            trials.iter().map(|t| trial_metrics(&t.samples, &MetricsConfig::default()).unwrap()).collect();
        let tpe = ms.iter().map(|m| m.tpe).sum::<f64>() / ms.len() as f64;
        let rpe = ms.iter().map(|m| m.rpe).sum::<f64>() / ms.len() as f64;
        assert!((r.cf - rpe / tpe).abs() < 1e-12);
    }

    #[test]
    fn dropouts_and_aborts() {
        let mut trials = cohort();
        trials.push(record("S00", FieldMode::Convergent, 2, 3, 300.0, 0.002, false));
        let a = AnalysisConfig { dropouts: vec!["S01".into()], ..Default::default() };
        let r = build_report(&trials, &a).unwrap();
        assert_eq!(r.aborted, vec!["S00-d02-t03".to_string()]);
        assert_eq!(r.subjects.iter().find(|s| s.subject == "S01").unwrap().excluded.as_deref(), Some("dropout"));
        assert_eq!(r.groups[0].subjects, vec!["S00".to_string(), "S02".to_string()]);
        let text = render_text(&r);
        assert!(text.contains("excluded S01: dropout"));
        assert!(text.contains("aborted 1"));
    }

    #[test]
    fn missing_final_block_excludes_subject() {
        let trials: Vec<_> = cohort().into_iter().filter(|t| !(t.header.subject == "S20" && t.header.day == 5)).collect();
        let r = build_report(&trials, &AnalysisConfig::default()).unwrap();
        let s = r.subjects.iter().find(|s| s.subject == "S20").unwrap();
        assert_eq!(s.excluded.as_deref(), Some("no completed final trials"));
    }

    #[test]
    fn mixed_wires_rejected() {
        let mut trials = cohort();
        trials[3].header.path_hash = "other".into();
        assert!(build_report(&trials, &AnalysisConfig::default()).is_err());
        assert!(build_report(&[], &AnalysisConfig::default()).is_err());
    }

    #[test]
    fn json_round_trip() {
        let r = build_report(&cohort(), &AnalysisConfig::default()).unwrap();
        let back: ExperimentReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
