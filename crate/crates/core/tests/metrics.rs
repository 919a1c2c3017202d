use proptest::prelude::*;
use ringwire_core::forcefield::Wrench;
use ringwire_core::geometry::{Pose, Twist};
use ringwire_core::metrics::*;
use ringwire_core::simulator::PoseSample;
use std::f64::consts::TAU;

const L: f64 = 0.3; // m
const T: f64 = 12.0; // s

/// Non-uniform progress along the wire: slow at both ends.
fn progress(t: f64) -> f64 {
    L * (t / T - (TAU * t / T).sin() / TAU)
}

fn deviation(s: f64) -> f64 {
    0.0015 + 0.001 * (TAU * 2.5 * s / L).sin()
}

fn angle(s: f64) -> f64 {
    0.08 + 0.05 * (TAU * 1.3 * s / L).cos()
}

fn trajectory(hz: f64) -> Vec<PoseSample> {
    let n = (T * hz).round() as usize;
    (0..=n)
        .map(|i| {
            let t = T * i as f64 / n as f64;
            let s = progress(t);
            PoseSample {
                t,
                ring: Pose::identity(),
                twist: Twist::zero(),
                grip_closed: true,
                s_star: s,
                deviation: deviation(s),
                angular_deviation: angle(s),
                wrench: Wrench::zero(),
            }
        })
        .collect()
}

/// Composite Simpson over arc length, in mm.
fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let h = L / n as f64;
    let mut acc = f(0.0) + f(L);
    for i in 1..n {
        acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0 * 1000.0
}

#[test]
fn path_errors_match_fine_quadrature() {
    let s = trajectory(30.0);
    let tpe_ref = simpson(|s| deviation(s) * 1000.0, 1_000_000);
    let rpe_ref = simpson(angle, 1_000_000);
    let tpe = translational_path_error(&s);
    let rpe = rotational_path_error(&s);
    assert!((tpe - tpe_ref).abs() / tpe_ref < 0.005, "{tpe} vs {tpe_ref}");
    assert!((rpe - rpe_ref).abs() / rpe_ref < 0.005, "{rpe} vs {rpe_ref}");
}

#[test]
fn path_errors_do_not_depend_on_sample_rate() {
    let base = trajectory(30.0);
    for hz in [15.0, 60.0, 240.0] {
        let other = trajectory(hz);
        let a = translational_path_error(&base);
        let b = translational_path_error(&other);
        assert!((a - b).abs() / b < 0.02, "{hz} Hz: {a} vs {b}");
        let a = rotational_path_error(&base);
        let b = rotational_path_error(&other);
        assert!((a - b).abs() / b < 0.02, "{hz} Hz: {a} vs {b}");
    }
}

#[test]
fn backtracking_counts_distance_travelled() {
    let mut s = trajectory(30.0);
    let back: Vec<PoseSample> = s.iter().rev().skip(1).cloned().collect();
    let one_way = translational_path_error(&s);
    let t_end = s.last().unwrap().t;
    for (i, mut b) in back.into_iter().enumerate() {
        b.t = t_end + (i + 1) as f64 / 30.0;
        s.push(b);
    }
    assert!((translational_path_error(&s) - 2.0 * one_way).abs() < 1e-9 * one_way);
}

#[test]
fn cf_of_seventeen_recovered() {
    let cfg = MetricsConfig::default();
    let trials: Vec<TrialMetrics> =
        (1..=50).map(|i| TrialMetrics::new(10.0, 0.5 * i as f64, 17.0 * 0.5 * i as f64, &cfg)).collect();
    assert!((derive_cf(&trials).unwrap() - 17.0).abs() < 1e-12);
    let zero = [TrialMetrics::new(1.0, 0.0, 1.0, &cfg)];
    assert_eq!(derive_cf(&zero), Err(MetricsError::UndefinedCf));
}

#[test]
fn cf_is_ratio_of_means_not_mean_of_ratios() {
    let cfg = MetricsConfig::default();
    let t = [TrialMetrics::new(1.0, 1.0, 10.0, &cfg), TrialMetrics::new(1.0, 3.0, 10.0, &cfg)];
    assert_eq!(derive_cf(&t).unwrap(), 20.0 / 4.0);
}

proptest! {
    #[test]
    fn cet_identity_is_exact(time in 0.1..300.0f64, tpe in 0.0..1e4f64, rpe in 0.0..1e3f64, cf in 0.0..100.0f64) {
        let cfg = MetricsConfig { cf };
        let m = TrialMetrics::new(time, tpe, rpe, &cfg);
        prop_assert_eq!(m.cet, time * (rpe + cf * tpe));
        prop_assert_eq!(combined_error_time(time, tpe, rpe, &cfg), m.cet);
    }

    #[test]
    fn cpv_matches_two_pass_formula(v in prop::collection::vec(0.0..1e5f64, 2..40)) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let cpv = combined_performance_variability(&v).unwrap();
        prop_assert!((cpv - sd).abs() <= 1e-9 * sd.max(1.0));
        use statrs::statistics::Statistics;
        prop_assert!((cpv - v.clone().std_dev()).abs() <= 1e-9 * sd.max(1.0));
    }

    #[test]
    fn quartiles_match_statrs(v in prop::collection::vec(-1e3..1e3f64, 1..60)) {
        use statrs::statistics::{Data, OrderStatistics};
        let q = quartiles(&v).unwrap();
        let mut d = Data::new(v.clone());
        // statrs' `quantile` uses a different rule; compare against type 7 by hand.
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        let t7 = |p: f64| {
            let h = (s.len() - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            s[lo] + (h - lo as f64) * (s[hi] - s[lo])
        };
        prop_assert!((q.q25 - t7(0.25)).abs() < 1e-12);
        prop_assert!((q.q50 - t7(0.5)).abs() < 1e-12);
        prop_assert!((q.q75 - t7(0.75)).abs() < 1e-12);
        prop_assert!((q.q50 - d.median()).abs() < 1e-9);
        prop_assert!(q.q25 <= q.q50 && q.q50 <= q.q75);
    }

    #[test]
    fn path_error_scales_linearly(k in 0.1..10.0f64) {
        let s = trajectory(30.0);
        let scaled: Vec<PoseSample> = s.iter().map(|p| PoseSample { deviation: p.deviation * k, ..*p }).collect();
        let a = translational_path_error(&s);
        prop_assert!((translational_path_error(&scaled) - k * a).abs() < 1e-9 * k * a);
    }
}
