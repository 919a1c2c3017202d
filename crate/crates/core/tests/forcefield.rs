use nalgebra::UnitQuaternion;
use proptest::prelude::*;
use ringwire_core::forcefield::*;
use ringwire_core::geometry::{Pose, Quat, Twist, Vec3};

fn arb_vec(scale: f64) -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-scale..scale).prop_map(Vec3::from)
}

fn arb_quat() -> impl Strategy<Value = Quat> {
    arb_vec(3.0).prop_map(UnitQuaternion::from_scaled_axis)
}

fn arb_pose() -> impl Strategy<Value = Pose> {
    (arb_vec(0.2), arb_quat()).prop_map(|(t, q)| Pose::new(t, q))
}

fn arb_twist() -> impl Strategy<Value = Twist> {
    (arb_vec(0.5), arb_vec(5.0)).prop_map(|(linear, angular)| Twist { linear, angular })
}

fn arb_mode() -> impl Strategy<Value = FieldMode> {
    prop::sample::select(FieldMode::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn convergent_and_divergent_stiffness_are_negatives(c in arb_pose(), d in arb_pose()) {
        let cfg = ForceFieldConfig::default();
        let a = stiffness_wrench(&c, &d, &cfg.with_mode(FieldMode::Convergent));
        let b = stiffness_wrench(&c, &d, &cfg.with_mode(FieldMode::Divergent));
        prop_assert_eq!(a.force, -b.force);
        prop_assert_eq!(a.torque, -b.torque);
        let n = stiffness_wrench(&c, &d, &cfg.with_mode(FieldMode::Null));
        prop_assert_eq!(n.force.norm(), 0.0);
        prop_assert_eq!(n.torque.norm(), 0.0);
    }

    #[test]
    fn open_grip_means_no_wrench(c in arb_pose(), d in arb_pose(), tw in arb_twist(), mode in arb_mode()) {
        let w = compute_wrench(&c, &tw, &d, &ForceFieldConfig::default().with_mode(mode), false).unwrap();
        prop_assert_eq!(w, Wrench::zero());
    }

    #[test]
    fn saturation_caps_and_keeps_direction(c in arb_pose(), d in arb_pose(), tw in arb_twist(), mode in arb_mode()) {
        let cfg = ForceFieldConfig::default().with_mode(mode);
        let raw = stiffness_wrench(&c, &d, &cfg) + damping_wrench(&tw, &cfg);
        let w = compute_wrench(&c, &tw, &d, &cfg, true).unwrap();
        prop_assert!(w.force.norm() <= cfg.f_max * (1.0 + 1e-12));
        prop_assert!(w.torque.norm() <= cfg.tau_max * (1.0 + 1e-12));
        if raw.force.norm() > 0.0 {
            prop_assert!(w.force.normalize().dot(&raw.force.normalize()) > 1.0 - 1e-12);
        }
        if raw.force.norm() <= cfg.f_max {
            prop_assert_eq!(w.force, raw.force);
        }
    }

    #[test]
    fn damping_never_adds_energy(tw in arb_twist(), d_t in 0.0..50.0f64, d_r in 0.0..0.1f64) {
        let cfg = ForceFieldConfig { d_t, d_r, ..Default::default() };
        let w = damping_wrench(&tw, &cfg);
        prop_assert!(w.force.dot(&tw.linear) + w.torque.dot(&tw.angular) <= 0.0);
    }

    #[test]
    fn force_is_linear_in_displacement(off in arb_vec(0.01), alpha in -3.0..3.0f64, mode in arb_mode()) {
        let cfg = ForceFieldConfig::default().with_mode(mode);
        let d = Pose::identity();
        let f1 = stiffness_wrench(&Pose::new(off, Quat::identity()), &d, &cfg).force;
        let fa = stiffness_wrench(&Pose::new(off * alpha, Quat::identity()), &d, &cfg).force;
        prop_assert!((fa - f1 * alpha).norm() <= 1e-12);
    }

    #[test]
    fn convergent_force_points_back_to_wire(off in arb_vec(0.01)) {
        let cfg = ForceFieldConfig::default().with_mode(FieldMode::Convergent);
        let f = stiffness_wrench(&Pose::new(off, Quat::identity()), &Pose::identity(), &cfg).force;
        prop_assert!(f.dot(&off) <= 0.0);
    }

    #[test]
    fn convergent_torque_reduces_orientation_error(q in arb_vec(1.0)) {
        // For rotations below π the torque has a positive component along
        // the axis that carries current to desired.
        let cfg = ForceFieldConfig::default().with_mode(FieldMode::Convergent);
        let desired = Pose::new(Vec3::zeros(), UnitQuaternion::from_scaled_axis(q));
        let tau = stiffness_wrench(&Pose::identity(), &desired, &cfg).torque;
        prop_assert!(tau.dot(&q) >= 0.0);
    }
}

#[test]
fn zero_error_zero_velocity_gives_zero_in_every_mode() {
    let p = Pose::new(Vec3::new(0.1, -0.2, 0.3), UnitQuaternion::from_euler_angles(0.3, -0.2, 1.0));
    for mode in FieldMode::ALL {
        let w = compute_wrench(&p, &Twist::zero(), &p, &ForceFieldConfig::default().with_mode(mode), true).unwrap();
        assert_eq!(w.force, Vec3::zeros());
        assert!(w.torque.norm() < 1e-15);
    }
}

#[test]
fn config_round_trips_through_json() {
    let c = ForceFieldConfig { mode: FieldMode::Divergent, k_t: 123.5, ..Default::default() };
    let back: ForceFieldConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
    assert_eq!(back, c);
    for m in FieldMode::ALL {
        assert_eq!(FieldMode::from_letter(&m.letter().to_string()), Some(m));
        assert_eq!(FieldMode::from_letter(&m.to_string()), Some(m));
    }
}
