use merp_core::avatar::{run_round_trip, RoundTripConfig};
use merp_core::config::CalibrationConfig;
use merp_core::synth::{synthesize_compass, SynthError, Trajectory, TrajectoryBuilder};
use proptest::prelude::*;

fn rotate(x: f64, y: f64, phi: f64, cx: f64, cy: f64) -> (f64, f64) {
    let (s, c) = phi.to_radians().sin_cos();
    let (dx, dy) = (x - cx, y - cy);
    (cx + dx * c + dy * s, cy - dx * s + dy * c)
}

fn scenario(heading: f64, turn: f64, forward: f64, right: f64) -> Trajectory {
    TrajectoryBuilder::new(100.0, 0.5, -0.5, heading)
        .hold(0.1)
        .turn(turn, 0.6)
        .hold(0.1)
        .walk(forward, right, 1.5, 2)
        .hold(0.2)
        .build()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rotating_the_world_rotates_the_path(
        heading in 0.0..360.0f64,
        turn in -120.0..120.0f64,
        forward in -2.0..2.0f64,
        right in -1.0..1.0f64,
        phi in -180.0..180.0f64,
        centre in (-3.0..3.0f64, -3.0..3.0f64),
    ) {
        let truth = scenario(heading, turn, forward, right);
        let cfg = RoundTripConfig::matched(CalibrationConfig::new(100.0, 1.0).unwrap());
        let base = run_round_trip(&truth, &cfg).unwrap();
        let turned = run_round_trip(&truth.rotated(phi, centre.0, centre.1), &cfg).unwrap();

        prop_assert_eq!(base.states.len(), turned.states.len());
        for (a, b) in base.states.iter().zip(&turned.states) {
            let (x, y) = rotate(a.x, a.y, phi, centre.0, centre.1);
            prop_assert!((x - b.x).abs() < 1e-6 && (y - b.y).abs() < 1e-6, "{:?} {:?}", a, b);
            let dyaw = (b.yaw_deg - a.yaw_deg - phi).rem_euclid(360.0);
            prop_assert!(dyaw.min(360.0 - dyaw) < 1e-6);
        }
    }

    #[test]
    fn single_step_turn_error_within_small_angle_bound(theta in 1.0..30.0f64, sign in prop::bool::ANY) {
        let theta = if sign { theta } else { -theta };
        let m = 20_000.0;
        let truth = TrajectoryBuilder::new(100.0, 0.0, 0.0, 200.0)
            .hold(0.05)
            .step_turn(theta)
            .hold(0.05)
            .build();
        let r = run_round_trip(&truth, &RoundTripConfig::matched(CalibrationConfig::new(m, 1.0).unwrap()))
            .unwrap()
            .report;
        let rad = theta.abs().to_radians();
        // chord bound plus half a pixel of rounding
        let bound = rad * rad / 24.0 + 0.5 / (2.0 * m * (rad / 2.0).sin());
        prop_assert!(r.yaw_error_rel.unwrap() <= bound, "{:?}", r);
        let ppd = m * std::f64::consts::PI / 180.0;
        prop_assert!(r.avatar_turn_deg.abs() <= theta.abs() + 0.5 / ppd);
    }
}

#[test]
fn turn_faster_than_half_a_revolution_per_sample_is_rejected() {
    // three points inside one sample interval add up to 340 degrees
    let truth = Trajectory::parse("t x y heading\n0 0 0 0\n0.001 0 0 170\n0.002 0 0 340\n0.02 0 0 340\n")
        .unwrap();
    assert!(matches!(
        synthesize_compass(&truth, 100.0),
        Err(SynthError::TurnTooFast { .. })
    ));
}

#[test]
fn walk_and_turn_through_the_wire() {
    let truth = TrajectoryBuilder::new(100.0, 0.0, 0.0, 0.0)
        .hold(0.2)
        .step_turn(25.0)
        .hold(0.2)
        .walk(2.0, 0.0, 2.0, 2)
        .hold(0.3)
        .build();
    let cfg = RoundTripConfig {
        via_wire: true,
        ..RoundTripConfig::matched(CalibrationConfig::new(1000.0, 1.0).unwrap())
    };
    let r = run_round_trip(&truth, &cfg).unwrap().report;
    assert!(r.yaw_error_rel.unwrap() <= 0.01, "{r:?}");
    // the avatar walks along its own yaw, which is short of the truth
    let yaw_offset = r.yaw_error_deg.to_radians().abs();
    assert!(r.position_error_m <= 0.02 + 2.0 * yaw_offset, "{r:?}");
    assert!((r.avatar_distance_m - r.truth_distance_m).abs() < 0.02, "{r:?}");
}
