//! Ground truth → synthetic sensors → pipeline → avatar, and how far the
//! avatar ends up from the truth.

use serde::{Deserialize, Serialize};

use crate::avatar::{AvatarState, GameSensitivity, Room, WorldConfig};
use crate::config::CalibrationConfig;
use crate::hid::{HidEvent, HidEventKind, KeyBindings};
use crate::pipeline::{replay, Output, Pipeline, PipelineConfig, PipelineError};
use crate::sensor::{encode_streams, DEFAULT_ACCEL_RANGE};
use crate::synth::{
    add_accel_noise, synthesize_accel, synthesize_compass, AccelFrame, SynthError, Trajectory,
    TrajectoryPoint, DEFAULT_RATE_HZ,
};
use crate::time::Timestamp;

#[derive(Clone, Debug, PartialEq)]
pub struct RoundTripConfig {
    pub calibration: CalibrationConfig,
    pub sensitivity: GameSensitivity,
    pub bindings: KeyBindings,
    pub room: Room,
    pub frame: AccelFrame,
    pub rate_hz: f64,
    pub accel_noise_std: f64,
    pub seed: u64,
    /// Encode to the wire format and decode again on the way in.
    pub via_wire: bool,
}

impl RoundTripConfig {
    /// Game sensitivity matched to the calibration.
    pub fn matched(calibration: CalibrationConfig) -> Self {
        RoundTripConfig {
            sensitivity: GameSensitivity::matched(
                calibration.mouse_factor.pixels(),
                calibration.keyboard_factor.seconds_per_meter(),
            ),
            calibration,
            bindings: KeyBindings::default(),
            room: Room {
                width: 1000.0,
                depth: 1000.0,
            },
            frame: AccelFrame::Body,
            rate_hz: DEFAULT_RATE_HZ,
            accel_noise_std: 0.0,
            seed: 0,
            via_wire: false,
        }
    }
}

impl Default for RoundTripConfig {
    fn default() -> Self {
        Self::matched(CalibrationConfig::default())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub truth_turn_deg: f64,
    pub avatar_turn_deg: f64,
    pub yaw_error_deg: f64,
    /// `|yaw error| / |truth turn|`; absent for a trajectory without turning.
    pub yaw_error_rel: Option<f64>,
    pub truth_distance_m: f64,
    pub avatar_distance_m: f64,
    /// Distance between the final avatar position and the truth end point.
    pub position_error_m: f64,
    pub final_x: f64,
    pub final_y: f64,
    pub final_yaw_deg: f64,
    pub mouse_events: u64,
    pub key_events: u64,
}

#[derive(Clone, Debug)]
pub struct RoundTripOutcome {
    pub states: Vec<AvatarState>,
    pub events: Vec<HidEvent>,
    pub report: FidelityReport,
}

/// Prefixes the truth with the stationary bias phase and appends enough
/// stillness to close the last window.
pub fn padded(truth: &Trajectory, rate: f64, cfg: &CalibrationConfig) -> Result<Trajectory, SynthError> {
    let start = truth.start();
    let end = truth.end();
    let period = 1.0 / rate;
    let lead = cfg.integration.bias_window as f64 * period;
    let mut points: Vec<TrajectoryPoint> = (0..cfg.integration.bias_window)
        .map(|k| TrajectoryPoint {
            t: k as f64 * period,
            ..start
        })
        .collect();
    points.extend(truth.points().iter().map(|p| TrajectoryPoint {
        t: p.t - start.t + lead,
        ..*p
    }));
    let tail = (cfg.integration.window_s * rate).ceil() as usize + 2;
    let t_end = end.t - start.t + lead;
    points.extend((1..=tail).map(|k| TrajectoryPoint {
        t: t_end + k as f64 * period,
        ..end
    }));
    Trajectory::new(points)
}

pub fn run_round_trip(
    truth: &Trajectory,
    cfg: &RoundTripConfig,
) -> Result<RoundTripOutcome, RoundTripError> {
    let traj = padded(truth, cfg.rate_hz, &cfg.calibration)?;
    let compass = synthesize_compass(&traj, cfg.rate_hz)?;
    let mut accel = synthesize_accel(&traj, cfg.rate_hz, cfg.frame)?;
    add_accel_noise(&mut accel, cfg.accel_noise_std, cfg.seed)?;

    let start = truth.start();
    let initial = AvatarState::new(start.x, start.y, start.heading_deg, Timestamp::ZERO);
    let pcfg = PipelineConfig {
        calibration: cfg.calibration,
        world: WorldConfig {
            sensitivity: cfg.sensitivity,
            bindings: cfg.bindings.clone(),
            room: cfg.room,
            frame: cfg.frame,
        },
        initial,
        accel_range: DEFAULT_ACCEL_RANGE,
        synth_rate_hz: cfg.rate_hz,
        ..PipelineConfig::default()
    };

    let (outputs, final_state) = if cfg.via_wire {
        let bytes = encode_streams(&compass, &accel, (0, 0))
            .map_err(|e| RoundTripError::Wire(e.to_string()))?;
        let r = replay(&bytes, pcfg)?;
        (r.outputs, r.final_state)
    } else {
        let mut p = Pipeline::new(pcfg)?;
        let out = p.process_samples(&compass, &accel);
        (out, p.avatar())
    };

    let mut states = Vec::new();
    let mut events = Vec::new();
    for o in outputs {
        match o {
            Output::Event(e) => events.push(e),
            Output::Snapshot(s) => states.push(s),
        }
    }

    let mut dx_total = 0i64;
    let mut mouse_events = 0;
    let mut key_events = 0;
    for e in &events {
        match e.kind {
            HidEventKind::MouseMove { dx } => {
                dx_total += dx;
                mouse_events += 1;
            }
            HidEventKind::KeyHold { .. } => key_events += 1,
        }
    }
    let truth_turn_deg = truth.total_turn_deg();
    let avatar_turn_deg = dx_total as f64 / cfg.sensitivity.pixels_per_degree;
    let yaw_error_deg = avatar_turn_deg - truth_turn_deg;
    let end = truth.end();
    let report = FidelityReport {
        truth_turn_deg,
        avatar_turn_deg,
        yaw_error_deg,
        yaw_error_rel: (truth_turn_deg != 0.0).then(|| yaw_error_deg.abs() / truth_turn_deg.abs()),
        truth_distance_m: (end.x - start.x).hypot(end.y - start.y),
        avatar_distance_m: (final_state.x - start.x).hypot(final_state.y - start.y),
        position_error_m: (final_state.x - end.x).hypot(final_state.y - end.y),
        final_x: final_state.x,
        final_y: final_state.y,
        final_yaw_deg: final_state.yaw_deg,
        mouse_events,
        key_events,
    };
    Ok(RoundTripOutcome {
        states,
        events,
        report,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum RoundTripError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("encoding frames: {0}")]
    Wire(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::TrajectoryBuilder;

    fn cal(m: f64, k: f64) -> CalibrationConfig {
        CalibrationConfig::new(m, k).unwrap()
    }

    #[test]
    fn step_turn_matches_chord_error() {
        let truth = TrajectoryBuilder::new(100.0, 0.0, 0.0, 10.0)
            .hold(0.05)
            .step_turn(20.0)
            .hold(0.05)
            .build();
        let out = run_round_trip(&truth, &RoundTripConfig::matched(cal(2000.0, 1.0))).unwrap();
        let r = out.report;
        assert_eq!(r.mouse_events, 1);
        let theta = 20f64.to_radians();
        let chord = (2.0 * 2000.0 * (theta / 2.0).sin()).round();
        let expected = chord / (2000.0 * std::f64::consts::PI / 180.0);
        assert!((r.avatar_turn_deg - expected).abs() < 1e-9);
        assert!(r.position_error_m < 1e-12);
    }

    #[test]
    fn walk_lands_near_truth() {
        let truth = TrajectoryBuilder::new(100.0, 1.0, -1.0, 30.0)
            .hold(0.1)
            .walk(2.0, 0.0, 2.0, 2)
            .hold(0.2)
            .build();
        for via_wire in [false, true] {
            let cfg = RoundTripConfig {
                via_wire,
                ..RoundTripConfig::matched(cal(100.0, 0.5))
            };
            let out = run_round_trip(&truth, &cfg).unwrap();
            assert!(out.report.position_error_m < 0.02, "{:?}", out.report);
            assert!(out.report.key_events > 0);
            assert!(!out.states.is_empty());
        }
    }

    #[test]
    fn still_trajectory_produces_nothing() {
        let truth = TrajectoryBuilder::new(100.0, 0.0, 0.0, 0.0).hold(10.0).build();
        let out = run_round_trip(&truth, &RoundTripConfig::default()).unwrap();
        assert!(out.events.is_empty());
        assert_eq!(out.report.yaw_error_rel, None);
        assert_eq!(out.report.position_error_m, 0.0);
    }
}
