//! Observer/control socket messages and their handling.
//!
//! Every message is one JSON object per line with a `type` field.
//!
//! Client to server:
//!
//! ```text
//! {"type":"auth","token":"merp"}                       first message, always
//! {"type":"set-calibration","m":200.0,"k":0.5}
//! {"type":"inject-motion","turn_deg":90.0}
//! {"type":"inject-motion","step":{"dx":0.0,"dy":2.0}}  dx right, dy forward, metres
//! {"type":"reset"}
//! {"type":"subscribe"}
//! ```
//!
//! Server to client:
//!
//! ```text
//! {"type":"state","t":1.25,"x":0.0,"y":2.0,"yaw":80.8}
//! {"type":"event","time_us":10000,"kind":"mouse-move","dx":141}
//! {"type":"event","time_us":100000,"kind":"key-hold","key":"w","duration_ms":250}
//! {"type":"metrics","frames_received":10,...,"calibration":{"m":100.0,"k":1.0}}
//! {"type":"ack","of":"set-calibration"}
//! {"type":"error","message":"..."}
//! ```
//!
//! An inject-motion with both `turn_deg` and `step` turns first, then walks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::avatar::AvatarState;
use crate::hid::HidEvent;
use crate::metrics::MetricsSnapshot;
use crate::pipeline::{Output, Pipeline};
use crate::sensor::{encode_streams, AccelSample, CompassSample, EncodeError};
use crate::synth::{synthesize_accel, synthesize_compass, SynthError, TrajectoryBuilder};
use crate::time::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub dx: f64,
    pub dy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControlMessage {
    Auth {
        token: String,
    },
    SetCalibration {
        #[serde(alias = "M")]
        m: f64,
        #[serde(alias = "K")]
        k: f64,
    },
    InjectMotion {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        turn_deg: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<Step>,
    },
    Reset,
    Subscribe,
}

impl ControlMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ControlMessage::Auth { .. } => "auth",
            ControlMessage::SetCalibration { .. } => "set-calibration",
            ControlMessage::InjectMotion { .. } => "inject-motion",
            ControlMessage::Reset => "reset",
            ControlMessage::Subscribe => "subscribe",
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("control messages serialize")
    }
}

const CONTROL_KINDS: [&str; 5] = ["auth", "set-calibration", "inject-motion", "reset", "subscribe"];

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unknown message type `{0}`")]
    UnknownKind(String),
    #[error("not authenticated")]
    Unauthenticated,
    #[error("bad token")]
    BadToken,
    #[error("calibration values must be positive and finite")]
    InvalidCalibration,
    #[error("inject-motion needs turn_deg or step")]
    EmptyMotion,
    #[error("injected motion out of range: {0}")]
    Motion(String),
}

/// Parses one line, telling an unknown `type` apart from a malformed body.
pub fn parse_control(line: &str) -> Result<ControlMessage, ControlError> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| ControlError::Malformed(e.to_string()))?;
    let kind = value
        .get("type")
        .and_then(|t| t.as_str())
        .ok_or_else(|| ControlError::Malformed("missing string field `type`".into()))?;
    if !CONTROL_KINDS.contains(&kind) {
        return Err(ControlError::UnknownKind(kind.to_string()));
    }
    serde_json::from_value(value).map_err(|e| ControlError::Malformed(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEcho {
    pub m: f64,
    pub k: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsMessage {
    #[serde(flatten)]
    pub metrics: MetricsSnapshot,
    pub calibration: CalibrationEcho,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ServerMessage {
    State {
        /// Seconds of stream time.
        t: f64,
        x: f64,
        y: f64,
        yaw: f64,
    },
    Event(HidEvent),
    Metrics(MetricsMessage),
    Ack {
        of: String,
    },
    Error {
        message: String,
    },
}

impl ServerMessage {
    pub fn state(s: &AvatarState) -> Self {
        ServerMessage::State {
            t: s.t.as_secs_f64(),
            x: s.x,
            y: s.y,
            yaw: s.yaw_deg,
        }
    }

    pub fn metrics(pipeline: &Pipeline) -> Self {
        ServerMessage::Metrics(MetricsMessage {
            metrics: pipeline.metrics_snapshot(),
            calibration: CalibrationEcho {
                m: pipeline.mouse_factor().pixels(),
                k: pipeline.keyboard_factor().seconds_per_meter(),
            },
        })
    }

    pub fn from_output(out: &Output) -> Self {
        match out {
            Output::Event(e) => ServerMessage::Event(e.clone()),
            Output::Snapshot(s) => ServerMessage::state(s),
        }
    }

    pub fn ack(of: &str) -> Self {
        ServerMessage::Ack { of: of.to_string() }
    }

    pub fn error(e: impl std::fmt::Display) -> Self {
        ServerMessage::Error {
            message: e.to_string(),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

/// Nominal walking speed for injected steps, m/s.
const INJECT_SPEED: f64 = 1.0;

/// Synthesizes sensor frames for injected motion. Timestamps continue from
/// the pipeline's stream time; sequence numbers are the injector's own, so
/// injected bytes should go through a decoder of their own.
#[derive(Clone, Debug, Default)]
pub struct Injector {
    next_seq: [u32; 2],
    next_time: Timestamp,
}

impl Injector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds the byte stream for one inject-motion request. The motion
    /// starts one sample after the pipeline's latest time, at its last
    /// heading, and ends with enough stillness to close the open window.
    pub fn frames(
        &mut self,
        pipeline: &Pipeline,
        turn_deg: Option<f64>,
        step: Option<Step>,
    ) -> Result<Vec<u8>, ControlError> {
        if turn_deg.is_none() && step.is_none() {
            return Err(ControlError::EmptyMotion);
        }
        let finite = turn_deg.is_none_or(f64::is_finite)
            && step.is_none_or(|s| s.dx.is_finite() && s.dy.is_finite());
        if !finite {
            return Err(ControlError::Motion("values must be finite".into()));
        }
        let cfg = pipeline.config();
        let rate = cfg.synth_rate_hz;
        let period = 1.0 / rate;
        let integration = cfg.calibration.integration;

        let mut b = TrajectoryBuilder::new(rate, 0.0, 0.0, pipeline.last_heading().unwrap_or(0.0));
        if !pipeline.reckoner().is_calibrated() {
            b = b.hold(integration.bias_window as f64 * period);
        }
        // one still sample so the first compass delta is the requested turn
        b = b.hold(period);
        if let Some(turn) = turn_deg {
            let pieces = (turn.abs() / 180.0).ceil().max(1.0);
            for _ in 0..pieces as u32 {
                b = b.step_turn(turn / pieces);
            }
        }
        if let Some(s) = step {
            let dist = s.dx.hypot(s.dy);
            if dist > 0.0 {
                let secs = (dist / INJECT_SPEED).max(1.0);
                b = b
                    .hold(period)
                    .walk(s.dy, s.dx, secs, secs.round().max(1.0) as u32);
            }
        }
        let traj = b.hold(integration.window_s + 2.0 * period).build();

        let synth = |e: SynthError| ControlError::Motion(e.to_string());
        let mut compass = synthesize_compass(&traj, rate).map_err(synth)?;
        let mut accel = synthesize_accel(&traj, rate, cfg.world.frame).map_err(synth)?;

        let start = pipeline
            .stream_time()
            .map_or(Timestamp::ZERO, |t| t.saturating_add_micros((period * 1e6).round() as u64))
            .max(self.next_time);
        for c in &mut compass {
            c.timestamp = c.timestamp.saturating_add_micros(start.as_micros());
        }
        for a in &mut accel {
            a.timestamp = a.timestamp.saturating_add_micros(start.as_micros());
        }

        let first = (self.next_seq[0], self.next_seq[1]);
        let bytes = encode_streams(&compass, &accel, first)
            .map_err(|e: EncodeError| ControlError::Motion(e.to_string()))?;
        self.advance(&compass, &accel, first);
        Ok(bytes)
    }

    fn advance(&mut self, compass: &[CompassSample], accel: &[AccelSample], first: (u32, u32)) {
        self.next_seq = [
            first.0.wrapping_add(compass.len() as u32),
            first.1.wrapping_add(accel.len() as u32),
        ];
        let last = compass
            .last()
            .map(|c| c.timestamp)
            .max(accel.last().map(|a| a.timestamp))
            .unwrap_or_default();
        self.next_time = last.saturating_add_micros(1);
    }
}

/// What the caller should do after a control message.
#[derive(Debug, Default)]
pub struct ControlOutcome {
    /// Sent back to the client that issued the message.
    pub reply: Option<ServerMessage>,
    /// Pipeline output to broadcast, from a reset.
    pub outputs: Vec<Output>,
    /// Frames to feed into the pipeline as if from the serial source.
    pub inject: Option<Vec<u8>>,
    pub subscribe: bool,
}

/// Per-service control state: the token and the injector.
#[derive(Clone, Debug)]
pub struct ControlHandler {
    token: String,
    injector: Injector,
}

impl ControlHandler {
    pub fn new(token: impl Into<String>) -> Self {
        ControlHandler {
            token: token.into(),
            injector: Injector::new(),
        }
    }

    pub fn check_auth(&self, msg: &ControlMessage) -> Result<(), ControlError> {
        match msg {
            ControlMessage::Auth { token } if *token == self.token => Ok(()),
            ControlMessage::Auth { .. } => Err(ControlError::BadToken),
            _ => Err(ControlError::Unauthenticated),
        }
    }

    /// Handles a message from an authenticated connection.
    pub fn handle(&mut self, pipeline: &mut Pipeline, msg: &ControlMessage) -> ControlOutcome {
        let mut out = ControlOutcome::default();
        let result = match msg {
            ControlMessage::Auth { .. } => self.check_auth(msg),
            ControlMessage::SetCalibration { m, k } => pipeline
                .set_calibration(*m, *k)
                .map_err(|_| ControlError::InvalidCalibration),
            ControlMessage::InjectMotion { turn_deg, step } => self
                .injector
                .frames(pipeline, *turn_deg, *step)
                .map(|bytes| out.inject = Some(bytes)),
            ControlMessage::Reset => {
                out.outputs = pipeline.reset();
                Ok(())
            }
            ControlMessage::Subscribe => {
                out.subscribe = true;
                Ok(())
            }
        };
        out.reply = Some(match result {
            Ok(()) => ServerMessage::ack(msg.kind()),
            Err(e) => ServerMessage::error(e),
        });
        out
    }
}
