//! First-person avatar in a bounded room, driven by HID events.
//!
//! Stands in for the metaverse client: a mouse move turns the avatar by
//! `dx / pixels_per_degree` degrees, a key hold walks it `speed · duration`
//! metres. Holds are applied atomically at their emit time with the yaw
//! frozen, and the position is clamped to the room walls.

mod round_trip;

pub use round_trip::{
    padded, run_round_trip, FidelityReport, RoundTripConfig, RoundTripError, RoundTripOutcome,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hid::{Direction, HidEvent, HidEventKind, Key, KeyBindings};
use crate::synth::{body_to_world, AccelFrame};
use crate::time::Timestamp;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("unknown key `{0}`")]
    UnknownKey(Key),
    #[error("event at {event} precedes avatar time {state}")]
    EventInPast { event: Timestamp, state: Timestamp },
    #[error("{0} must be positive and finite")]
    InvalidSensitivity(&'static str),
    #[error("room dimensions must be positive and finite")]
    InvalidRoom,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvatarState {
    pub x: f64,
    pub y: f64,
    pub yaw_deg: f64,
    pub t: Timestamp,
}

impl AvatarState {
    pub fn new(x: f64, y: f64, yaw_deg: f64, t: Timestamp) -> Self {
        AvatarState {
            x,
            y,
            yaw_deg: normalize_yaw(yaw_deg),
            t,
        }
    }
}

impl Default for AvatarState {
    fn default() -> Self {
        AvatarState::new(0.0, 0.0, 0.0, Timestamp::ZERO)
    }
}

pub fn normalize_yaw(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// The client's own input settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameSensitivity {
    pub pixels_per_degree: f64,
    pub speed_mps: f64,
}

impl GameSensitivity {
    pub fn new(pixels_per_degree: f64, speed_mps: f64) -> Result<Self, WorldError> {
        let s = GameSensitivity {
            pixels_per_degree,
            speed_mps,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if !(self.pixels_per_degree.is_finite() && self.pixels_per_degree > 0.0) {
            return Err(WorldError::InvalidSensitivity("pixels_per_degree"));
        }
        if !(self.speed_mps.is_finite() && self.speed_mps > 0.0) {
            return Err(WorldError::InvalidSensitivity("speed_mps"));
        }
        Ok(())
    }

    /// Settings under which the avatar reproduces the user's motion:
    /// `M·π/180` pixels per degree and `1/K` metres per second.
    pub fn matched(mouse_factor_px: f64, keyboard_s_per_m: f64) -> Self {
        GameSensitivity {
            pixels_per_degree: mouse_factor_px * std::f64::consts::PI / 180.0,
            speed_mps: 1.0 / keyboard_s_per_m,
        }
    }
}

impl Default for GameSensitivity {
    fn default() -> Self {
        GameSensitivity {
            pixels_per_degree: 1.0,
            speed_mps: 1.0,
        }
    }
}

/// Axis-aligned room centred on the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub width: f64,
    pub depth: f64,
}

impl Default for Room {
    fn default() -> Self {
        Room {
            width: 10.0,
            depth: 10.0,
        }
    }
}

impl Room {
    pub fn validate(&self) -> Result<(), WorldError> {
        if [self.width, self.depth]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
        {
            Ok(())
        } else {
            Err(WorldError::InvalidRoom)
        }
    }

    pub fn clamp(&self, x: f64, y: f64) -> (f64, f64) {
        let (hw, hd) = (self.width / 2.0, self.depth / 2.0);
        (x.clamp(-hw, hw), y.clamp(-hd, hd))
    }
}

/// Everything the event applier needs besides the state itself.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig {
    pub sensitivity: GameSensitivity,
    pub bindings: KeyBindings,
    pub room: Room,
    /// `Body`: movement keys act relative to the avatar's yaw.
    /// `World`: forward is always north and right always east.
    pub frame: AccelFrame,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            sensitivity: GameSensitivity::default(),
            bindings: KeyBindings::default(),
            room: Room::default(),
            frame: AccelFrame::Body,
        }
    }
}

pub fn apply_event(
    state: &AvatarState,
    ev: &HidEvent,
    cfg: &WorldConfig,
) -> Result<AvatarState, WorldError> {
    if ev.time < state.t {
        return Err(WorldError::EventInPast {
            event: ev.time,
            state: state.t,
        });
    }
    let mut next = AvatarState { t: ev.time, ..*state };
    match &ev.kind {
        HidEventKind::MouseMove { dx } => {
            next.yaw_deg =
                normalize_yaw(state.yaw_deg + *dx as f64 / cfg.sensitivity.pixels_per_degree);
        }
        HidEventKind::KeyHold { key, duration_ms } => {
            let dir = cfg
                .bindings
                .direction_of(key)
                .ok_or_else(|| WorldError::UnknownKey(key.clone()))?;
            let dist = cfg.sensitivity.speed_mps * f64::from(*duration_ms) / 1000.0;
            let (right, forward) = match dir {
                Direction::Forward => (0.0, dist),
                Direction::Backward => (0.0, -dist),
                Direction::Right => (dist, 0.0),
                Direction::Left => (-dist, 0.0),
            };
            let heading = match cfg.frame {
                AccelFrame::Body => state.yaw_deg,
                AccelFrame::World => 0.0,
            };
            let (ex, ny) = body_to_world(right, forward, heading);
            (next.x, next.y) = cfg.room.clamp(state.x + ex, state.y + ny);
        }
    }
    Ok(next)
}

/// Single-writer avatar holder.
#[derive(Clone, Debug)]
pub struct AvatarWorld {
    state: AvatarState,
    cfg: WorldConfig,
}

impl AvatarWorld {
    pub fn new(initial: AvatarState, cfg: WorldConfig) -> Result<Self, WorldError> {
        cfg.sensitivity.validate()?;
        cfg.room.validate()?;
        Ok(AvatarWorld {
            state: initial,
            cfg,
        })
    }

    pub fn state(&self) -> AvatarState {
        self.state
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn apply(&mut self, ev: &HidEvent) -> Result<AvatarState, WorldError> {
        self.state = apply_event(&self.state, ev, &self.cfg)?;
        Ok(self.state)
    }

    /// Moves the avatar back to the room centre facing north; time is kept.
    pub fn recenter(&mut self) {
        self.state = AvatarState::new(0.0, 0.0, 0.0, self.state.t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(ppd: f64, speed: f64) -> WorldConfig {
        WorldConfig {
            sensitivity: GameSensitivity::new(ppd, speed).unwrap(),
            ..WorldConfig::default()
        }
    }

    fn hold(key: &str, ms: u32) -> HidEvent {
        HidEvent::key_hold(Timestamp(0), Key::new(key).unwrap(), ms)
    }

    #[test]
    fn mouse_turns_yaw() {
        let s = apply_event(
            &AvatarState::default(),
            &HidEvent::mouse_move(Timestamp(0), 90),
            &cfg(1.0, 1.0),
        )
        .unwrap();
        assert_eq!(s.yaw_deg, 90.0);
        let back = apply_event(&s, &HidEvent::mouse_move(Timestamp(0), -180), &cfg(1.0, 1.0))
            .unwrap();
        assert_eq!(back.yaw_deg, 270.0);
    }

    #[test]
    fn forward_hold_moves_along_heading() {
        let s = apply_event(&AvatarState::default(), &hold("w", 2000), &cfg(1.0, 1.5)).unwrap();
        assert!(s.x.abs() < 1e-12);
        assert!((s.y - 3.0).abs() < 1e-12);
    }

    #[test]
    fn displacement_rotates_with_yaw() {
        let c = cfg(1.0, 1.0);
        let base = apply_event(&AvatarState::default(), &hold("w", 1000), &c).unwrap();
        let start = AvatarState::new(0.0, 0.0, 90.0, Timestamp(0));
        let turned = apply_event(&start, &hold("w", 1000), &c).unwrap();
        // rotate (base.x, base.y) clockwise by 90 deg: (x, y) -> (y, -x)
        assert!((turned.x - base.y).abs() < 1e-12);
        assert!((turned.y + base.x).abs() < 1e-12);

        let right = apply_event(&start, &hold("d", 1000), &c).unwrap();
        assert!(right.x.abs() < 1e-12 && (right.y + 1.0).abs() < 1e-12);
    }

    #[test]
    fn world_frame_ignores_yaw() {
        let c = WorldConfig {
            frame: AccelFrame::World,
            ..cfg(1.0, 1.0)
        };
        let start = AvatarState::new(0.0, 0.0, 135.0, Timestamp(0));
        let s = apply_event(&start, &hold("d", 500), &c).unwrap();
        assert!((s.x - 0.5).abs() < 1e-12 && s.y.abs() < 1e-12);
    }

    #[test]
    fn walls_clamp() {
        let s = apply_event(&AvatarState::default(), &hold("s", 60_000), &cfg(1.0, 1.0)).unwrap();
        assert_eq!(s.y, -5.0);
    }

    #[test]
    fn errors() {
        assert_eq!(
            apply_event(&AvatarState::default(), &hold("q", 10), &cfg(1.0, 1.0)),
            Err(WorldError::UnknownKey(Key::new("q").unwrap()))
        );
        let later = AvatarState::new(0.0, 0.0, 0.0, Timestamp(10));
        assert!(matches!(
            apply_event(&later, &hold("w", 10), &cfg(1.0, 1.0)),
            Err(WorldError::EventInPast { .. })
        ));
        assert!(GameSensitivity::new(0.0, 1.0).is_err());
        assert!(GameSensitivity::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn matched_sensitivity() {
        let s = GameSensitivity::matched(180.0, 0.5);
        assert!((s.pixels_per_degree - std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(s.speed_mps, 2.0);
    }
}
