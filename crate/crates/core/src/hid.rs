//! Abstract HID event stream: relative mouse moves and timed key holds.
//!
//! Displacements from the dead reckoner become key holds of `K·|d|` seconds
//! on the bound movement key for each axis. Holds are quantized to 1 ms with
//! the sub-millisecond remainder carried per axis.
//!
//! Nothing here touches the operating system. A device adapter that injects
//! real input should consume [`to_input_actions`], which lowers holds into
//! press/release edges.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reckoner::MotionEstimate;
use crate::time::Timestamp;

/// Hold-duration resolution.
pub const HOLD_QUANTUM: Duration = Duration::from_millis(1);

#[derive(Debug, Error)]
pub enum HidError {
    #[error("keyboard factor must be positive and finite, got {0}")]
    InvalidKeyboardFactor(f64),
    #[error("key bindings must be four distinct keys")]
    DuplicateBinding,
    #[error("key identifier must not be empty")]
    EmptyKey,
    #[error("{stream} stream is not ordered by emit time at index {index}")]
    Unordered { stream: &'static str, index: usize },
    #[error("event log line {line}: {source}")]
    Log {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Abstract key identifier, e.g. `"w"`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Key(String);

impl Key {
    pub fn new(name: impl Into<String>) -> Result<Self, HidError> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(HidError::EmptyKey);
        }
        Ok(Key(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
    Left,
    Right,
}

impl Direction {
    pub fn opposite(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawBindings")]
pub struct KeyBindings {
    forward: Key,
    backward: Key,
    left: Key,
    right: Key,
}

#[derive(Deserialize)]
struct RawBindings {
    forward: Key,
    backward: Key,
    left: Key,
    right: Key,
}

impl TryFrom<RawBindings> for KeyBindings {
    type Error = HidError;
    fn try_from(raw: RawBindings) -> Result<Self, HidError> {
        KeyBindings::new(raw.forward, raw.backward, raw.left, raw.right)
    }
}

impl KeyBindings {
    pub fn new(forward: Key, backward: Key, left: Key, right: Key) -> Result<Self, HidError> {
        let all = [&forward, &backward, &left, &right];
        for (i, a) in all.iter().enumerate() {
            if all[i + 1..].contains(a) {
                return Err(HidError::DuplicateBinding);
            }
        }
        Ok(KeyBindings {
            forward,
            backward,
            left,
            right,
        })
    }

    pub fn key(&self, dir: Direction) -> &Key {
        match dir {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
            Direction::Left => &self.left,
            Direction::Right => &self.right,
        }
    }

    pub fn direction_of(&self, key: &Key) -> Option<Direction> {
        [
            Direction::Forward,
            Direction::Backward,
            Direction::Left,
            Direction::Right,
        ]
        .into_iter()
        .find(|&d| self.key(d) == key)
    }
}

impl Default for KeyBindings {
    /// WASD.
    fn default() -> Self {
        let k = |s: &str| Key(s.to_owned());
        KeyBindings {
            forward: k("w"),
            backward: k("s"),
            left: k("a"),
            right: k("d"),
        }
    }
}

/// Calibration factor K: seconds of key hold per metre moved.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct KeyboardFactor(f64);

impl KeyboardFactor {
    pub fn new(seconds_per_meter: f64) -> Result<Self, HidError> {
        if seconds_per_meter.is_finite() && seconds_per_meter > 0.0 {
            Ok(KeyboardFactor(seconds_per_meter))
        } else {
            Err(HidError::InvalidKeyboardFactor(seconds_per_meter))
        }
    }

    pub fn seconds_per_meter(self) -> f64 {
        self.0
    }

    /// Un-quantized hold time for a displacement, signed like `meters`.
    pub fn hold_seconds(self, meters: f64) -> f64 {
        self.0 * meters
    }
}

impl TryFrom<f64> for KeyboardFactor {
    type Error = HidError;
    fn try_from(v: f64) -> Result<Self, HidError> {
        KeyboardFactor::new(v)
    }
}

impl From<KeyboardFactor> for f64 {
    fn from(k: KeyboardFactor) -> f64 {
        k.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HidEventKind {
    MouseMove { dx: i64 },
    KeyHold { key: Key, duration_ms: u32 },
}

/// One emulated input. Key holds always last at least one quantum and mouse
/// moves are never zero.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HidEvent {
    #[serde(rename = "time_us")]
    pub time: Timestamp,
    #[serde(flatten)]
    pub kind: HidEventKind,
}

impl HidEvent {
    pub fn mouse_move(time: Timestamp, dx: i64) -> Self {
        debug_assert!(dx != 0);
        HidEvent {
            time,
            kind: HidEventKind::MouseMove { dx },
        }
    }

    pub fn key_hold(time: Timestamp, key: Key, duration_ms: u32) -> Self {
        debug_assert!(duration_ms > 0);
        HidEvent {
            time,
            kind: HidEventKind::KeyHold { key, duration_ms },
        }
    }

    pub fn is_mouse(&self) -> bool {
        matches!(self.kind, HidEventKind::MouseMove { .. })
    }

    pub fn hold_duration(&self) -> Option<Duration> {
        match self.kind {
            HidEventKind::KeyHold { duration_ms, .. } => {
                Some(Duration::from_millis(u64::from(duration_ms)))
            }
            HidEventKind::MouseMove { .. } => None,
        }
    }
}

/// Per-axis 1 ms quantizer with remainder carry.
#[derive(Clone, Copy, Debug, Default)]
struct AxisCarry(f64);

impl AxisCarry {
    /// Signed whole milliseconds for `seconds` plus the carried remainder.
    fn quantize(&mut self, seconds: f64) -> i64 {
        let wanted = seconds * 1000.0 + self.0;
        let q = wanted.round();
        self.0 = wanted - q;
        q as i64
    }
}

/// Turns per-window displacement estimates into key holds.
#[derive(Clone, Debug)]
pub struct KeyScheduler {
    factor: KeyboardFactor,
    bindings: KeyBindings,
    carry_x: AxisCarry,
    carry_y: AxisCarry,
}

impl KeyScheduler {
    pub fn new(factor: KeyboardFactor, bindings: KeyBindings) -> Self {
        KeyScheduler {
            factor,
            bindings,
            carry_x: AxisCarry::default(),
            carry_y: AxisCarry::default(),
        }
    }

    pub fn factor(&self) -> KeyboardFactor {
        self.factor
    }

    pub fn set_factor(&mut self, factor: KeyboardFactor) {
        self.factor = factor;
    }

    pub fn bindings(&self) -> &KeyBindings {
        &self.bindings
    }

    /// Carried remainders (x, y) in milliseconds, each in (−0.5, 0.5].
    pub fn carry_ms(&self) -> (f64, f64) {
        (self.carry_x.0, self.carry_y.0)
    }

    pub fn reset(&mut self) {
        self.carry_x = AxisCarry::default();
        self.carry_y = AxisCarry::default();
    }

    /// Holds for one estimate, all starting at `window_end`: the x-axis hold
    /// (if any) first, then the y-axis hold.
    pub fn schedule(&mut self, estimate: &MotionEstimate) -> Vec<HidEvent> {
        let mut out = Vec::with_capacity(2);
        let axes = [
            (
                &mut self.carry_x,
                estimate.dx,
                Direction::Right,
                Direction::Left,
            ),
            (
                &mut self.carry_y,
                estimate.dy,
                Direction::Forward,
                Direction::Backward,
            ),
        ];
        for (carry, meters, positive, negative) in axes {
            let ms = carry.quantize(self.factor.hold_seconds(meters));
            if ms == 0 {
                continue;
            }
            let dir = if ms > 0 { positive } else { negative };
            let ms = u32::try_from(ms.unsigned_abs()).unwrap_or(u32::MAX);
            out.push(HidEvent::key_hold(
                estimate.window_end,
                self.bindings.key(dir).clone(),
                ms,
            ));
        }
        out
    }
}

/// One-shot scheduling with fresh carries.
pub fn schedule_keys(
    estimate: &MotionEstimate,
    k: KeyboardFactor,
    bindings: &KeyBindings,
) -> Vec<HidEvent> {
    KeyScheduler::new(k, bindings.clone()).schedule(estimate)
}

fn check_ordered(events: &[HidEvent], stream: &'static str) -> Result<(), HidError> {
    match events.windows(2).position(|w| w[1].time < w[0].time) {
        Some(i) => Err(HidError::Unordered {
            stream,
            index: i + 1,
        }),
        None => Ok(()),
    }
}

/// Merges two time-ordered streams. On equal times mouse events come first.
pub fn merge_streams(mouse: Vec<HidEvent>, keys: Vec<HidEvent>) -> Result<Vec<HidEvent>, HidError> {
    check_ordered(&mouse, "mouse")?;
    check_ordered(&keys, "key")?;
    let mut out = Vec::with_capacity(mouse.len() + keys.len());
    let mut mouse = mouse.into_iter().peekable();
    let mut keys = keys.into_iter().peekable();
    loop {
        let take_mouse = match (mouse.peek(), keys.peek()) {
            (Some(m), Some(k)) => m.time <= k.time,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => break,
        };
        let next = if take_mouse { mouse.next() } else { keys.next() };
        out.extend(next);
    }
    Ok(out)
}

/// Writes one JSON object per line.
pub fn write_event_log<W: Write>(events: &[HidEvent], mut out: W) -> Result<(), HidError> {
    for ev in events {
        serde_json::to_writer(&mut out, ev).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_event_log<R: BufRead>(input: R) -> Result<Vec<HidEvent>, HidError> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line).map_err(|source| HidError::Log {
            line: i + 1,
            source,
        })?;
        events.push(ev);
    }
    Ok(events)
}

/// Edge-level input for a device adapter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InputAction {
    Press(Key),
    Release(Key),
    MouseMove(i64),
}

/// Lowers holds into press/release edges ordered by time.
///
/// A hold on a key that is already down extends it. A hold arriving while
/// the opposing key is still down releases that key first, so the adapter
/// never presses left and right (or forward and backward) together. Keys
/// not in `bindings` have no opposite.
pub fn to_input_actions(
    events: &[HidEvent],
    bindings: &KeyBindings,
) -> Vec<(Timestamp, InputAction)> {
    let mut out = Vec::new();
    let mut down: BTreeMap<Key, Timestamp> = BTreeMap::new();

    fn release_until(
        down: &mut BTreeMap<Key, Timestamp>,
        until: Option<Timestamp>,
        out: &mut Vec<(Timestamp, InputAction)>,
    ) {
        let mut due: Vec<(Timestamp, Key)> = down
            .iter()
            .filter(|(_, &t)| until.is_none_or(|u| t <= u))
            .map(|(k, &t)| (t, k.clone()))
            .collect();
        due.sort();
        for (t, key) in due {
            down.remove(&key);
            out.push((t, InputAction::Release(key)));
        }
    }

    for ev in events {
        release_until(&mut down, Some(ev.time), &mut out);
        match &ev.kind {
            HidEventKind::MouseMove { dx } => out.push((ev.time, InputAction::MouseMove(*dx))),
            HidEventKind::KeyHold { key, duration_ms } => {
                let end = ev.time.saturating_add_micros(u64::from(*duration_ms) * 1000);
                if let Some(dir) = bindings.direction_of(key) {
                    let opposite = bindings.key(dir.opposite());
                    if down.remove(opposite).is_some() {
                        out.push((ev.time, InputAction::Release(opposite.clone())));
                    }
                }
                match down.get_mut(key) {
                    Some(release) => *release = (*release).max(end),
                    None => {
                        out.push((ev.time, InputAction::Press(key.clone())));
                        down.insert(key.clone(), end);
                    }
                }
            }
        }
    }
    release_until(&mut down, None, &mut out);
    out
}
