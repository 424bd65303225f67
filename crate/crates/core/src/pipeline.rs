//! The live pipeline: decoded frames in, an ordered HID event stream and
//! avatar snapshots out.
//!
//! [`Pipeline`] is the single writer of all stage state (mapper carry,
//! integrator, key carry, avatar). Mouse events come from compass samples and
//! key holds from closed accelerometer windows; the two are released in
//! emit-time order (mouse first on ties) using each stream's latest timestamp
//! as a watermark. A stream that falls more than `max_skew` behind the other
//! stops holding events back, and anything it emits late is re-stamped to the
//! last released time so the output never goes backwards.
//!
//! All decisions use frame timestamps only, so identical input produces an
//! identical event stream. Wall-clock instants are used for metrics alone.

use std::collections::VecDeque;
use std::time::Instant;

use thiserror::Error;

use crate::avatar::{AvatarState, AvatarWorld, WorldConfig, WorldError};
use crate::config::{CalibrationConfig, ConfigError, PortalConfig};
use crate::hid::{HidEvent, KeyScheduler, KeyboardFactor};
use crate::mapper::{MouseFactor, MouseMapper};
use crate::metrics::{MetricsSnapshot, PipelineMetrics, Stage};
use crate::reckoner::{DeadReckoner, ReckonError};
use crate::sensor::{
    AccelSample, CompassSample, DecoderStats, Decoded, FrameDecoder, SensorPayload, StreamKind,
    DEFAULT_ACCEL_RANGE,
};
use crate::synth::DEFAULT_RATE_HZ;
use crate::time::Timestamp;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Reckon(#[from] ReckonError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("pipeline saw no samples")]
    Idle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub calibration: CalibrationConfig,
    pub world: WorldConfig,
    pub initial: AvatarState,
    pub accel_range: f64,
    pub snapshot_hz: f64,
    pub max_skew_us: u64,
    /// Rate used when synthesizing injected motion.
    pub synth_rate_hz: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            calibration: CalibrationConfig::default(),
            world: WorldConfig::default(),
            initial: AvatarState::default(),
            accel_range: DEFAULT_ACCEL_RANGE,
            snapshot_hz: 60.0,
            max_skew_us: 100_000,
            synth_rate_hz: DEFAULT_RATE_HZ,
        }
    }
}

impl PipelineConfig {
    pub fn from_portal(cfg: &PortalConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(PipelineConfig {
            calibration: cfg.calibration()?,
            world: cfg.world(),
            initial: AvatarState::default(),
            accel_range: cfg.sensor.accel_range,
            snapshot_hz: cfg.service.snapshot_hz,
            max_skew_us: cfg.service.max_skew_ms.saturating_mul(1000),
            synth_rate_hz: cfg.sensor.synth_rate_hz,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Output {
    Event(HidEvent),
    Snapshot(AvatarState),
}

#[derive(Debug)]
struct Pending {
    event: HidEvent,
    ingested: Instant,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    mapper: MouseMapper,
    reckoner: DeadReckoner,
    scheduler: KeyScheduler,
    world: AvatarWorld,
    pending_mouse: VecDeque<Pending>,
    pending_keys: VecDeque<Pending>,
    latest: [Option<Timestamp>; 2],
    last_released: Option<Timestamp>,
    next_snapshot: Option<Timestamp>,
    metrics: PipelineMetrics,
    out: Vec<Output>,
}

fn slot(kind: StreamKind) -> usize {
    match kind {
        StreamKind::Compass => 0,
        StreamKind::Accel => 1,
    }
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        let cal = cfg.calibration;
        Ok(Pipeline {
            mapper: MouseMapper::new(cal.mouse_factor),
            reckoner: DeadReckoner::new(cal.integration)?,
            scheduler: KeyScheduler::new(cal.keyboard_factor, cfg.world.bindings.clone()),
            world: AvatarWorld::new(cfg.initial, cfg.world.clone())?,
            pending_mouse: VecDeque::new(),
            pending_keys: VecDeque::new(),
            latest: [None, None],
            last_released: None,
            next_snapshot: None,
            metrics: PipelineMetrics::default(),
            out: Vec::new(),
            cfg,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn avatar(&self) -> AvatarState {
        self.world.state()
    }

    pub fn metrics(&self) -> &PipelineMetrics {
        &self.metrics
    }

    pub fn metrics_snapshot(&self) -> MetricsSnapshot {
        self.metrics.snapshot()
    }

    pub fn mouse_factor(&self) -> MouseFactor {
        self.mapper.factor()
    }

    pub fn keyboard_factor(&self) -> KeyboardFactor {
        self.scheduler.factor()
    }

    /// Latest accepted sample time across both streams.
    pub fn stream_time(&self) -> Option<Timestamp> {
        self.latest.iter().flatten().max().copied()
    }

    pub fn latest(&self, kind: StreamKind) -> Option<Timestamp> {
        self.latest[slot(kind)]
    }

    /// Heading of the last accepted compass sample.
    pub fn last_heading(&self) -> Option<f64> {
        self.mapper.last_sample().map(|s| s.heading_deg)
    }

    pub fn reckoner(&self) -> &DeadReckoner {
        &self.reckoner
    }

    /// Takes effect from the next sample. Both values are checked before
    /// either is applied.
    pub fn set_calibration(&mut self, m_pixels: f64, k_s_per_m: f64) -> Result<(), ConfigError> {
        let m = MouseFactor::new(m_pixels)?;
        let k = KeyboardFactor::new(k_s_per_m)?;
        self.mapper.set_factor(m);
        self.scheduler.set_factor(k);
        self.cfg.calibration.mouse_factor = m;
        self.cfg.calibration.keyboard_factor = k;
        Ok(())
    }

    /// Releases everything pending, zeroes the integrators and carries, and
    /// re-centres the avatar.
    pub fn reset(&mut self) -> Vec<Output> {
        self.release(true);
        self.mapper.reset();
        self.reckoner.reset();
        self.scheduler.reset();
        self.world.recenter();
        self.out.push(Output::Snapshot(self.world.state()));
        self.metrics.snapshots += 1;
        std::mem::take(&mut self.out)
    }

    pub fn record_parse(&mut self, d: std::time::Duration) {
        self.metrics.record_stage(Stage::Parse, d);
    }

    /// Feeds one decoder item. `ingested` is when its bytes arrived.
    pub fn ingest(&mut self, item: Decoded, ingested: Instant) -> Vec<Output> {
        match item {
            Decoded::Frame(frame) => {
                let counters = self.metrics.stream_mut(frame.kind());
                counters.received += 1;
                counters.highest_sequence = Some(
                    counters
                        .highest_sequence
                        .map_or(frame.sequence, |h| h.max(frame.sequence)),
                );
                match frame.payload {
                    SensorPayload::Compass(s) => self.compass(s, ingested),
                    SensorPayload::Accel(s) => self.accel(s, ingested),
                }
            }
            Decoded::Gap { kind, missing } => {
                self.metrics.stream_mut(kind).lost += u64::from(missing);
                // a compass gap needs nothing: the last heading simply holds
                if kind == StreamKind::Accel {
                    self.reckoner.note_gap(missing);
                }
            }
            Decoded::Error(_) => self.metrics.frame_errors += 1,
        }
        std::mem::take(&mut self.out)
    }

    pub fn push_compass(&mut self, sample: CompassSample) -> Vec<Output> {
        self.compass(sample, Instant::now());
        std::mem::take(&mut self.out)
    }

    pub fn push_accel(&mut self, sample: AccelSample) -> Vec<Output> {
        self.accel(sample, Instant::now());
        std::mem::take(&mut self.out)
    }

    /// End of stream: integrates the open window, releases everything and
    /// publishes the final state.
    pub fn finish(&mut self) -> Vec<Output> {
        let now = Instant::now();
        if let Ok(Some(est)) = self.reckoner.flush() {
            for event in self.scheduler.schedule(&est) {
                self.pending_keys.push_back(Pending {
                    event,
                    ingested: now,
                });
            }
        }
        self.release(true);
        self.out.push(Output::Snapshot(self.world.state()));
        self.metrics.snapshots += 1;
        std::mem::take(&mut self.out)
    }

    /// Runs two complete sample streams, interleaved by time with compass
    /// first on ties, and finishes.
    pub fn process_samples(
        &mut self,
        compass: &[CompassSample],
        accel: &[AccelSample],
    ) -> Vec<Output> {
        let mut out = Vec::new();
        let (mut ci, mut ai) = (0, 0);
        while ci < compass.len() || ai < accel.len() {
            let take_compass = match (compass.get(ci), accel.get(ai)) {
                (Some(c), Some(a)) => c.timestamp <= a.timestamp,
                (Some(_), None) => true,
                _ => false,
            };
            if take_compass {
                out.extend(self.push_compass(compass[ci]));
                ci += 1;
            } else {
                out.extend(self.push_accel(accel[ai]));
                ai += 1;
            }
        }
        out.extend(self.finish());
        out
    }

    fn accept_time(&mut self, kind: StreamKind, ts: Timestamp) -> bool {
        let latest = &mut self.latest[slot(kind)];
        if latest.is_some_and(|l| ts <= l) {
            self.metrics.rejected_samples += 1;
            return false;
        }
        *latest = Some(ts);
        true
    }

    fn compass(&mut self, sample: CompassSample, ingested: Instant) {
        if !self.accept_time(StreamKind::Compass, sample.timestamp) {
            return;
        }
        let start = Instant::now();
        let result = self.mapper.push(sample);
        self.metrics.record_stage(Stage::Map, start.elapsed());
        match result {
            Ok(Some(event)) => self.pending_mouse.push_back(Pending { event, ingested }),
            Ok(None) => {}
            Err(_) => self.metrics.rejected_samples += 1,
        }
        self.release(false);
        self.snapshot(sample.timestamp);
    }

    fn accel(&mut self, sample: AccelSample, ingested: Instant) {
        if !sample.within_range(self.cfg.accel_range) {
            self.metrics.rejected_samples += 1;
            return;
        }
        if !self.accept_time(StreamKind::Accel, sample.timestamp) {
            return;
        }
        let start = Instant::now();
        let result = self.reckoner.push(sample);
        self.metrics.record_stage(Stage::Reckon, start.elapsed());
        match result {
            Ok(Some(est)) => {
                let start = Instant::now();
                let events = self.scheduler.schedule(&est);
                self.metrics.record_stage(Stage::Schedule, start.elapsed());
                self.pending_keys
                    .extend(events.into_iter().map(|event| Pending { event, ingested }));
            }
            Ok(None) => {}
            Err(_) => self.metrics.rejected_samples += 1,
        }
        self.release(false);
        self.snapshot(sample.timestamp);
    }

    /// Whether an event at `t` from stream `own` can no longer be overtaken
    /// by the other stream.
    fn settled(&self, own: StreamKind, t: Timestamp) -> bool {
        let other = match own {
            StreamKind::Compass => StreamKind::Accel,
            StreamKind::Accel => StreamKind::Compass,
        };
        let Some(other_latest) = self.latest[slot(other)] else {
            return true;
        };
        if other_latest >= t {
            return true;
        }
        let own_latest = self.latest[slot(own)].unwrap_or(t);
        (own_latest - other_latest) as u64 > self.cfg.max_skew_us
    }

    fn release(&mut self, all: bool) {
        loop {
            let mouse_first = match (self.pending_mouse.front(), self.pending_keys.front()) {
                (Some(m), Some(k)) => m.event.time <= k.event.time,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => return,
            };
            let (queue, kind) = if mouse_first {
                (&self.pending_mouse, StreamKind::Compass)
            } else {
                (&self.pending_keys, StreamKind::Accel)
            };
            let t = queue.front().map(|p| p.event.time).unwrap_or_default();
            if !all && !self.settled(kind, t) {
                return;
            }
            let pending = if mouse_first {
                self.pending_mouse.pop_front()
            } else {
                self.pending_keys.pop_front()
            };
            if let Some(p) = pending {
                self.emit(p);
            }
        }
    }

    fn emit(&mut self, mut p: Pending) {
        if let Some(last) = self.last_released {
            if p.event.time < last {
                p.event.time = last;
                self.metrics.late_events += 1;
            }
        }
        self.last_released = Some(p.event.time);

        let start = Instant::now();
        let applied = self.world.apply(&p.event);
        self.metrics.record_stage(Stage::Apply, start.elapsed());
        if applied.is_err() {
            self.metrics.rejected_samples += 1;
        }
        if p.event.is_mouse() {
            self.metrics.mouse_events += 1;
        } else {
            self.metrics.key_events += 1;
        }
        self.metrics.record_end_to_end(p.ingested.elapsed());
        self.out.push(Output::Event(p.event));
    }

    fn snapshot(&mut self, now: Timestamp) {
        let period = (1e6 / self.cfg.snapshot_hz).round().max(1.0) as u64;
        let next = *self.next_snapshot.get_or_insert(now);
        if now < next {
            return;
        }
        self.out.push(Output::Snapshot(self.world.state()));
        self.metrics.snapshots += 1;
        let behind = (now.as_micros() - next.as_micros()) / period + 1;
        self.next_snapshot = Some(next.saturating_add_micros(behind * period));
    }
}

pub fn events_of(outputs: &[Output]) -> Vec<HidEvent> {
    outputs
        .iter()
        .filter_map(|o| match o {
            Output::Event(e) => Some(e.clone()),
            Output::Snapshot(_) => None,
        })
        .collect()
}

/// Result of replaying a recorded frame stream.
#[derive(Clone, Debug)]
pub struct Replay {
    pub outputs: Vec<Output>,
    pub metrics: MetricsSnapshot,
    pub decoder: DecoderStats,
    pub final_state: AvatarState,
}

impl Replay {
    pub fn events(&self) -> Vec<HidEvent> {
        events_of(&self.outputs)
    }
}

/// Replays a recorded byte stream in virtual time.
pub fn replay(bytes: &[u8], cfg: PipelineConfig) -> Result<Replay, PipelineError> {
    let mut pipeline = Pipeline::new(cfg)?;
    let mut decoder = FrameDecoder::new();
    decoder.push(bytes);
    decoder.finish();
    let mut outputs = Vec::new();
    loop {
        let start = Instant::now();
        let Some(item) = decoder.next_item() else {
            break;
        };
        pipeline.record_parse(start.elapsed());
        outputs.extend(pipeline.ingest(item, start));
    }
    outputs.extend(pipeline.finish());
    Ok(Replay {
        outputs,
        metrics: pipeline.metrics_snapshot(),
        decoder: decoder.stats(),
        final_state: pipeline.avatar(),
    })
}
