//! Pipeline counters and latency histograms.
//!
//! Latencies are recorded in nanoseconds and reported in microseconds.

use std::time::Duration;

use hdrhistogram::Histogram;
use serde::{Deserialize, Serialize};

use crate::sensor::StreamKind;

const MAX_TRACKED_NS: u64 = 60_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    Parse,
    Map,
    Reckon,
    Schedule,
    Apply,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Parse,
        Stage::Map,
        Stage::Reckon,
        Stage::Schedule,
        Stage::Apply,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Parse => "parse",
            Stage::Map => "map",
            Stage::Reckon => "reckon",
            Stage::Schedule => "schedule",
            Stage::Apply => "apply",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

fn histogram() -> Histogram<u64> {
    Histogram::new_with_bounds(1, MAX_TRACKED_NS, 3).expect("static bounds are valid")
}

fn record(h: &mut Histogram<u64>, d: Duration) {
    let ns = u64::try_from(d.as_nanos()).unwrap_or(u64::MAX);
    h.saturating_record(ns.clamp(1, MAX_TRACKED_NS));
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamCounters {
    pub received: u64,
    pub lost: u64,
    /// Highest sequence number seen, if any frame arrived.
    pub highest_sequence: Option<u32>,
}

#[derive(Clone, Debug)]
pub struct PipelineMetrics {
    stages: [Histogram<u64>; 5],
    end_to_end: Histogram<u64>,
    pub compass: StreamCounters,
    pub accel: StreamCounters,
    pub frame_errors: u64,
    pub rejected_samples: u64,
    pub late_events: u64,
    pub mouse_events: u64,
    pub key_events: u64,
    pub snapshots: u64,
}

impl Default for PipelineMetrics {
    fn default() -> Self {
        PipelineMetrics {
            stages: std::array::from_fn(|_| histogram()),
            end_to_end: histogram(),
            compass: StreamCounters::default(),
            accel: StreamCounters::default(),
            frame_errors: 0,
            rejected_samples: 0,
            late_events: 0,
            mouse_events: 0,
            key_events: 0,
            snapshots: 0,
        }
    }
}

/// Percentiles of one histogram, microseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: u64,
    pub p50_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
}

impl LatencySummary {
    fn of(h: &Histogram<u64>) -> Self {
        if h.is_empty() {
            return LatencySummary::default();
        }
        let us = |ns: u64| ns as f64 / 1000.0;
        LatencySummary {
            count: h.len(),
            p50_us: us(h.value_at_quantile(0.5)),
            p99_us: us(h.value_at_quantile(0.99)),
            max_us: us(h.max()),
        }
    }
}

/// Serializable view of [`PipelineMetrics`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub frames_received: u64,
    pub frames_lost: u64,
    pub frame_errors: u64,
    pub rejected_samples: u64,
    pub events_emitted: u64,
    pub mouse_events: u64,
    pub key_events: u64,
    pub late_events: u64,
    pub end_to_end: LatencySummary,
    pub parse: LatencySummary,
    pub map: LatencySummary,
    pub reckon: LatencySummary,
    pub schedule: LatencySummary,
    pub apply: LatencySummary,
}

impl PipelineMetrics {
    pub fn record_stage(&mut self, stage: Stage, d: Duration) {
        record(&mut self.stages[stage.index()], d);
    }

    pub fn record_end_to_end(&mut self, d: Duration) {
        record(&mut self.end_to_end, d);
    }

    pub fn stage(&self, stage: Stage) -> &Histogram<u64> {
        &self.stages[stage.index()]
    }

    pub fn end_to_end(&self) -> &Histogram<u64> {
        &self.end_to_end
    }

    pub fn stream(&self, kind: StreamKind) -> &StreamCounters {
        match kind {
            StreamKind::Compass => &self.compass,
            StreamKind::Accel => &self.accel,
        }
    }

    pub fn stream_mut(&mut self, kind: StreamKind) -> &mut StreamCounters {
        match kind {
            StreamKind::Compass => &mut self.compass,
            StreamKind::Accel => &mut self.accel,
        }
    }

    pub fn frames_received(&self) -> u64 {
        self.compass.received + self.accel.received
    }

    pub fn frames_lost(&self) -> u64 {
        self.compass.lost + self.accel.lost
    }

    pub fn events_emitted(&self) -> u64 {
        self.mouse_events + self.key_events
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        let s = |stage| LatencySummary::of(self.stage(stage));
        MetricsSnapshot {
            frames_received: self.frames_received(),
            frames_lost: self.frames_lost(),
            frame_errors: self.frame_errors,
            rejected_samples: self.rejected_samples,
            events_emitted: self.events_emitted(),
            mouse_events: self.mouse_events,
            key_events: self.key_events,
            late_events: self.late_events,
            end_to_end: LatencySummary::of(&self.end_to_end),
            parse: s(Stage::Parse),
            map: s(Stage::Map),
            reckon: s(Stage::Reckon),
            schedule: s(Stage::Schedule),
            apply: s(Stage::Apply),
        }
    }
}
