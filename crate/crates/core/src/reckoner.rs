//! Planar dead reckoning: acceleration integrated twice into displacement.
//!
//! Integration is the left-endpoint rectangular rule, per sample:
//! `d += v·dt` then `v += a·dt`. Pure double integration drifts quadratically,
//! so the stream-level [`DeadReckoner`] adds two controls:
//!
//! * a startup bias estimate, the mean of the first `bias_window` samples
//!   (the user must stand still), subtracted from everything after;
//! * a zero-velocity update: a window whose samples all fall below
//!   `zupt_threshold` yields zero displacement and zero exit velocity.
//!
//! Displacement is reported per window in the sensor's own axes
//! (x right, y forward in body mode).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensor::AccelSample;
use crate::time::Timestamp;

/// RP2040 core clock.
pub const MCU_CLOCK_HZ: f64 = 133_000_000.0;

#[derive(Debug, Error, PartialEq)]
pub enum ReckonError {
    #[error("need {needed} samples for a bias estimate, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("non-increasing timestamps: {prev} then {curr}")]
    NonMonotonic { prev: Timestamp, curr: Timestamp },
    #[error("invalid integration config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DtPolicy {
    /// `dt = 1 / clock_hz` for every sample, whatever the timestamps say.
    McuClock,
    /// `dt` is the gap between consecutive sample timestamps.
    #[default]
    Timestamped,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrationConfig {
    pub dt_policy: DtPolicy,
    pub clock_hz: f64,
    pub window_s: f64,
    pub zupt_threshold: f64,
    pub bias_window: usize,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig {
            dt_policy: DtPolicy::Timestamped,
            clock_hz: MCU_CLOCK_HZ,
            window_s: 0.1,
            zupt_threshold: 0.1,
            bias_window: 200,
        }
    }
}

impl IntegrationConfig {
    pub fn validate(&self) -> Result<(), ReckonError> {
        if !(self.clock_hz.is_finite() && self.clock_hz > 0.0) {
            return Err(ReckonError::InvalidConfig("clock_hz must be positive"));
        }
        if !(self.window_s.is_finite() && self.window_s > 0.0) {
            return Err(ReckonError::InvalidConfig("window_s must be positive"));
        }
        if !(self.zupt_threshold.is_finite() && self.zupt_threshold >= 0.0) {
            return Err(ReckonError::InvalidConfig("zupt_threshold must be non-negative"));
        }
        Ok(())
    }

    fn window_us(&self) -> i64 {
        (self.window_s * 1e6).round().max(1.0) as i64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Velocity {
    pub vx: f64,
    pub vy: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Bias {
    pub bx: f64,
    pub by: f64,
}

/// Displacement over one window and the velocity at its end.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionEstimate {
    pub vx: f64,
    pub vy: f64,
    pub dx: f64,
    pub dy: f64,
    pub window_end: Timestamp,
}

impl MotionEstimate {
    pub fn velocity(&self) -> Velocity {
        Velocity {
            vx: self.vx,
            vy: self.vy,
        }
    }
}

/// Integration step between two sample times.
pub fn dt_of(cfg: &IntegrationConfig, prev: Timestamp, curr: Timestamp) -> Result<f64, ReckonError> {
    match cfg.dt_policy {
        DtPolicy::McuClock => Ok(1.0 / cfg.clock_hz),
        DtPolicy::Timestamped => {
            let us = curr - prev;
            if us <= 0 {
                return Err(ReckonError::NonMonotonic { prev, curr });
            }
            Ok(us as f64 / 1e6)
        }
    }
}

/// Per-axis mean of the first `bias_window` samples.
pub fn estimate_bias(samples: &[AccelSample], bias_window: usize) -> Result<Bias, ReckonError> {
    if bias_window == 0 {
        return Ok(Bias::default());
    }
    if samples.len() < bias_window {
        return Err(ReckonError::InsufficientSamples {
            needed: bias_window,
            got: samples.len(),
        });
    }
    let used = &samples[..bias_window];
    let n = used.len() as f64;
    let (sx, sy) = used
        .iter()
        .fold((0.0, 0.0), |(sx, sy), s| (sx + s.ax, sy + s.ay));
    Ok(Bias {
        bx: sx / n,
        by: sy / n,
    })
}

/// Integrates one window of bias-corrected samples starting from `v0`.
///
/// `prev` is the timestamp of the sample just before the window. In
/// timestamped mode the first sample of a stream (no `prev`) contributes no
/// interval.
pub fn integrate_window(
    samples: &[AccelSample],
    cfg: &IntegrationConfig,
    v0: Velocity,
    prev: Option<Timestamp>,
) -> Result<MotionEstimate, ReckonError> {
    let window_end = samples
        .last()
        .map(|s| s.timestamp)
        .or(prev)
        .unwrap_or(Timestamp::ZERO);
    if samples.is_empty() {
        return Ok(MotionEstimate {
            vx: v0.vx,
            vy: v0.vy,
            dx: 0.0,
            dy: 0.0,
            window_end,
        });
    }

    let mut v = v0;
    let (mut dx, mut dy) = (0.0, 0.0);
    let mut last = prev;
    for s in samples {
        let dt = match (cfg.dt_policy, last) {
            (DtPolicy::McuClock, _) => 1.0 / cfg.clock_hz,
            (DtPolicy::Timestamped, Some(p)) => dt_of(cfg, p, s.timestamp)?,
            (DtPolicy::Timestamped, None) => 0.0,
        };
        dx += v.vx * dt;
        dy += v.vy * dt;
        v.vx += s.ax * dt;
        v.vy += s.ay * dt;
        last = Some(s.timestamp);
    }

    if samples.iter().all(|s| s.magnitude() < cfg.zupt_threshold) {
        return Ok(MotionEstimate {
            vx: 0.0,
            vy: 0.0,
            dx: 0.0,
            dy: 0.0,
            window_end,
        });
    }
    Ok(MotionEstimate {
        vx: v.vx,
        vy: v.vy,
        dx,
        dy,
        window_end,
    })
}

/// Stream-level integrator: bias phase, then fixed-length windows.
///
/// A window closes on the first sample at least `window_s` after the
/// previous window's last sample; that sample belongs to the closing window.
#[derive(Clone, Debug)]
pub struct DeadReckoner {
    cfg: IntegrationConfig,
    bias: Option<Bias>,
    bias_buf: Vec<AccelSample>,
    window: Vec<AccelSample>,
    window_start: Option<Timestamp>,
    prev: Option<Timestamp>,
    last: Option<Timestamp>,
    velocity: Velocity,
    pending_gap: u32,
}

impl DeadReckoner {
    pub fn new(cfg: IntegrationConfig) -> Result<Self, ReckonError> {
        cfg.validate()?;
        Ok(DeadReckoner {
            cfg,
            bias: None,
            bias_buf: Vec::with_capacity(cfg.bias_window),
            window: Vec::new(),
            window_start: None,
            prev: None,
            last: None,
            velocity: Velocity::default(),
            pending_gap: 0,
        })
    }

    pub fn config(&self) -> &IntegrationConfig {
        &self.cfg
    }

    pub fn bias(&self) -> Option<Bias> {
        self.bias
    }

    /// Skips the startup estimate.
    pub fn set_bias(&mut self, bias: Bias) {
        self.bias = Some(bias);
        self.bias_buf.clear();
    }

    pub fn is_calibrated(&self) -> bool {
        self.bias.is_some() || self.cfg.bias_window == 0
    }

    pub fn velocity(&self) -> Velocity {
        self.velocity
    }

    /// Zeroes velocity and drops the open window. The bias is kept.
    pub fn reset(&mut self) {
        self.window.clear();
        self.window_start = self.last;
        self.prev = self.last;
        self.velocity = Velocity::default();
        self.pending_gap = 0;
    }

    /// Records `missing` lost frames before the next sample; they are
    /// integrated as zero acceleration spread evenly over the gap.
    pub fn note_gap(&mut self, missing: u32) {
        self.pending_gap = self.pending_gap.saturating_add(missing);
    }

    pub fn push(&mut self, sample: AccelSample) -> Result<Option<MotionEstimate>, ReckonError> {
        if let Some(last) = self.last {
            if sample.timestamp <= last {
                return Err(ReckonError::NonMonotonic {
                    prev: last,
                    curr: sample.timestamp,
                });
            }
        }
        let gap = std::mem::take(&mut self.pending_gap);
        let last = self.last.replace(sample.timestamp);

        let bias = match self.bias {
            Some(b) => b,
            None if self.cfg.bias_window == 0 => Bias::default(),
            None => {
                self.bias_buf.push(sample);
                if self.bias_buf.len() >= self.cfg.bias_window {
                    self.bias = Some(estimate_bias(&self.bias_buf, self.cfg.bias_window)?);
                    self.bias_buf.clear();
                    self.prev = Some(sample.timestamp);
                    self.window_start = Some(sample.timestamp);
                }
                return Ok(None);
            }
        };

        if let (Some(last), true) = (last, gap > 0) {
            let span = (sample.timestamp - last) as u64;
            let parts = u64::from(gap) + 1;
            for i in 1..parts {
                let t = last.saturating_add_micros(span * i / parts);
                if t > last && t < sample.timestamp {
                    self.window.push(AccelSample {
                        timestamp: t,
                        ax: 0.0,
                        ay: 0.0,
                    });
                }
            }
        }

        self.window.push(AccelSample {
            timestamp: sample.timestamp,
            ax: sample.ax - bias.bx,
            ay: sample.ay - bias.by,
        });
        let start = *self.window_start.get_or_insert(sample.timestamp);
        if sample.timestamp - start >= self.cfg.window_us() {
            return self.close_window().map(Some);
        }
        Ok(None)
    }

    /// Integrates whatever is left in the open window.
    pub fn flush(&mut self) -> Result<Option<MotionEstimate>, ReckonError> {
        if self.window.is_empty() {
            return Ok(None);
        }
        self.close_window().map(Some)
    }

    fn close_window(&mut self) -> Result<MotionEstimate, ReckonError> {
        let est = integrate_window(&self.window, &self.cfg, self.velocity, self.prev)?;
        self.velocity = est.velocity();
        self.prev = Some(est.window_end);
        self.window_start = Some(est.window_end);
        self.window.clear();
        Ok(est)
    }
}
