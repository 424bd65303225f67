//! Ideal sensor streams from a ground-truth trajectory.
//!
//! This is the independent side of every round-trip check: headings are
//! sampled by interpolating the unwrapped heading, accelerations by central
//! second differences of position (exact on quadratics). Positions between
//! trajectory points are interpolated linearly, so trajectories should be
//! supplied at the synthesis rate or denser; [`TrajectoryBuilder`] produces
//! such trajectories.
//!
//! World axes: x east, y north, heading clockwise from north. Body axes:
//! x to the right of the heading, y along it.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mapper::HeadingDelta;
use crate::sensor::{AccelSample, CompassSample};
use crate::time::Timestamp;

pub const DEFAULT_RATE_HZ: f64 = 100.0;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("sample rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("trajectory lasts {duration_s} s, shorter than one sample interval")]
    TooShort { duration_s: f64 },
    #[error("acceleration synthesis needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("turn of {per_sample_deg} deg between consecutive samples exceeds 180 deg")]
    TurnTooFast { per_sample_deg: f64 },
    #[error("invalid trajectory point {index}: {reason}")]
    InvalidPoint { index: usize, reason: &'static str },
    #[error("trajectory line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("noise standard deviation must be finite and non-negative, got {0}")]
    InvalidNoise(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading_deg: f64,
}

/// A validated ground-truth trajectory: non-empty, `t ≥ 0` strictly
/// increasing, headings in [0, 360).
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    points: Vec<TrajectoryPoint>,
    unwrapped: Vec<f64>,
}

fn wrap360(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

impl Trajectory {
    pub fn new(points: Vec<TrajectoryPoint>) -> Result<Self, SynthError> {
        if points.is_empty() {
            return Err(SynthError::InvalidPoint {
                index: 0,
                reason: "trajectory is empty",
            });
        }
        for (i, p) in points.iter().enumerate() {
            let bad = |reason| Err(SynthError::InvalidPoint { index: i, reason });
            if ![p.t, p.x, p.y, p.heading_deg].iter().all(|v| v.is_finite()) {
                return bad("non-finite value");
            }
            if p.t < 0.0 {
                return bad("negative time");
            }
            if !(0.0..360.0).contains(&p.heading_deg) {
                return bad("heading outside [0, 360)");
            }
            if i > 0 && p.t <= points[i - 1].t {
                return bad("time not strictly increasing");
            }
        }
        let mut unwrapped = Vec::with_capacity(points.len());
        unwrapped.push(points[0].heading_deg);
        for w in points.windows(2) {
            let prev = *unwrapped.last().unwrap_or(&0.0);
            unwrapped.push(prev + HeadingDelta::wrap(w[1].heading_deg - w[0].heading_deg).degrees());
        }
        Ok(Trajectory { points, unwrapped })
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn start(&self) -> TrajectoryPoint {
        self.points[0]
    }

    pub fn end(&self) -> TrajectoryPoint {
        self.points[self.points.len() - 1]
    }

    pub fn duration(&self) -> f64 {
        self.end().t - self.start().t
    }

    /// Total signed turn from start to end along the unwrapped heading.
    pub fn total_turn_deg(&self) -> f64 {
        self.unwrapped[self.unwrapped.len() - 1] - self.unwrapped[0]
    }

    /// Position and unwrapped heading at time `t`, clamped to the ends.
    pub fn pose_at(&self, t: f64) -> (f64, f64, f64) {
        let pts = &self.points;
        let i = pts.partition_point(|p| p.t <= t);
        if i == 0 {
            return (pts[0].x, pts[0].y, self.unwrapped[0]);
        }
        if i == pts.len() {
            let last = pts.len() - 1;
            return (pts[last].x, pts[last].y, self.unwrapped[last]);
        }
        let (a, b) = (&pts[i - 1], &pts[i]);
        let f = (t - a.t) / (b.t - a.t);
        let lerp = |u: f64, v: f64| u + (v - u) * f;
        (
            lerp(a.x, b.x),
            lerp(a.y, b.y),
            lerp(self.unwrapped[i - 1], self.unwrapped[i]),
        )
    }

    /// Rotates positions about `(cx, cy)` and every heading by `phi_deg`
    /// (clockwise positive, like headings).
    pub fn rotated(&self, phi_deg: f64, cx: f64, cy: f64) -> Trajectory {
        let (s, c) = phi_deg.to_radians().sin_cos();
        let points = self
            .points
            .iter()
            .map(|p| {
                let (dx, dy) = (p.x - cx, p.y - cy);
                TrajectoryPoint {
                    t: p.t,
                    // clockwise rotation in (east, north) coordinates
                    x: cx + dx * c + dy * s,
                    y: cy - dx * s + dy * c,
                    heading_deg: wrap360(p.heading_deg + phi_deg),
                }
            })
            .collect();
        Trajectory::new(points).expect("rotation preserves validity")
    }

    /// Parses the plain-text format: a `t x y heading` header line, then one
    /// whitespace-separated point per line. Blank lines and `#` comments are
    /// ignored.
    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let mut points = Vec::new();
        let mut seen_header = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if !seen_header {
                if fields != ["t", "x", "y", "heading"] {
                    return Err(SynthError::Parse {
                        line: i + 1,
                        reason: "expected header `t x y heading`".into(),
                    });
                }
                seen_header = true;
                continue;
            }
            if fields.len() != 4 {
                return Err(SynthError::Parse {
                    line: i + 1,
                    reason: format!("expected 4 fields, got {}", fields.len()),
                });
            }
            let mut v = [0.0; 4];
            for (slot, f) in v.iter_mut().zip(&fields) {
                *slot = f.parse().map_err(|e| SynthError::Parse {
                    line: i + 1,
                    reason: format!("`{f}`: {e}"),
                })?;
            }
            points.push(TrajectoryPoint {
                t: v[0],
                x: v[1],
                y: v[2],
                heading_deg: v[3],
            });
        }
        Trajectory::new(points)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("t x y heading\n");
        for p in &self.points {
            let _ = writeln!(out, "{} {} {} {}", p.t, p.x, p.y, p.heading_deg);
        }
        out
    }
}

/// Sample times `t0 + k/rate` covering the trajectory.
pub fn sample_times(traj: &Trajectory, rate_hz: f64) -> Result<Vec<f64>, SynthError> {
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(SynthError::NonPositiveRate(rate_hz));
    }
    let duration = traj.duration();
    if duration * rate_hz < 1.0 - 1e-9 {
        return Err(SynthError::TooShort {
            duration_s: duration,
        });
    }
    let n = (duration * rate_hz + 1e-6).floor() as usize;
    let t0 = traj.start().t;
    Ok((0..=n).map(|k| t0 + k as f64 / rate_hz).collect())
}

pub fn synthesize_compass(traj: &Trajectory, rate_hz: f64) -> Result<Vec<CompassSample>, SynthError> {
    let times = sample_times(traj, rate_hz)?;
    let mut out = Vec::with_capacity(times.len());
    let mut prev_unwrapped: Option<f64> = None;
    for t in times {
        let (_, _, h) = traj.pose_at(t);
        if let Some(p) = prev_unwrapped {
            if (h - p).abs() > 180.0 {
                return Err(SynthError::TurnTooFast {
                    per_sample_deg: h - p,
                });
            }
        }
        prev_unwrapped = Some(h);
        out.push(CompassSample {
            timestamp: Timestamp::from_secs_f64(t),
            heading_deg: wrap360(h),
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccelFrame {
    /// Rotates with the user: x right, y forward.
    #[default]
    Body,
    /// Fixed to the room: x east, y north.
    World,
}

/// World-frame vector expressed in body axes for a heading.
pub fn world_to_body(ex: f64, ny: f64, heading_deg: f64) -> (f64, f64) {
    let (s, c) = heading_deg.to_radians().sin_cos();
    (ex * c - ny * s, ex * s + ny * c)
}

/// Body-frame vector expressed in world axes for a heading.
pub fn body_to_world(right: f64, forward: f64, heading_deg: f64) -> (f64, f64) {
    let (s, c) = heading_deg.to_radians().sin_cos();
    (right * c + forward * s, -right * s + forward * c)
}

/// Central second difference of position at each sample time. Outside the
/// trajectory the user is taken to be at rest at the end points.
pub fn synthesize_accel(
    traj: &Trajectory,
    rate_hz: f64,
    frame: AccelFrame,
) -> Result<Vec<AccelSample>, SynthError> {
    if traj.points().len() < 3 {
        return Err(SynthError::TooFewPoints(traj.points().len()));
    }
    let times = sample_times(traj, rate_hz)?;
    let h = 1.0 / rate_hz;
    let (t0, t1) = (traj.start().t, traj.end().t);
    let pos = |t: f64| {
        let (x, y, _) = traj.pose_at(t.clamp(t0, t1));
        (x, y)
    };
    Ok(times
        .into_iter()
        .map(|t| {
            let (xm, ym) = pos(t - h);
            let (x0, y0, heading) = traj.pose_at(t);
            let (xp, yp) = pos(t + h);
            let ax = (xp - 2.0 * x0 + xm) / (h * h);
            let ay = (yp - 2.0 * y0 + ym) / (h * h);
            let (ax, ay) = match frame {
                AccelFrame::World => (ax, ay),
                AccelFrame::Body => world_to_body(ax, ay, heading),
            };
            AccelSample {
                timestamp: Timestamp::from_secs_f64(t),
                ax,
                ay,
            }
        })
        .collect())
}

/// Adds zero-mean Gaussian noise to both axes, reproducibly for a seed.
pub fn add_accel_noise(
    samples: &mut [AccelSample],
    stddev: f64,
    seed: u64,
) -> Result<(), SynthError> {
    if !(stddev.is_finite() && stddev >= 0.0) {
        return Err(SynthError::InvalidNoise(stddev));
    }
    if stddev == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, stddev).map_err(|_| SynthError::InvalidNoise(stddev))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in samples {
        s.ax += normal.sample(&mut rng);
        s.ay += normal.sample(&mut rng);
    }
    Ok(())
}

/// Builds dense trajectories on a fixed time grid out of simple motions.
///
/// Walks use a stride profile: speed `(D/T)(1 − cos(2πn·t/T))` for `n`
/// strides, which starts and ends at rest and averages `D/T`. That matches
/// how walking looks to an accelerometer: the cadence-averaged speed is
/// constant while the instantaneous acceleration never stays near zero.
#[derive(Clone, Debug)]
pub struct TrajectoryBuilder {
    rate_hz: f64,
    k: u64,
    x: f64,
    y: f64,
    heading: f64,
    points: Vec<TrajectoryPoint>,
}

impl TrajectoryBuilder {
    pub fn new(rate_hz: f64, x: f64, y: f64, heading_deg: f64) -> Self {
        let mut b = TrajectoryBuilder {
            rate_hz,
            k: 0,
            x,
            y,
            heading: heading_deg,
            points: Vec::new(),
        };
        b.emit();
        b
    }

    fn emit(&mut self) {
        self.points.push(TrajectoryPoint {
            t: self.k as f64 / self.rate_hz,
            x: self.x,
            y: self.y,
            heading_deg: wrap360(self.heading),
        });
    }

    fn steps(&self, secs: f64) -> u64 {
        (secs * self.rate_hz).round().max(1.0) as u64
    }

    pub fn hold(mut self, secs: f64) -> Self {
        for _ in 0..self.steps(secs) {
            self.k += 1;
            self.emit();
        }
        self
    }

    /// Turns in place at a constant rate.
    pub fn turn(mut self, deg: f64, secs: f64) -> Self {
        let n = self.steps(secs);
        let start = self.heading;
        for i in 1..=n {
            self.k += 1;
            self.heading = start + deg * i as f64 / n as f64;
            self.emit();
        }
        self
    }

    /// Turns in place within a single sample interval.
    pub fn step_turn(self, deg: f64) -> Self {
        self.turn(deg, 0.0)
    }

    /// Walks `forward` metres along the heading and `right` metres to its
    /// right, over `secs` seconds and `strides` strides, without turning.
    pub fn walk(mut self, forward: f64, right: f64, secs: f64, strides: u32) -> Self {
        let n = self.steps(secs);
        let total = n as f64 / self.rate_hz;
        let (ex, ny) = body_to_world(right, forward, self.heading);
        let (x0, y0) = (self.x, self.y);
        let w = TAU * f64::from(strides.max(1)) / total;
        for i in 1..=n {
            self.k += 1;
            let t = i as f64 / self.rate_hz;
            let frac = if i == n {
                1.0
            } else {
                (t - (w * t).sin() / w) / total
            };
            self.x = x0 + ex * frac;
            self.y = y0 + ny * frac;
            self.emit();
        }
        self
    }

    /// Walks a circular arc of `radius` metres turning `deg` degrees
    /// (clockwise positive) at constant speed, facing along the path.
    pub fn arc(mut self, radius: f64, deg: f64, secs: f64) -> Self {
        let n = self.steps(secs);
        let sign = deg.signum();
        // centre lies to the right for clockwise turns
        let (cx, cy) = {
            let (ex, ny) = body_to_world(sign * radius, 0.0, self.heading);
            (self.x + ex, self.y + ny)
        };
        let start_heading = self.heading;
        for i in 1..=n {
            self.k += 1;
            self.heading = start_heading + deg * i as f64 / n as f64;
            let (ex, ny) = body_to_world(-sign * radius, 0.0, self.heading);
            self.x = cx + ex;
            self.y = cy + ny;
            self.emit();
        }
        self
    }

    pub fn build(self) -> Trajectory {
        Trajectory::new(self.points).expect("builder emits a valid grid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(points: &[(f64, f64, f64, f64)]) -> Trajectory {
        Trajectory::new(
            points
                .iter()
                .map(|&(t, x, y, h)| TrajectoryPoint {
                    t,
                    x,
                    y,
                    heading_deg: h,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_heading() {
        let tr = traj(&[(0.0, 0.0, 0.0, 45.0), (1.0, 0.0, 0.0, 45.0)]);
        let s = synthesize_compass(&tr, 100.0).unwrap();
        assert_eq!(s.len(), 101);
        assert!(s.iter().all(|c| c.heading_deg == 45.0));
    }

    #[test]
    fn linear_turn_samples() {
        let tr = traj(&[(0.0, 0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 90.0)]);
        let s = synthesize_compass(&tr, 10.0).unwrap();
        let headings: Vec<f64> = s.iter().map(|c| c.heading_deg).collect();
        assert_eq!(headings.len(), 11);
        for (k, h) in headings.iter().enumerate() {
            assert!((h - 9.0 * k as f64).abs() < 1e-9, "{k}: {h}");
        }
        assert_eq!(s[10].timestamp, Timestamp(1_000_000));
    }

    #[test]
    fn turn_through_north_has_no_jump() {
        let tr = traj(&[(0.0, 0.0, 0.0, 350.0), (1.0, 0.0, 0.0, 10.0)]);
        let s = synthesize_compass(&tr, 10.0).unwrap();
        for w in s.windows(2) {
            let d = HeadingDelta::wrap(w[1].heading_deg - w[0].heading_deg).degrees();
            assert!((d - 2.0).abs() < 1e-9);
            assert!((0.0..360.0).contains(&w[1].heading_deg));
        }
    }

    #[test]
    fn rejects_fast_turn_and_short_input() {
        // 170 deg per 1 ms point: 1700 deg between 10 Hz samples.
        let pts: Vec<_> = (0..200)
            .map(|i| (i as f64 * 0.001, 0.0, 0.0, (i as f64 * 170.0) % 360.0))
            .collect();
        assert!(matches!(
            synthesize_compass(&traj(&pts), 10.0),
            Err(SynthError::TurnTooFast { .. })
        ));
        let short = traj(&[(0.0, 0.0, 0.0, 0.0), (0.005, 0.0, 0.0, 0.0)]);
        assert!(matches!(
            synthesize_compass(&short, 100.0),
            Err(SynthError::TooShort { .. })
        ));
        assert!(matches!(
            synthesize_compass(&short, 0.0),
            Err(SynthError::NonPositiveRate(_))
        ));
        let two = traj(&[(0.0, 0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0)]);
        assert_eq!(
            synthesize_accel(&two, 10.0, AccelFrame::World),
            Err(SynthError::TooFewPoints(2))
        );
    }

    #[test]
    fn constant_velocity_has_zero_acceleration() {
        let pts: Vec<_> = (0..=100)
            .map(|k| (k as f64 / 100.0, 0.7 * k as f64 / 100.0, -0.2 * k as f64 / 100.0, 0.0))
            .collect();
        let s = synthesize_accel(&traj(&pts), 100.0, AccelFrame::World).unwrap();
        for a in &s[1..s.len() - 1] {
            assert!(a.ax.abs() < 1e-9 && a.ay.abs() < 1e-9, "{a:?}");
        }
    }

    #[test]
    fn quadratic_has_exact_second_difference() {
        let pts: Vec<_> = (0..=100)
            .map(|k| {
                let t = k as f64 / 100.0;
                (t, 0.5 * t * t, 0.0, 0.0)
            })
            .collect();
        let s = synthesize_accel(&traj(&pts), 100.0, AccelFrame::World).unwrap();
        for a in &s[1..s.len() - 1] {
            assert!((a.ax - 1.0).abs() < 1e-9, "{a:?}");
        }
    }

    #[test]
    fn circular_path_is_centripetal() {
        let (r, omega) = (2.0, std::f64::consts::PI);
        let pts: Vec<_> = (0..=200)
            .map(|k| {
                let t = k as f64 / 100.0;
                (t, r * (omega * t).cos(), r * (omega * t).sin(), 0.0)
            })
            .collect();
        let s = synthesize_accel(&traj(&pts), 100.0, AccelFrame::World).unwrap();
        let expected = omega * omega * r;
        for a in &s[1..s.len() - 1] {
            assert!((a.magnitude() - expected).abs() / expected < 0.01);
        }
    }

    #[test]
    fn body_frame_rotates_with_heading() {
        // accelerating due east while facing east: all forward
        let pts: Vec<_> = (0..=10)
            .map(|k| {
                let t = k as f64 / 10.0;
                (t, 0.5 * t * t, 0.0, 90.0)
            })
            .collect();
        let s = synthesize_accel(&traj(&pts), 10.0, AccelFrame::Body).unwrap();
        assert!(s[5].ax.abs() < 1e-9);
        assert!((s[5].ay - 1.0).abs() < 1e-9);
        let (ex, ny) = body_to_world(0.3, 0.4, 37.0);
        let (r, f) = world_to_body(ex, ny, 37.0);
        assert!((r - 0.3).abs() < 1e-12 && (f - 0.4).abs() < 1e-12);
    }

    #[test]
    fn text_format_round_trips() {
        let tr = TrajectoryBuilder::new(100.0, 0.25, -1.0, 10.0)
            .hold(0.05)
            .turn(-30.0, 0.1)
            .walk(0.5, 0.0, 0.2, 1)
            .build();
        let text = tr.to_text();
        assert!(text.starts_with("t x y heading\n"));
        assert_eq!(Trajectory::parse(&text).unwrap(), tr);
        assert!(matches!(
            Trajectory::parse("0 0 0 0\n"),
            Err(SynthError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Trajectory::parse("t x y heading\n0 0 0\n"),
            Err(SynthError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            Trajectory::parse("t x y heading\n0 0 0 0\n0 1 1 0\n"),
            Err(SynthError::InvalidPoint { index: 1, .. })
        ));
    }

    #[test]
    fn walk_profile_covers_distance() {
        let tr = TrajectoryBuilder::new(100.0, 0.0, 0.0, 90.0)
            .walk(2.0, 0.0, 2.0, 4)
            .build();
        let end = tr.end();
        assert!((end.x - 2.0).abs() < 1e-12 && end.y.abs() < 1e-12);
        assert_eq!(tr.points().len(), 201);
    }

    #[test]
    fn arc_ends_on_circle() {
        let tr = TrajectoryBuilder::new(100.0, 0.0, 0.0, 0.0)
            .arc(1.0, 90.0, 1.0)
            .build();
        let end = tr.end();
        // quarter circle clockwise from facing north: ends 1 m east, 1 m north
        assert!((end.x - 1.0).abs() < 1e-9 && (end.y - 1.0).abs() < 1e-9);
        assert!((end.heading_deg - 90.0).abs() < 1e-9);
    }

    #[test]
    fn noise_is_reproducible() {
        let tr = TrajectoryBuilder::new(100.0, 0.0, 0.0, 0.0).hold(1.0).build();
        let mut a = synthesize_accel(&tr, 100.0, AccelFrame::Body).unwrap();
        let mut b = a.clone();
        add_accel_noise(&mut a, 0.05, 9).unwrap();
        add_accel_noise(&mut b, 0.05, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().any(|s| s.ax != 0.0));
        assert!(add_accel_noise(&mut b, -1.0, 0).is_err());
    }
}
