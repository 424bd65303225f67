//! Heading changes to horizontal mouse displacement.
//!
//! A turn of Θ degrees becomes a chord of the circle of radius M pixels:
//! `X = 2M·√((1 − cos Θ)/2) = 2M·|sin(Θ/2)|`, signed with the turn direction
//! (clockwise = positive = rightward). Fractional pixels are carried into
//! the next displacement so slow turns are not lost.
//!
//! Only the horizontal axis is ever driven; the compass yields yaw alone.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hid::HidEvent;
use crate::sensor::CompassSample;

#[derive(Debug, Error, PartialEq)]
pub enum MapperError {
    #[error("heading {0} deg outside [0, 360)")]
    HeadingOutOfRange(f64),
    #[error("mouse factor must be positive and finite, got {0}")]
    InvalidMouseFactor(f64),
    #[error("compass samples out of order: {prev} then {curr}")]
    OutOfOrder {
        prev: crate::Timestamp,
        curr: crate::Timestamp,
    },
}

/// Signed shortest-arc heading change, degrees in (−180, 180].
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct HeadingDelta(f64);

impl HeadingDelta {
    /// Normalizes any finite angle into (−180, 180].
    pub fn wrap(deg: f64) -> Self {
        let mut d = deg.rem_euclid(360.0);
        if d >= 360.0 {
            d = 0.0;
        }
        if d > 180.0 {
            d -= 360.0;
        }
        HeadingDelta(d)
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }
}

/// Calibration factor M, in pixels. A half-turn moves the mouse 2M pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MouseFactor(f64);

impl MouseFactor {
    pub fn new(pixels: f64) -> Result<Self, MapperError> {
        if pixels.is_finite() && pixels > 0.0 {
            Ok(MouseFactor(pixels))
        } else {
            Err(MapperError::InvalidMouseFactor(pixels))
        }
    }

    pub fn pixels(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for MouseFactor {
    type Error = MapperError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        MouseFactor::new(v)
    }
}

impl From<MouseFactor> for f64 {
    fn from(m: MouseFactor) -> f64 {
        m.0
    }
}

fn check_heading(deg: f64) -> Result<(), MapperError> {
    if (0.0..360.0).contains(&deg) {
        Ok(())
    } else {
        Err(MapperError::HeadingOutOfRange(deg))
    }
}

/// Turn from heading `alpha` to heading `beta`, along the shorter arc.
pub fn heading_delta(alpha_deg: f64, beta_deg: f64) -> Result<HeadingDelta, MapperError> {
    check_heading(alpha_deg)?;
    check_heading(beta_deg)?;
    Ok(HeadingDelta::wrap(beta_deg - alpha_deg))
}

/// The three algebraic forms of the heading-to-pixels chord, kept separate so
/// their agreement can be checked.
pub mod chord {
    /// `1 − cos θ` without cancellation near zero.
    ///
    /// Below 0.25 rad a Taylor series is used; the leading terms alternate and
    /// shrink fast enough that nine terms reach f64 precision.
    pub fn versine(theta_rad: f64) -> f64 {
        let t2 = theta_rad * theta_rad;
        if t2 < 0.0625 {
            let mut term = t2 / 2.0;
            let mut sum = 0.0;
            let mut n = 2.0_f64;
            for _ in 0..9 {
                sum += term;
                term *= -t2 / ((n + 1.0) * (n + 2.0));
                n += 2.0;
            }
            sum
        } else {
            1.0 - theta_rad.cos()
        }
    }

    /// Half displacement from the half-angle sine: `X/2 = M·sin(θ/2)`.
    pub fn half_from_sine(m: f64, theta_rad: f64) -> f64 {
        m * (theta_rad / 2.0).sin()
    }

    /// Half displacement from the cosine: `X/2 = M·√((1 − cos θ)/2)`.
    pub fn half_from_cosine(m: f64, theta_rad: f64) -> f64 {
        m * (versine(theta_rad) / 2.0).sqrt()
    }

    /// Full displacement: `X = 2M·√((1 − cos θ)/2)`. Always non-negative.
    pub fn full(m: f64, theta_rad: f64) -> f64 {
        2.0 * m * (versine(theta_rad) / 2.0).sqrt()
    }
}

/// Exact (real-valued) signed displacement for a turn, before pixel rounding.
pub fn exact_displacement(theta: HeadingDelta, m: MouseFactor) -> f64 {
    let magnitude = chord::full(m.pixels(), theta.radians());
    if theta.degrees() < 0.0 {
        -magnitude
    } else {
        magnitude
    }
}

/// Stateful heading-to-mouse stage: rounds to whole pixels, carrying the
/// remainder, and remembers the previous accepted heading.
#[derive(Clone, Debug)]
pub struct MouseMapper {
    factor: MouseFactor,
    carry: f64,
    prev: Option<CompassSample>,
}

impl MouseMapper {
    pub fn new(factor: MouseFactor) -> Self {
        MouseMapper {
            factor,
            carry: 0.0,
            prev: None,
        }
    }

    pub fn factor(&self) -> MouseFactor {
        self.factor
    }

    /// Takes effect on the next displacement; the carry is kept.
    pub fn set_factor(&mut self, factor: MouseFactor) {
        self.factor = factor;
    }

    /// Fractional pixels not yet emitted, in (−0.5, 0.5].
    pub fn carry(&self) -> f64 {
        self.carry
    }

    pub fn last_sample(&self) -> Option<CompassSample> {
        self.prev
    }

    /// Forgets the previous heading and the carry.
    pub fn reset(&mut self) {
        self.carry = 0.0;
        self.prev = None;
    }

    /// Whole-pixel displacement for `theta`, carrying the fractional part.
    pub fn mouse_displacement(&mut self, theta: HeadingDelta) -> i64 {
        let wanted = exact_displacement(theta, self.factor) + self.carry;
        let emitted = wanted.round();
        self.carry = wanted - emitted;
        emitted as i64
    }

    /// Maps the turn between `prev` and `curr` to a mouse move at `curr`'s
    /// time. A zero-pixel result emits nothing.
    pub fn step(
        &mut self,
        prev: &CompassSample,
        curr: &CompassSample,
    ) -> Result<Option<HidEvent>, MapperError> {
        if curr.timestamp <= prev.timestamp {
            return Err(MapperError::OutOfOrder {
                prev: prev.timestamp,
                curr: curr.timestamp,
            });
        }
        let theta = heading_delta(prev.heading_deg, curr.heading_deg)?;
        let dx = self.mouse_displacement(theta);
        Ok((dx != 0).then(|| HidEvent::mouse_move(curr.timestamp, dx)))
    }

    /// Feeds the next sample of the stream; the first sample only sets the
    /// reference heading.
    pub fn push(&mut self, curr: CompassSample) -> Result<Option<HidEvent>, MapperError> {
        let out = match self.prev {
            Some(prev) => self.step(&prev, &curr)?,
            None => {
                check_heading(curr.heading_deg)?;
                None
            }
        };
        self.prev = Some(curr);
        Ok(out)
    }
}

/// One-shot composition of [`heading_delta`] and the pixel mapping, with a
/// fresh carry.
pub fn pipeline_step_heading(
    prev: &CompassSample,
    curr: &CompassSample,
    m: MouseFactor,
) -> Result<Option<HidEvent>, MapperError> {
    MouseMapper::new(m).step(prev, curr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hid::HidEventKind;
    use crate::Timestamp;

    fn sample(ms: u64, heading: f64) -> CompassSample {
        CompassSample::new(Timestamp(ms * 1000), heading).unwrap()
    }

    fn m(px: f64) -> MouseFactor {
        MouseFactor::new(px).unwrap()
    }

    #[test]
    fn delta_examples() {
        assert_eq!(heading_delta(30.0, 90.0).unwrap().degrees(), 60.0);
        assert_eq!(heading_delta(350.0, 10.0).unwrap().degrees(), 20.0);
        assert_eq!(heading_delta(10.0, 350.0).unwrap().degrees(), -20.0);
        assert_eq!(heading_delta(0.0, 180.0).unwrap().degrees(), 180.0);
        assert_eq!(heading_delta(180.0, 0.0).unwrap().degrees(), 180.0);
        for a in [0.0, 0.01, 123.45, 359.99] {
            assert_eq!(heading_delta(a, a).unwrap().degrees(), 0.0);
        }
    }

    #[test]
    fn delta_rejects_out_of_range() {
        assert_eq!(
            heading_delta(360.0, 0.0),
            Err(MapperError::HeadingOutOfRange(360.0))
        );
        assert!(heading_delta(0.0, -1.0).is_err());
        assert!(heading_delta(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn displacement_examples() {
        let mut mapper = MouseMapper::new(m(50.0));
        assert_eq!(mapper.mouse_displacement(HeadingDelta::wrap(0.0)), 0);
        assert_eq!(mapper.mouse_displacement(HeadingDelta::wrap(180.0)), 100);

        let mut mapper = MouseMapper::new(m(400.0));
        assert_eq!(mapper.mouse_displacement(HeadingDelta::wrap(60.0)), 400);
        assert_eq!(mapper.mouse_displacement(HeadingDelta::wrap(-60.0)), -400);
    }

    #[test]
    fn quarter_turn_carries_remainder() {
        let event = pipeline_step_heading(&sample(0, 0.0), &sample(10, 90.0), m(100.0))
            .unwrap()
            .unwrap();
        assert_eq!(event.kind, HidEventKind::MouseMove { dx: 141 });
        assert_eq!(event.time, Timestamp(10_000));

        let mut mapper = MouseMapper::new(m(100.0));
        mapper.push(sample(0, 0.0)).unwrap();
        mapper.push(sample(10, 90.0)).unwrap();
        // 2 * 100 * sin 45° = 141.421...
        assert!((mapper.carry() - 0.421_356_237_309_5).abs() < 1e-12);
    }

    #[test]
    fn formula_is_path_dependent() {
        let mut two_steps = MouseMapper::new(m(100.0));
        let total: i64 = [(0, 0.0), (10, 45.0), (20, 90.0)]
            .into_iter()
            .filter_map(|(t, h)| two_steps.push(sample(t, h)).unwrap())
            .map(|e| match e.kind {
                HidEventKind::MouseMove { dx } => dx,
                _ => 0,
            })
            .sum();
        assert_eq!(total, 153);
    }

    #[test]
    fn no_turn_emits_nothing() {
        assert_eq!(
            pipeline_step_heading(&sample(0, 0.0), &sample(10, 0.0), m(100.0)).unwrap(),
            None
        );
    }

    #[test]
    fn rejects_non_increasing_time() {
        assert!(matches!(
            pipeline_step_heading(&sample(10, 0.0), &sample(10, 5.0), m(1.0)),
            Err(MapperError::OutOfOrder { .. })
        ));
    }

    #[test]
    fn mouse_factor_must_be_positive() {
        assert!(MouseFactor::new(0.0).is_err());
        assert!(MouseFactor::new(-1.0).is_err());
        assert!(MouseFactor::new(f64::INFINITY).is_err());
    }

    #[test]
    fn versine_matches_cosine_away_from_zero() {
        for i in 1..200 {
            let t = i as f64 * 0.01;
            let direct = 1.0 - f64::cos(t);
            assert!((chord::versine(t) - direct).abs() <= 1e-15 + 1e-12 * direct);
        }
    }
}
