use std::fmt;
use std::ops::Sub;

use serde::{Deserialize, Serialize};

/// Monotonic sensor time in whole microseconds.
///
/// Integer microseconds keep replay bit-exact; use [`Timestamp::as_secs_f64`]
/// for arithmetic in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub const fn from_micros(us: u64) -> Self {
        Timestamp(us)
    }

    /// Rounds to the nearest microsecond. Negative or non-finite input saturates to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        if secs.is_finite() && secs > 0.0 {
            Timestamp((secs * 1e6).round() as u64)
        } else {
            Timestamp(0)
        }
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_add_micros(self, us: u64) -> Self {
        Timestamp(self.0.saturating_add(us))
    }
}

impl Sub for Timestamp {
    type Output = i64;

    /// Signed difference in microseconds.
    fn sub(self, rhs: Timestamp) -> i64 {
        self.0 as i64 - rhs.0 as i64
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}
