//! Sensor samples and the host-facing serial frame protocol.
//!
//! ## Frame layout
//!
//! All multi-byte fields are little-endian.
//!
//! ```text
//! ,------+------+----------+-----------+-------------------+----------,
//! | SYNC | KIND | SEQUENCE | TIMESTAMP | PAYLOAD           | CHECKSUM |
//! | 0xA5 | u8   | u32      | u32 (us)  | 2 or 4 bytes      | u8       |
//! '------+------+----------+-----------+-------------------+----------'
//!
//! KIND ...... 0x01 compass, 0x02 accelerometer
//! TIMESTAMP . microseconds, wrapping at 2^32
//! PAYLOAD ... compass: u16 heading in 0.01 deg
//!             accel:   i16 ax, i16 ay in 0.001 m/s^2
//! CHECKSUM .. XOR of every preceding byte except SYNC
//! ```
//!
//! A compass frame is 13 bytes, an accelerometer frame 15 bytes.
//!
//! [`parse_frame`] decodes one frame from the front of a buffer. [`FrameDecoder`]
//! wraps it into an incremental, resynchronizing stream decoder that also
//! unwraps timestamps and surfaces sequence gaps.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::Timestamp;

pub const SYNC: u8 = 0xA5;
pub const COMPASS_FRAME_LEN: usize = 13;
pub const ACCEL_FRAME_LEN: usize = 15;
const HEADER_LEN: usize = 10;

/// Default accelerometer range, ±4 g.
pub const DEFAULT_ACCEL_RANGE: f64 = 39.2;

/// Largest magnitude the accelerometer payload can carry (i16 milli-m/s²).
pub const WIRE_ACCEL_LIMIT: f64 = i16::MAX as f64 / 1000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamKind {
    Compass,
    Accel,
}

impl StreamKind {
    pub const fn code(self) -> u8 {
        match self {
            StreamKind::Compass => 0x01,
            StreamKind::Accel => 0x02,
        }
    }

    pub const fn from_code(code: u8) -> Option<Self> {
        match code {
            0x01 => Some(StreamKind::Compass),
            0x02 => Some(StreamKind::Accel),
            _ => None,
        }
    }

    pub const fn frame_len(self) -> usize {
        match self {
            StreamKind::Compass => COMPASS_FRAME_LEN,
            StreamKind::Accel => ACCEL_FRAME_LEN,
        }
    }

    fn index(self) -> usize {
        match self {
            StreamKind::Compass => 0,
            StreamKind::Accel => 1,
        }
    }
}

impl fmt::Display for StreamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StreamKind::Compass => "compass",
            StreamKind::Accel => "accel",
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SampleError {
    #[error("heading {0} deg outside [0, 360)")]
    HeadingOutOfRange(f64),
    #[error("acceleration ({0}, {1}) is not finite")]
    NonFiniteAccel(f64, f64),
}

/// Absolute heading, degrees clockwise from magnetic north.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompassSample {
    pub timestamp: Timestamp,
    pub heading_deg: f64,
}

impl CompassSample {
    pub fn new(timestamp: Timestamp, heading_deg: f64) -> Result<Self, SampleError> {
        if !(0.0..360.0).contains(&heading_deg) {
            return Err(SampleError::HeadingOutOfRange(heading_deg));
        }
        Ok(CompassSample {
            timestamp,
            heading_deg,
        })
    }
}

/// Planar acceleration in m/s², in the sensor's own frame (x right, y forward).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccelSample {
    pub timestamp: Timestamp,
    pub ax: f64,
    pub ay: f64,
}

impl AccelSample {
    pub fn new(timestamp: Timestamp, ax: f64, ay: f64) -> Result<Self, SampleError> {
        if !ax.is_finite() || !ay.is_finite() {
            return Err(SampleError::NonFiniteAccel(ax, ay));
        }
        Ok(AccelSample { timestamp, ax, ay })
    }

    pub fn magnitude(&self) -> f64 {
        self.ax.hypot(self.ay)
    }

    /// Both axes within `±range`.
    pub fn within_range(&self, range: f64) -> bool {
        self.ax.abs() <= range && self.ay.abs() <= range
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SensorPayload {
    Compass(CompassSample),
    Accel(AccelSample),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub sequence: u32,
    pub payload: SensorPayload,
}

impl SensorFrame {
    pub fn compass(sequence: u32, sample: CompassSample) -> Self {
        SensorFrame {
            sequence,
            payload: SensorPayload::Compass(sample),
        }
    }

    pub fn accel(sequence: u32, sample: AccelSample) -> Self {
        SensorFrame {
            sequence,
            payload: SensorPayload::Accel(sample),
        }
    }

    pub fn kind(&self) -> StreamKind {
        match self.payload {
            SensorPayload::Compass(_) => StreamKind::Compass,
            SensorPayload::Accel(_) => StreamKind::Accel,
        }
    }

    pub fn timestamp(&self) -> Timestamp {
        match self.payload {
            SensorPayload::Compass(s) => s.timestamp,
            SensorPayload::Accel(s) => s.timestamp,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EncodeError {
    #[error("heading {0} deg outside [0, 360)")]
    HeadingOutOfRange(f64),
    #[error("acceleration {0} m/s^2 does not fit the wire range ±{WIRE_ACCEL_LIMIT}")]
    AccelOutOfRange(f64),
}

/// Why a frame was rejected.
#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
pub enum FrameErrorKind {
    #[error("expected sync byte 0xA5, found {0:#04x}")]
    BadSync(u8),
    #[error("unknown frame kind {0:#04x}")]
    UnknownKind(u8),
    #[error("checksum mismatch: computed {computed:#04x}, received {received:#04x}")]
    Checksum { computed: u8, received: u8 },
    #[error("heading field {0} exceeds 35999 centidegrees")]
    HeadingField(u16),
    /// Found while resynchronizing: a valid frame starts inside this one.
    #[error("frame overlaps a valid frame at offset {0}")]
    Overlapped(usize),
}

/// A rejected frame. `skip` is the number of leading bytes to discard so the
/// buffer starts at the next sync candidate (or is empty).
#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
#[error("{kind}; resync after {skip} bytes")]
pub struct FrameError {
    pub kind: FrameErrorKind,
    pub skip: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Parsed {
    Frame { frame: SensorFrame, consumed: usize },
    NeedMore,
}

fn checksum(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0, |acc, b| acc ^ b)
}

fn encode_heading(heading_deg: f64) -> Result<u16, EncodeError> {
    if !(0.0..360.0).contains(&heading_deg) {
        return Err(EncodeError::HeadingOutOfRange(heading_deg));
    }
    // 359.996 rounds up to a full turn.
    let centi = (heading_deg * 100.0).round() as u32 % 36_000;
    Ok(centi as u16)
}

fn encode_accel(a: f64) -> Result<i16, EncodeError> {
    let milli = (a * 1000.0).round();
    if !milli.is_finite() || milli < i16::MIN as f64 || milli > i16::MAX as f64 {
        return Err(EncodeError::AccelOutOfRange(a));
    }
    Ok(milli as i16)
}

/// Appends the wire encoding of `frame` to `out`.
///
/// Headings are quantized to 0.01° and accelerations to 0.001 m/s²; the
/// timestamp is truncated to its low 32 bits.
pub fn encode_frame_into(frame: &SensorFrame, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    let start = out.len();
    let raw_ts = frame.timestamp().as_micros() as u32;
    match frame.payload {
        SensorPayload::Compass(s) => {
            let heading = encode_heading(s.heading_deg)?;
            out.extend_from_slice(&[SYNC, StreamKind::Compass.code()]);
            out.extend_from_slice(&frame.sequence.to_le_bytes());
            out.extend_from_slice(&raw_ts.to_le_bytes());
            out.extend_from_slice(&heading.to_le_bytes());
        }
        SensorPayload::Accel(s) => {
            let ax = encode_accel(s.ax)?;
            let ay = encode_accel(s.ay)?;
            out.extend_from_slice(&[SYNC, StreamKind::Accel.code()]);
            out.extend_from_slice(&frame.sequence.to_le_bytes());
            out.extend_from_slice(&raw_ts.to_le_bytes());
            out.extend_from_slice(&ax.to_le_bytes());
            out.extend_from_slice(&ay.to_le_bytes());
        }
    }
    let sum = checksum(&out[start + 1..]);
    out.push(sum);
    Ok(())
}

pub fn encode_frame(frame: &SensorFrame) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(frame.kind().frame_len());
    encode_frame_into(frame, &mut out)?;
    Ok(out)
}

/// Encodes two sample streams as one byte stream, interleaved by timestamp
/// (compass first on ties), numbering each stream from its `first_seq`.
pub fn encode_streams(
    compass: &[CompassSample],
    accel: &[AccelSample],
    first_seq: (u32, u32),
) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(compass.len() * COMPASS_FRAME_LEN + accel.len() * ACCEL_FRAME_LEN);
    let (mut ci, mut ai) = (0, 0);
    let (mut cseq, mut aseq) = first_seq;
    while ci < compass.len() || ai < accel.len() {
        let take_compass = match (compass.get(ci), accel.get(ai)) {
            (Some(c), Some(a)) => c.timestamp <= a.timestamp,
            (Some(_), None) => true,
            _ => false,
        };
        if take_compass {
            encode_frame_into(&SensorFrame::compass(cseq, compass[ci]), &mut out)?;
            cseq = cseq.wrapping_add(1);
            ci += 1;
        } else {
            encode_frame_into(&SensorFrame::accel(aseq, accel[ai]), &mut out)?;
            aseq = aseq.wrapping_add(1);
            ai += 1;
        }
    }
    Ok(out)
}

/// Distance from `from` to the next sync byte, or the rest of the buffer.
fn skip_to_sync(buf: &[u8], from: usize) -> usize {
    buf[from..]
        .iter()
        .position(|&b| b == SYNC)
        .map_or(buf.len(), |p| from + p)
}

/// Decodes the first frame at the front of `buf`.
///
/// Incomplete input yields [`Parsed::NeedMore`] and consumes nothing. The
/// returned timestamp is the raw 32-bit wire value; [`FrameDecoder`] unwraps it.
pub fn parse_frame(buf: &[u8]) -> Result<Parsed, FrameError> {
    let Some(&first) = buf.first() else {
        return Ok(Parsed::NeedMore);
    };
    if first != SYNC {
        return Err(FrameError {
            kind: FrameErrorKind::BadSync(first),
            skip: skip_to_sync(buf, 1),
        });
    }
    let Some(&code) = buf.get(1) else {
        return Ok(Parsed::NeedMore);
    };
    let reject = |kind| FrameError {
        kind,
        skip: skip_to_sync(buf, 1),
    };
    let Some(kind) = StreamKind::from_code(code) else {
        return Err(reject(FrameErrorKind::UnknownKind(code)));
    };
    let len = kind.frame_len();
    if buf.len() < len {
        return Ok(Parsed::NeedMore);
    }
    let computed = checksum(&buf[1..len - 1]);
    let received = buf[len - 1];
    if computed != received {
        return Err(reject(FrameErrorKind::Checksum { computed, received }));
    }

    let u32_at = |i: usize| u32::from_le_bytes([buf[i], buf[i + 1], buf[i + 2], buf[i + 3]]);
    let sequence = u32_at(2);
    let timestamp = Timestamp::from_micros(u64::from(u32_at(6)));
    let payload = &buf[HEADER_LEN..len - 1];
    let payload = match kind {
        StreamKind::Compass => {
            let centi = u16::from_le_bytes([payload[0], payload[1]]);
            if centi >= 36_000 {
                return Err(reject(FrameErrorKind::HeadingField(centi)));
            }
            SensorPayload::Compass(CompassSample {
                timestamp,
                heading_deg: f64::from(centi) / 100.0,
            })
        }
        StreamKind::Accel => {
            let ax = i16::from_le_bytes([payload[0], payload[1]]);
            let ay = i16::from_le_bytes([payload[2], payload[3]]);
            SensorPayload::Accel(AccelSample {
                timestamp,
                ax: f64::from(ax) / 1000.0,
                ay: f64::from(ay) / 1000.0,
            })
        }
    };
    Ok(Parsed::Frame {
        frame: SensorFrame { sequence, payload },
        consumed: len,
    })
}

/// One item out of the stream decoder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decoded {
    Frame(SensorFrame),
    /// `missing` frames of `kind` never arrived; reported before the frame
    /// that revealed the gap.
    Gap { kind: StreamKind, missing: u32 },
    Error(FrameError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DecoderStats {
    pub frames: u64,
    pub lost: u64,
    pub errors: u64,
    pub bytes_skipped: u64,
    pub sequence_resets: u64,
}

#[derive(Clone, Copy, Debug, Default)]
struct StreamTrack {
    expected: Option<u32>,
    last_raw_ts: Option<u32>,
    epoch: u64,
}

/// Incremental decoder for one byte stream carrying both sensor kinds.
///
/// Feeding the stream byte by byte yields the same frames and gaps, and
/// skips the same bytes, as feeding it whole. Errors may be split
/// differently: garbage is reported as far as it has arrived.
///
/// After an error the decoder is resynchronizing, and a checksum match alone
/// is not trusted: one in 256 random byte runs passes the XOR check. Until a
/// frame is accepted, a candidate must either be followed by a sync byte or
/// contain no other valid frame. This can hold a frame back until the next
/// one starts arriving, or until [`FrameDecoder::finish`].
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    pos: usize,
    resyncing: bool,
    eof: bool,
    tracks: [StreamTrack; 2],
    pending: VecDeque<Decoded>,
    stats: DecoderStats,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        if self.pos > 0 && self.pos * 2 >= self.buf.len() {
            self.buf.drain(..self.pos);
            self.pos = 0;
        }
        self.buf.extend_from_slice(bytes);
    }

    pub fn stats(&self) -> DecoderStats {
        self.stats
    }

    /// Bytes buffered but not yet decoded.
    pub fn buffered(&self) -> usize {
        self.buf.len() - self.pos
    }

    /// Returns the next decoded item, or `None` once more bytes are needed.
    pub fn next_item(&mut self) -> Option<Decoded> {
        if let Some(item) = self.pending.pop_front() {
            return Some(item);
        }
        let rest = &self.buf[self.pos..];
        let parsed = parse_frame(rest).and_then(|p| match p {
            Parsed::Frame { consumed, .. } if self.resyncing => {
                match confirm(rest, consumed, self.eof) {
                    Some(Ok(())) => Ok(p),
                    Some(Err(e)) => Err(e),
                    None => Ok(Parsed::NeedMore),
                }
            }
            _ => Ok(p),
        });
        match parsed {
            Ok(Parsed::NeedMore) => None,
            Ok(Parsed::Frame { frame, consumed }) => {
                self.pos += consumed;
                self.resyncing = false;
                Some(self.accept(frame))
            }
            Err(err) => {
                self.pos += err.skip;
                self.resyncing = true;
                self.stats.errors += 1;
                self.stats.bytes_skipped += err.skip as u64;
                Some(Decoded::Error(err))
            }
        }
    }

    /// Marks the end of the stream, releasing a frame held for confirmation.
    /// A trailing partial frame stays buffered.
    pub fn finish(&mut self) {
        self.eof = true;
    }

    /// Decodes everything currently buffered.
    pub fn drain(&mut self) -> Vec<Decoded> {
        std::iter::from_fn(|| self.next_item()).collect()
    }

    fn accept(&mut self, mut frame: SensorFrame) -> Decoded {
        let kind = frame.kind();
        let track = &mut self.tracks[kind.index()];

        let raw = frame.timestamp().as_micros() as u32;
        if let Some(last) = track.last_raw_ts {
            if raw < last && last - raw > u32::MAX / 2 {
                track.epoch += 1;
            }
        }
        track.last_raw_ts = Some(raw);
        let ts = Timestamp::from_micros((track.epoch << 32) | u64::from(raw));
        match &mut frame.payload {
            SensorPayload::Compass(s) => s.timestamp = ts,
            SensorPayload::Accel(s) => s.timestamp = ts,
        }

        let expected = track.expected.unwrap_or(0);
        track.expected = Some(frame.sequence.wrapping_add(1));
        self.stats.frames += 1;
        if frame.sequence > expected {
            let missing = frame.sequence - expected;
            self.stats.lost += u64::from(missing);
            self.pending.push_back(Decoded::Frame(frame));
            Decoded::Gap { kind, missing }
        } else {
            if frame.sequence < expected {
                self.stats.sequence_resets += 1;
            }
            Decoded::Frame(frame)
        }
    }
}

/// Checks a resync candidate of `len` bytes at the front of `buf`. `None`
/// means more bytes are needed to decide.
fn confirm(buf: &[u8], len: usize, eof: bool) -> Option<Result<(), FrameError>> {
    match buf.get(len) {
        Some(&SYNC) => return Some(Ok(())),
        None if !eof => return None,
        _ => {}
    }
    for q in 1..len {
        if buf[q] != SYNC {
            continue;
        }
        match parse_frame(&buf[q..]) {
            Ok(Parsed::Frame { .. }) => {
                return Some(Err(FrameError {
                    kind: FrameErrorKind::Overlapped(q),
                    skip: q,
                }))
            }
            Ok(Parsed::NeedMore) if !eof => return None,
            _ => {}
        }
    }
    Some(Ok(()))
}

/// Decodes a complete byte stream.
pub fn decode_all(bytes: &[u8]) -> Vec<Decoded> {
    let mut decoder = FrameDecoder::new();
    decoder.push(bytes);
    decoder.finish();
    decoder.drain()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn compass(seq: u32, us: u64, heading: f64) -> SensorFrame {
        SensorFrame::compass(seq, CompassSample::new(Timestamp(us), heading).unwrap())
    }

    fn accel(seq: u32, us: u64, ax: f64, ay: f64) -> SensorFrame {
        SensorFrame::accel(seq, AccelSample::new(Timestamp(us), ax, ay).unwrap())
    }

    #[test]
    fn compass_frame_round_trip() {
        let frame = compass(7, 123_456, 90.0);
        let bytes = encode_frame(&frame).unwrap();
        assert_eq!(bytes.len(), COMPASS_FRAME_LEN);
        assert_eq!(
            parse_frame(&bytes).unwrap(),
            Parsed::Frame {
                frame,
                consumed: 13
            }
        );
    }

    #[test]
    fn zero_compass_frame_layout() {
        let bytes = encode_frame(&compass(0, 0, 0.0)).unwrap();
        assert_eq!(bytes, [0xA5, 0x01, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0x01]);
    }

    #[test]
    fn accel_frame_layout() {
        let bytes = encode_frame(&accel(1, 0x0102_0304, 1.5, -0.25)).unwrap();
        // 1500 = 0x05DC, -250 = 0xFF06
        let body = [0x02, 1, 0, 0, 0, 0x04, 0x03, 0x02, 0x01, 0xDC, 0x05, 0x06, 0xFF];
        let sum = body.iter().fold(0u8, |a, b| a ^ b);
        let mut expected = vec![0xA5];
        expected.extend_from_slice(&body);
        expected.push(sum);
        assert_eq!(bytes, expected);
        assert_eq!(bytes.len(), ACCEL_FRAME_LEN);
    }

    #[test]
    fn empty_and_partial_input_need_more() {
        assert_eq!(parse_frame(&[]).unwrap(), Parsed::NeedMore);
        let bytes = encode_frame(&compass(3, 10, 12.34)).unwrap();
        for cut in 1..bytes.len() {
            assert_eq!(parse_frame(&bytes[..cut]).unwrap(), Parsed::NeedMore);
        }
    }

    #[test]
    fn rejects_out_of_range_fields() {
        let bad = SensorFrame::compass(
            0,
            CompassSample {
                timestamp: Timestamp(0),
                heading_deg: 360.0,
            },
        );
        assert_eq!(encode_frame(&bad), Err(EncodeError::HeadingOutOfRange(360.0)));
        assert!(CompassSample::new(Timestamp(0), 360.0).is_err());
        assert!(CompassSample::new(Timestamp(0), -0.5).is_err());
        assert_eq!(
            encode_frame(&accel(0, 0, 33.0, 0.0)),
            Err(EncodeError::AccelOutOfRange(33.0))
        );
        assert!(AccelSample::new(Timestamp(0), f64::NAN, 0.0).is_err());
    }

    #[test]
    fn heading_just_below_full_turn_wraps_to_zero() {
        let bytes = encode_frame(&compass(0, 0, 359.996)).unwrap();
        match parse_frame(&bytes).unwrap() {
            Parsed::Frame { frame, .. } => match frame.payload {
                SensorPayload::Compass(s) => assert_eq!(s.heading_deg, 0.0),
                _ => unreachable!(),
            },
            Parsed::NeedMore => panic!("complete frame"),
        }
    }

    #[test]
    fn flipped_checksum_resyncs_to_next_frame() {
        let first = compass(0, 100, 45.0);
        let second = compass(1, 200, 46.0);
        let mut bytes = encode_frame(&first).unwrap();
        bytes[COMPASS_FRAME_LEN - 1] ^= 0xFF;
        bytes.extend(encode_frame(&second).unwrap());

        let err = parse_frame(&bytes).unwrap_err();
        assert!(matches!(err.kind, FrameErrorKind::Checksum { .. }));
        assert_eq!(err.skip, COMPASS_FRAME_LEN);
        assert_eq!(
            parse_frame(&bytes[err.skip..]).unwrap(),
            Parsed::Frame {
                frame: second,
                consumed: COMPASS_FRAME_LEN
            }
        );
    }

    #[test]
    fn resync_prefers_the_later_of_overlapping_frames() {
        let real = encode_frame(&compass(0, 7, 12.0)).unwrap();
        // a bogus frame starting 4 bytes early that passes its checksum
        let x = 0x11;
        let y = 0x01 ^ x ^ checksum(&real[..8]) ^ real[8];
        let mut bytes = vec![0x00, SYNC, 0x01, x, y];
        bytes.extend(&real);
        assert!(matches!(parse_frame(&bytes[1..]), Ok(Parsed::Frame { .. })));

        let items = decode_all(&bytes);
        assert_eq!(items.len(), 3);
        assert!(matches!(
            items[1],
            Decoded::Error(FrameError {
                kind: FrameErrorKind::Overlapped(4),
                ..
            })
        ));
        assert_eq!(items[2], Decoded::Frame(compass(0, 7, 12.0)));
    }

    #[test]
    fn resync_candidate_waits_for_confirmation() {
        let mut bytes = vec![0x00];
        bytes.extend(encode_frame(&compass(0, 1, 1.0)).unwrap());
        let mut d = FrameDecoder::new();
        d.push(&bytes);
        assert!(matches!(d.next_item(), Some(Decoded::Error(_))));
        assert_eq!(d.next_item(), None);
        d.finish();
        assert!(matches!(d.next_item(), Some(Decoded::Frame(_))));
    }

    #[test]
    fn bad_sync_skips_to_next_sync() {
        let mut bytes = vec![0x00, 0x13, 0x37];
        bytes.extend(encode_frame(&compass(0, 1, 1.0)).unwrap());
        let err = parse_frame(&bytes).unwrap_err();
        assert_eq!(err.kind, FrameErrorKind::BadSync(0x00));
        assert_eq!(err.skip, 3);
    }

    #[test]
    fn unknown_kind_is_an_error() {
        let mut bytes = encode_frame(&compass(0, 1, 1.0)).unwrap();
        bytes[1] = 0x7F;
        let err = parse_frame(&bytes).unwrap_err();
        assert_eq!(err.kind, FrameErrorKind::UnknownKind(0x7F));
    }

    #[test]
    fn decoder_surfaces_gaps_and_counts_loss() {
        let mut bytes = Vec::new();
        for frame in [compass(2, 10, 1.0), compass(3, 20, 2.0), compass(6, 30, 3.0)] {
            encode_frame_into(&frame, &mut bytes).unwrap();
        }
        encode_frame_into(&accel(0, 15, 0.0, 0.0), &mut bytes).unwrap();
        let items = decode_all(&bytes);
        assert_eq!(
            items[0],
            Decoded::Gap {
                kind: StreamKind::Compass,
                missing: 2
            }
        );
        assert!(matches!(items[1], Decoded::Frame(_)));
        assert!(matches!(items[2], Decoded::Frame(_)));
        assert_eq!(
            items[3],
            Decoded::Gap {
                kind: StreamKind::Compass,
                missing: 2
            }
        );
        assert!(matches!(items[5], Decoded::Frame(f) if f.kind() == StreamKind::Accel));
        let stats = decode_all_stats(&bytes);
        assert_eq!(stats.frames, 4);
        assert_eq!(stats.lost, 4);
        // received + lost = highest sequence + 1, per stream: compass 3 + 4 = 7, accel 1 + 0 = 1
        assert_eq!(stats.frames + stats.lost, 7 + 1);
    }

    fn decode_all_stats(bytes: &[u8]) -> DecoderStats {
        let mut d = FrameDecoder::new();
        d.push(bytes);
        d.drain();
        d.stats()
    }

    #[test]
    fn decoder_unwraps_timestamps() {
        let mut bytes = Vec::new();
        let near_wrap = u64::from(u32::MAX) - 5_000;
        encode_frame_into(&compass(0, near_wrap, 1.0), &mut bytes).unwrap();
        encode_frame_into(&compass(1, near_wrap + 10_000, 2.0), &mut bytes).unwrap();
        let ts: Vec<_> = decode_all(&bytes)
            .into_iter()
            .filter_map(|d| match d {
                Decoded::Frame(f) => Some(f.timestamp().as_micros()),
                _ => None,
            })
            .collect();
        assert_eq!(ts, vec![near_wrap, near_wrap + 10_000]);
    }
}
