//! Core of the MERP portal: turns compass and planar acceleration streams
//! into abstract mouse/keyboard events and drives a simulated first-person
//! avatar with them.
//!
//! Data flows through these stages:
//!
//! ```text
//! bytes -> sensor (frames) -> mapper (heading -> mouse px)
//!                          -> reckoner (accel -> metres per window) -> hid (key holds)
//!       -> pipeline (ordered HID event stream) -> avatar (room state)
//! ```
//!
//! `synth` generates ideal sensor streams from a ground-truth trajectory and
//! is the oracle used by the round-trip fidelity checks in `avatar`.

pub mod avatar;
pub mod bench;
pub mod config;
pub mod control;
pub mod hid;
pub mod mapper;
pub mod metrics;
pub mod pipeline;
pub mod reckoner;
pub mod sensor;
pub mod synth;
pub mod time;

pub use time::Timestamp;
