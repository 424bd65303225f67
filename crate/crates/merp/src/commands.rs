//! The offline subcommands: replay, simulate, synth, bench and calibrate.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use merp_core::avatar::{padded, run_round_trip, AvatarState, FidelityReport, RoundTripConfig};
use merp_core::bench::{measure_latency, BenchReport};
use merp_core::config::PortalConfig;
use merp_core::hid::write_event_log;
use merp_core::pipeline::{replay, PipelineConfig};
use merp_core::reckoner::estimate_bias;
use merp_core::sensor::{encode_streams, Decoded, DecoderStats, FrameDecoder, SensorPayload};
use merp_core::synth::{add_accel_noise, synthesize_accel, synthesize_compass, Trajectory};
use merp_core::metrics::MetricsSnapshot;
use serde::Serialize;

fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Trajectory::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplaySummary {
    pub events: usize,
    pub decoder: DecoderStats,
    pub metrics: MetricsSnapshot,
    pub final_state: AvatarState,
}

/// Replays a frame file in stream time and writes the event log.
pub fn replay_file(frames: &Path, out: &Path, cfg: &PortalConfig) -> Result<ReplaySummary> {
    let bytes = std::fs::read(frames).with_context(|| format!("reading {}", frames.display()))?;
    let r = replay(&bytes, PipelineConfig::from_portal(cfg)?)?;
    let events = r.events();
    let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = BufWriter::new(file);
    write_event_log(&events, &mut w)?;
    w.flush()?;
    Ok(ReplaySummary {
        events: events.len(),
        decoder: r.decoder,
        metrics: r.metrics,
        final_state: r.final_state,
    })
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SynthOptions {
    pub noise_std: f64,
    pub seed: u64,
    /// Add the stationary bias phase in front and a closing pause behind.
    pub lead_in: bool,
}

/// Encodes a trajectory as a frame file. Returns the number of bytes written.
pub fn synth_frames(
    traj_path: &Path,
    out: &Path,
    cfg: &PortalConfig,
    opts: SynthOptions,
) -> Result<usize> {
    let mut traj = read_trajectory(traj_path)?;
    let rate = cfg.sensor.synth_rate_hz;
    if opts.lead_in {
        traj = padded(&traj, rate, &cfg.calibration()?)?;
    }
    let compass = synthesize_compass(&traj, rate)?;
    let mut accel = synthesize_accel(&traj, rate, cfg.world.frame)?;
    add_accel_noise(&mut accel, opts.noise_std, opts.seed)?;
    let bytes = encode_streams(&compass, &accel, (0, 0))?;
    std::fs::write(out, &bytes).with_context(|| format!("writing {}", out.display()))?;
    Ok(bytes.len())
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SimulateOptions {
    pub noise_std: f64,
    pub seed: u64,
    pub via_wire: bool,
}

/// Runs a ground-truth trajectory through synthesis, the pipeline and the
/// avatar, and writes the fidelity report as JSON.
pub fn simulate(
    traj_path: &Path,
    report: &Path,
    cfg: &PortalConfig,
    opts: SimulateOptions,
) -> Result<FidelityReport> {
    let truth = read_trajectory(traj_path)?;
    let world = cfg.world();
    let rt = RoundTripConfig {
        calibration: cfg.calibration()?,
        sensitivity: world.sensitivity,
        bindings: world.bindings,
        room: world.room,
        frame: world.frame,
        rate_hz: cfg.sensor.synth_rate_hz,
        accel_noise_std: opts.noise_std,
        seed: opts.seed,
        via_wire: opts.via_wire,
    };
    let outcome = run_round_trip(&truth, &rt)?;
    let json = serde_json::to_string_pretty(&outcome.report)?;
    std::fs::write(report, json + "\n").with_context(|| format!("writing {}", report.display()))?;
    Ok(outcome.report)
}

pub fn bench(samples: usize, cfg: &PortalConfig) -> Result<BenchReport> {
    Ok(measure_latency(samples, PipelineConfig::from_portal(cfg)?)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct CalibrationReport {
    pub samples: usize,
    pub bias_x: f64,
    pub bias_y: f64,
    /// Standard deviation of the bias-corrected samples, both axes pooled.
    pub noise_std: f64,
    /// Largest bias-corrected magnitude seen while still.
    pub max_residual: f64,
    /// A still-detection threshold with some headroom above the noise.
    pub suggested_zupt_threshold: f64,
    /// Mean heading over the same period.
    pub heading_deg: Option<f64>,
}

/// Reads a stationary stretch of the source and estimates the accelerometer
/// bias and noise floor. Stops after `samples` accelerometer samples.
pub fn calibrate(source: &mut impl Read, samples: usize) -> Result<CalibrationReport> {
    if samples == 0 {
        bail!("need at least one sample");
    }
    let mut decoder = FrameDecoder::new();
    let mut accel = Vec::with_capacity(samples);
    let (mut sin, mut cos, mut headings) = (0.0, 0.0, 0usize);
    let mut buf = [0u8; 4096];
    'read: loop {
        let n = source.read(&mut buf)?;
        if n == 0 {
            decoder.finish();
        }
        decoder.push(&buf[..n]);
        while let Some(item) = decoder.next_item() {
            let Decoded::Frame(frame) = item else { continue };
            match frame.payload {
                SensorPayload::Accel(a) => {
                    accel.push(a);
                    if accel.len() == samples {
                        break 'read;
                    }
                }
                SensorPayload::Compass(c) => {
                    let (s, co) = c.heading_deg.to_radians().sin_cos();
                    sin += s;
                    cos += co;
                    headings += 1;
                }
            }
        }
        if n == 0 {
            break;
        }
    }
    if accel.len() < samples {
        bail!("source ended after {} of {samples} accelerometer samples", accel.len());
    }
    let bias = estimate_bias(&accel, samples)?;
    let residuals: Vec<(f64, f64)> = accel.iter().map(|a| (a.ax - bias.bx, a.ay - bias.by)).collect();
    let var = residuals.iter().map(|(x, y)| x * x + y * y).sum::<f64>() / (2 * samples) as f64;
    let max_residual = residuals.iter().map(|(x, y)| x.hypot(*y)).fold(0.0, f64::max);
    Ok(CalibrationReport {
        samples,
        bias_x: bias.bx,
        bias_y: bias.by,
        noise_std: var.sqrt(),
        max_residual,
        suggested_zupt_threshold: 1.5 * max_residual,
        heading_deg: (headings > 0).then(|| sin.atan2(cos).to_degrees().rem_euclid(360.0)),
    })
}
