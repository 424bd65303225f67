//! In-process latency and throughput measurement.
//!
//! A synthetic walk around a circle is encoded to frames and pushed through
//! decoder and pipeline one frame at a time. Each frame is stamped when its
//! bytes are handed over, each event when it leaves the pipeline.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::metrics::MetricsSnapshot;
use crate::pipeline::{Pipeline, PipelineConfig, PipelineError};
use crate::sensor::{encode_frame_into, parse_frame, FrameDecoder, Parsed, SensorFrame};
use crate::synth::{synthesize_accel, synthesize_compass, TrajectoryBuilder};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub samples: u64,
    pub elapsed_s: f64,
    pub samples_per_s: f64,
    pub metrics: MetricsSnapshot,
}

/// `n` interleaved compass and accelerometer frames: still for the bias
/// phase, then walking a square.
pub fn synthetic_frames(n: usize, cfg: &PipelineConfig) -> Vec<Vec<u8>> {
    let rate = cfg.synth_rate_hz;
    let ticks = n.div_ceil(2) + 1;
    let lead = cfg.calibration.integration.bias_window as f64 / rate;
    let mut b = TrajectoryBuilder::new(rate, 0.0, 0.0, 0.0).hold(lead.max(1.0 / rate));
    let mut secs = lead;
    while secs * rate < ticks as f64 {
        b = b.walk(2.0, 0.0, 2.0, 2).turn(90.0, 0.5);
        secs += 2.5;
    }
    let traj = b.build();
    let compass = synthesize_compass(&traj, rate).expect("valid synthetic trajectory");
    let accel = synthesize_accel(&traj, rate, cfg.world.frame).expect("valid synthetic trajectory");

    let mut frames = Vec::with_capacity(n);
    for (k, (c, a)) in compass.into_iter().zip(accel).enumerate() {
        for frame in [SensorFrame::compass(k as u32, c), SensorFrame::accel(k as u32, a)] {
            if frames.len() == n {
                return frames;
            }
            let mut bytes = Vec::new();
            encode_frame_into(&frame, &mut bytes).expect("synthetic samples fit the wire");
            frames.push(bytes);
        }
    }
    frames
}

pub fn measure_latency(n_samples: usize, cfg: PipelineConfig) -> Result<BenchReport, PipelineError> {
    if n_samples == 0 {
        return Err(PipelineError::Idle);
    }
    let frames = synthetic_frames(n_samples, &cfg);
    debug_assert!(frames
        .iter()
        .all(|f| matches!(parse_frame(f), Ok(Parsed::Frame { .. }))));
    let mut pipeline = Pipeline::new(cfg)?;
    let mut decoder = FrameDecoder::new();

    let start = Instant::now();
    for bytes in &frames {
        let ingested = Instant::now();
        decoder.push(bytes);
        while let Some(item) = decoder.next_item() {
            pipeline.record_parse(ingested.elapsed());
            pipeline.ingest(item, ingested);
        }
    }
    pipeline.finish();
    let elapsed = start.elapsed().as_secs_f64();

    let metrics = pipeline.metrics_snapshot();
    Ok(BenchReport {
        samples: frames.len() as u64,
        elapsed_s: elapsed,
        samples_per_s: frames.len() as f64 / elapsed.max(f64::MIN_POSITIVE),
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_samples_is_an_error() {
        assert!(matches!(
            measure_latency(0, PipelineConfig::default()),
            Err(PipelineError::Idle)
        ));
    }

    #[test]
    fn counters_match_source() {
        let r = measure_latency(2001, PipelineConfig::default()).unwrap();
        assert_eq!(r.samples, 2001);
        assert_eq!(r.metrics.frames_received, 2001);
        assert_eq!(r.metrics.frames_lost, 0);
        assert_eq!(r.metrics.frame_errors, 0);
        assert!(r.metrics.mouse_events > 0 && r.metrics.key_events > 0);
        assert_eq!(r.metrics.end_to_end.count, r.metrics.events_emitted);
    }
}
