use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use merp::commands::{self, SimulateOptions, SynthOptions};
use merp::server::{ServeOptions, Server, Source};
use merp_core::config::PortalConfig;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "merp", version, about = "Body-motion sensors to mouse/keyboard events and a simulated avatar")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SourceKind {
    /// A serial device or pipe, read as it produces bytes
    Dev,
    /// A recorded frame file
    File,
    /// No source, injected motion only
    None,
}

#[derive(Subcommand)]
enum Command {
    /// Run the WebSocket service
    Serve {
        #[arg(long, value_enum, default_value = "none")]
        source: SourceKind,
        /// Device or file path for the source
        #[arg(long, required_if_eq_any([("source", "dev"), ("source", "file")]))]
        path: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides service.listen from the config
        #[arg(long)]
        listen: Option<String>,
        /// Feed recorded and injected frames as fast as possible instead of
        /// at the pace of their timestamps
        #[arg(long)]
        fast: bool,
        /// Start the source only once an observer has subscribed
        #[arg(long)]
        wait_for_subscriber: bool,
        #[arg(long, default_value_t = 1000)]
        metrics_ms: u64,
    },
    /// Replay a frame file and write the resulting event log
    Replay {
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a ground-truth trajectory through the whole chain and report fidelity
    Simulate {
        trajectory: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Gaussian accelerometer noise, m/s²
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Encode and decode the frames on the way
        #[arg(long)]
        wire: bool,
    },
    /// Encode a trajectory as a frame file
    Synth {
        trajectory: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Don't add the stationary bias phase and closing pause
        #[arg(long)]
        raw: bool,
    },
    /// Measure in-process latency on a synthetic stream
    Bench {
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Estimate accelerometer bias and noise while standing still
    Calibrate {
        /// Device or frame file
        #[arg(long)]
        source: PathBuf,
        /// Accelerometer samples to average; defaults to integration.bias_window
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Don't wait for Enter before reading
        #[arg(long)]
        yes: bool,
    },
}

fn load_config(path: Option<&Path>) -> Result<PortalConfig> {
    match path {
        Some(p) => PortalConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(PortalConfig::default()),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Serve {
            source,
            path,
            config,
            listen,
            fast,
            wait_for_subscriber,
            metrics_ms,
        } => {
            let config = load_config(config.as_deref())?;
            let listen = listen.unwrap_or_else(|| config.service.listen.clone());
            let source = match (source, path) {
                (SourceKind::Dev, Some(p)) => Source::Device(p),
                (SourceKind::File, Some(p)) => Source::File(p),
                _ => Source::None,
            };
            let opts = ServeOptions {
                realtime: !fast,
                wait_for_subscriber,
                metrics_interval: Duration::from_millis(metrics_ms.max(1)),
                ..ServeOptions::new(config, source)
            };
            let mut server = Server::start(opts, &listen).await?;
            eprintln!("listening on ws://{}", server.local_addr());
            tokio::select! {
                r = tokio::signal::ctrl_c() => r?,
                _ = server.wait() => anyhow::bail!("service stopped"),
            }
        }
        Command::Replay { frames, out, config } => {
            let config = load_config(config.as_deref())?;
            print_json(&commands::replay_file(&frames, &out, &config)?)?;
        }
        Command::Simulate {
            trajectory,
            report,
            config,
            noise,
            seed,
            wire,
        } => {
            let config = load_config(config.as_deref())?;
            let opts = SimulateOptions {
                noise_std: noise,
                seed,
                via_wire: wire,
            };
            print_json(&commands::simulate(&trajectory, &report, &config, opts)?)?;
        }
        Command::Synth {
            trajectory,
            out,
            config,
            noise,
            seed,
            raw,
        } => {
            let config = load_config(config.as_deref())?;
            let opts = SynthOptions {
                noise_std: noise,
                seed,
                lead_in: !raw,
            };
            let n = commands::synth_frames(&trajectory, &out, &config, opts)?;
            eprintln!("wrote {n} bytes to {}", out.display());
        }
        Command::Bench {
            samples,
            config,
            json,
        } => {
            let config = load_config(config.as_deref())?;
            let r = commands::bench(samples, &config)?;
            if json {
                print_json(&r)?;
            } else {
                let e2e = &r.metrics.end_to_end;
                println!("samples      {}", r.samples);
                println!("throughput   {:.0} samples/s", r.samples_per_s);
                println!("events       {}", r.metrics.events_emitted);
                println!("latency p50  {:.1} µs", e2e.p50_us);
                println!("latency p99  {:.1} µs", e2e.p99_us);
                println!("latency max  {:.1} µs", e2e.max_us);
            }
        }
        Command::Calibrate {
            source,
            samples,
            config,
            yes,
        } => {
            let config = load_config(config.as_deref())?;
            let samples = samples.unwrap_or(config.integration.bias_window.max(1));
            if !yes && std::io::stdin().is_terminal() {
                eprint!("Stand still with the sensors attached, then press Enter. ");
                std::io::stderr().flush()?;
                std::io::stdin().read_line(&mut String::new())?;
            }
            eprintln!("reading {samples} samples from {}", source.display());
            let mut input = std::fs::File::open(&source)
                .with_context(|| format!("opening {}", source.display()))?;
            let r = commands::calibrate(&mut input, samples)?;
            print_json(&r)?;
            eprintln!(
                "suggested config:\n[integration]\nzupt_threshold = {:.4}",
                r.suggested_zupt_threshold
            );
        }
    }
    Ok(())
}
