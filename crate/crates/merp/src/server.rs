//! WebSocket portal service.
//!
//! Three kinds of task talk over ordered channels:
//!
//! * ingestion: reads the source (file, device or in-memory bytes) and the
//!   injected motion, decodes frames and forwards them;
//! * the pipeline task, the only owner of [`Pipeline`];
//! * one task per connection, which forwards control messages to the
//!   pipeline task and writes replies and broadcasts back out.
//!
//! Avatar state and metrics travel through `watch` channels, so a slow
//! observer only ever sees the latest value. HID events go through one
//! unbounded queue per subscriber and are never dropped.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{Context, Result};
use futures_util::{SinkExt, StreamExt};
use merp_core::config::PortalConfig;
use merp_core::control::{parse_control, ControlHandler, ControlMessage, ServerMessage};
use merp_core::pipeline::{Output, Pipeline, PipelineConfig};
use merp_core::sensor::{Decoded, FrameDecoder};
use merp_core::Timestamp;
use tokio::io::AsyncReadExt;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot, watch};
use tokio::task::JoinSet;
use tokio::time::Instant;
use tokio_tungstenite::tungstenite::Message;
use tracing::{debug, info, warn};

#[derive(Clone, Debug)]
pub enum Source {
    /// Only injected motion.
    None,
    /// Recorded frame file.
    File(PathBuf),
    /// Serial device or pipe, read until it closes.
    Device(PathBuf),
    Bytes(Vec<u8>),
}

#[derive(Clone, Debug)]
pub struct ServeOptions {
    pub config: PortalConfig,
    pub source: Source,
    /// Play recorded and injected frames at the pace of their timestamps.
    /// Off, they are fed as fast as the pipeline takes them.
    pub realtime: bool,
    /// Hold the source back until the first observer subscribes.
    pub wait_for_subscriber: bool,
    pub metrics_interval: Duration,
}

impl ServeOptions {
    pub fn new(config: PortalConfig, source: Source) -> Self {
        ServeOptions {
            config,
            source,
            realtime: true,
            wait_for_subscriber: false,
            metrics_interval: Duration::from_secs(1),
        }
    }
}

struct Ingested {
    item: Decoded,
    at: std::time::Instant,
    parse: Duration,
}

enum Feed {
    Item(Ingested),
    SourceClosed,
}

struct Request {
    msg: ControlMessage,
    reply: oneshot::Sender<Reply>,
}

struct Reply {
    message: ServerMessage,
    events: Option<mpsc::UnboundedReceiver<ServerMessage>>,
}

/// A running service. Dropping it stops every task.
pub struct Server {
    addr: SocketAddr,
    tasks: JoinSet<()>,
}

impl Server {
    pub async fn start(opts: ServeOptions, listen: &str) -> Result<Server> {
        let listener = TcpListener::bind(listen)
            .await
            .with_context(|| format!("binding {listen}"))?;
        let addr = listener.local_addr()?;
        let pipeline = Pipeline::new(PipelineConfig::from_portal(&opts.config)?)?;
        let token = opts.config.service.token.clone();

        let (feed_tx, feed_rx) = mpsc::channel(1024);
        let (inject_tx, inject_rx) = mpsc::unbounded_channel();
        let (req_tx, req_rx) = mpsc::channel(64);
        let (state_tx, state_rx) = watch::channel(None);
        let (metrics_tx, metrics_rx) = watch::channel(None);
        let (observed_tx, observed_rx) = watch::channel(false);

        let core = Core {
            pipeline,
            handler: ControlHandler::new(token.clone()),
            subscribers: Vec::new(),
            state_tx,
            metrics_tx,
            observed_tx,
            inject_tx,
        };
        let mut tasks = JoinSet::new();
        tasks.spawn(core.run(feed_rx, req_rx, opts.metrics_interval));
        tasks.spawn(inject_task(inject_rx, feed_tx.clone(), opts.realtime));
        let wait = opts.wait_for_subscriber.then_some(observed_rx);
        tasks.spawn(async move {
            if let Err(e) = source_task(opts.source, feed_tx, opts.realtime, wait).await {
                warn!("source failed: {e:#}");
            }
        });
        let shared = Shared {
            token,
            requests: req_tx,
            state: state_rx,
            metrics: metrics_rx,
        };
        tasks.spawn(accept_loop(listener, shared));
        info!(%addr, "listening");
        Ok(Server { addr, tasks })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Waits until one of the service tasks ends, which only happens on a
    /// fatal error.
    pub async fn wait(&mut self) {
        self.tasks.join_next().await;
    }
}

struct Core {
    pipeline: Pipeline,
    handler: ControlHandler,
    subscribers: Vec<mpsc::UnboundedSender<ServerMessage>>,
    state_tx: watch::Sender<Option<ServerMessage>>,
    metrics_tx: watch::Sender<Option<ServerMessage>>,
    observed_tx: watch::Sender<bool>,
    inject_tx: mpsc::UnboundedSender<Vec<u8>>,
}

impl Core {
    async fn run(
        mut self,
        mut feed: mpsc::Receiver<Feed>,
        mut requests: mpsc::Receiver<Request>,
        metrics_every: Duration,
    ) {
        let mut tick = tokio::time::interval(metrics_every);
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        self.state_tx
            .send_replace(Some(ServerMessage::state(&self.pipeline.avatar())));
        loop {
            tokio::select! {
                Some(req) = requests.recv() => self.control(req),
                Some(f) = feed.recv() => match f {
                    Feed::Item(i) => {
                        self.pipeline.record_parse(i.parse);
                        let out = self.pipeline.ingest(i.item, i.at);
                        self.broadcast(out);
                    }
                    Feed::SourceClosed => {
                        info!("source closed");
                        let out = self.pipeline.finish();
                        self.broadcast(out);
                        self.publish_metrics();
                    }
                },
                _ = tick.tick() => self.publish_metrics(),
                else => break,
            }
        }
    }

    fn control(&mut self, req: Request) {
        let outcome = self.handler.handle(&mut self.pipeline, &req.msg);
        self.broadcast(outcome.outputs);
        if let Some(bytes) = outcome.inject {
            let _ = self.inject_tx.send(bytes);
        }
        if matches!(req.msg, ControlMessage::SetCalibration { .. } | ControlMessage::Reset) {
            self.publish_metrics();
        }
        let events = outcome.subscribe.then(|| {
            let (tx, rx) = mpsc::unbounded_channel();
            self.subscribers.push(tx);
            self.observed_tx.send_replace(true);
            rx
        });
        let message = outcome
            .reply
            .unwrap_or_else(|| ServerMessage::ack(req.msg.kind()));
        let _ = req.reply.send(Reply { message, events });
    }

    fn broadcast(&mut self, outputs: Vec<Output>) {
        for out in outputs {
            match out {
                Output::Snapshot(s) => {
                    self.state_tx.send_replace(Some(ServerMessage::state(&s)));
                }
                Output::Event(e) => {
                    let msg = ServerMessage::Event(e);
                    self.subscribers.retain(|tx| tx.send(msg.clone()).is_ok());
                }
            }
        }
    }

    fn publish_metrics(&mut self) {
        self.metrics_tx
            .send_replace(Some(ServerMessage::metrics(&self.pipeline)));
    }
}

/// Sleeps until a frame's time, measured from the first frame seen.
#[derive(Default)]
struct Pacer {
    origin: Option<(Timestamp, Instant)>,
}

impl Pacer {
    async fn wait(&mut self, item: &Decoded) {
        let Decoded::Frame(frame) = item else { return };
        let ts = frame.timestamp();
        let (t0, i0) = *self.origin.get_or_insert((ts, Instant::now()));
        let ahead = ts.as_micros().saturating_sub(t0.as_micros());
        tokio::time::sleep_until(i0 + Duration::from_micros(ahead)).await;
    }
}

/// Decodes what is buffered and forwards it. Returns false once the
/// pipeline task is gone.
async fn forward(
    decoder: &mut FrameDecoder,
    feed: &mpsc::Sender<Feed>,
    pacer: Option<&mut Pacer>,
) -> bool {
    let mut pacer = pacer;
    loop {
        let started = std::time::Instant::now();
        let Some(item) = decoder.next_item() else {
            return true;
        };
        let parse = started.elapsed();
        if let Some(p) = pacer.as_deref_mut() {
            p.wait(&item).await;
        }
        let at = std::time::Instant::now();
        if feed.send(Feed::Item(Ingested { item, at, parse })).await.is_err() {
            return false;
        }
    }
}

async fn source_task(
    source: Source,
    feed: mpsc::Sender<Feed>,
    realtime: bool,
    wait: Option<watch::Receiver<bool>>,
) -> Result<()> {
    if let Some(mut rx) = wait {
        if matches!(source, Source::None) {
            return Ok(());
        }
        rx.wait_for(|seen| *seen).await?;
    }
    let mut decoder = FrameDecoder::new();
    let mut pacer = Pacer::default();
    let bytes = match source {
        Source::None => return Ok(()),
        Source::Bytes(b) => b,
        Source::File(path) => tokio::fs::read(&path)
            .await
            .with_context(|| format!("reading {}", path.display()))?,
        Source::Device(path) => {
            let mut dev = tokio::fs::File::open(&path)
                .await
                .with_context(|| format!("opening {}", path.display()))?;
            info!(path = %path.display(), "reading device");
            let mut buf = vec![0u8; 4096];
            loop {
                let n = dev.read(&mut buf).await?;
                if n == 0 {
                    break;
                }
                decoder.push(&buf[..n]);
                // a live device is already paced by the wall clock
                if !forward(&mut decoder, &feed, None).await {
                    return Ok(());
                }
            }
            Vec::new()
        }
    };
    decoder.push(&bytes);
    decoder.finish();
    let pacer = realtime.then_some(&mut pacer);
    if forward(&mut decoder, &feed, pacer).await {
        let stats = decoder.stats();
        debug!(?stats, "source drained");
        let _ = feed.send(Feed::SourceClosed).await;
    }
    Ok(())
}

/// Injected motion has its own sequence numbers, so it gets its own decoder.
async fn inject_task(
    mut chunks: mpsc::UnboundedReceiver<Vec<u8>>,
    feed: mpsc::Sender<Feed>,
    realtime: bool,
) {
    let mut decoder = FrameDecoder::new();
    while let Some(bytes) = chunks.recv().await {
        decoder.push(&bytes);
        let mut pacer = Pacer::default();
        if !forward(&mut decoder, &feed, realtime.then_some(&mut pacer)).await {
            return;
        }
    }
}

#[derive(Clone)]
struct Shared {
    token: String,
    requests: mpsc::Sender<Request>,
    state: watch::Receiver<Option<ServerMessage>>,
    metrics: watch::Receiver<Option<ServerMessage>>,
}

async fn accept_loop(listener: TcpListener, shared: Shared) {
    let mut conns = JoinSet::new();
    loop {
        while conns.try_join_next().is_some() {}
        let (stream, peer) = match listener.accept().await {
            Ok(c) => c,
            Err(e) => {
                warn!("accept failed: {e}");
                continue;
            }
        };
        let shared = shared.clone();
        conns.spawn(async move {
            match connection(stream, shared).await {
                Ok(()) => debug!(%peer, "connection closed"),
                Err(e) => debug!(%peer, "connection ended: {e:#}"),
            }
        });
    }
}

async fn next_event(rx: &mut Option<mpsc::UnboundedReceiver<ServerMessage>>) -> Option<ServerMessage> {
    match rx {
        Some(rx) => rx.recv().await,
        None => std::future::pending().await,
    }
}

async fn connection(stream: TcpStream, shared: Shared) -> Result<()> {
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut sink, mut incoming) = ws.split();
    let gate = ControlHandler::new(shared.token.clone());
    let mut authed = false;
    let mut events = None;
    let mut state = shared.state.clone();
    let mut metrics = shared.metrics.clone();
    let text = |m: &ServerMessage| Message::text(m.to_line());

    loop {
        tokio::select! {
            msg = incoming.next() => {
                let msg = match msg {
                    Some(m) => m?,
                    None => return Ok(()),
                };
                let body = match &msg {
                    Message::Text(_) => msg.to_text()?.to_owned(),
                    Message::Close(_) => return Ok(()),
                    Message::Binary(_) => {
                        sink.send(text(&ServerMessage::error("expected text messages"))).await?;
                        continue;
                    }
                    _ => continue,
                };
                for line in body.lines().filter(|l| !l.trim().is_empty()) {
                    let parsed = parse_control(line);
                    if !authed {
                        match parsed.and_then(|m| gate.check_auth(&m)) {
                            Ok(()) => {
                                authed = true;
                                sink.send(text(&ServerMessage::ack("auth"))).await?;
                                continue;
                            }
                            Err(e) => {
                                sink.send(text(&ServerMessage::error(e))).await?;
                                sink.close().await?;
                                return Ok(());
                            }
                        }
                    }
                    let reply = match parsed {
                        Err(e) => ServerMessage::error(e),
                        Ok(msg) => {
                            let (tx, rx) = oneshot::channel();
                            shared.requests.send(Request { msg, reply: tx }).await?;
                            let reply = rx.await?;
                            if let Some(rx) = reply.events {
                                events = Some(rx);
                                state.mark_changed();
                                metrics.mark_changed();
                            }
                            reply.message
                        }
                    };
                    sink.send(text(&reply)).await?;
                }
            }
            Some(ev) = next_event(&mut events) => {
                sink.send(text(&ev)).await?;
            }
            Ok(()) = state.changed(), if events.is_some() => {
                let msg = state.borrow_and_update().clone();
                if let Some(m) = msg {
                    sink.send(text(&m)).await?;
                }
            }
            Ok(()) = metrics.changed(), if events.is_some() => {
                let msg = metrics.borrow_and_update().clone();
                if let Some(m) = msg {
                    sink.send(text(&m)).await?;
                }
            }
        }
    }
}
