//! WebSocket front end for a live pipeline.
//!
//! One runner task owns the [`Pipeline`] and every client's
//! [`BridgeSession`]. Connections only shuttle text frames to and from it,
//! so all bus access stays single-threaded. Virtual time advances one
//! camera tick per wall-clock tick.

use std::collections::HashMap;
use std::io::Write;
use std::net::SocketAddr;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use log::{debug, info, warn};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;
use tokio::time::MissedTickBehavior;
use tokio_tungstenite::tungstenite::Message as WsMessage;

use mirrorbus_core::bus::bridge::BridgeSession;
use mirrorbus_core::harness::{Pipeline, RunInfo};
use mirrorbus_core::mimicry::MimicryMode;
use mirrorbus_core::{BusError, Config};

#[derive(Debug, thiserror::Error)]
pub enum BridgeError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("cannot listen on port {port}: {source}")]
    Bind {
        port: u16,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error("log write failed: {0}")]
    Log(#[source] std::io::Error),
    #[error("runner task ended unexpectedly")]
    RunnerGone,
}

pub struct BridgeOptions {
    pub port: u16,
    pub config: Config,
    pub mode: MimicryMode,
    pub seed: u64,
    /// Receives every envelope as a JSON line, in log order per tick.
    pub log: Option<Box<dyn Write + Send>>,
}

impl BridgeOptions {
    pub fn new(port: u16, config: Config) -> Self {
        let mode = config.mimicry.initial_mode;
        Self {
            port,
            config,
            mode,
            seed: 0,
            log: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ServeSummary {
    pub ticks: u64,
    pub connections: u64,
}

type ClientId = u64;

enum Event {
    Connected(ClientId, mpsc::UnboundedSender<String>),
    Frame(ClientId, String),
    Closed(ClientId),
}

struct Client {
    session: BridgeSession,
    out: mpsc::UnboundedSender<String>,
}

/// A running server. Dropping it without [`BridgeServer::shutdown`] leaves
/// the tasks running until the runtime stops.
pub struct BridgeServer {
    addr: SocketAddr,
    stop: oneshot::Sender<()>,
    runner: JoinHandle<Result<ServeSummary, BridgeError>>,
    acceptor: JoinHandle<()>,
}

impl BridgeServer {
    pub async fn start(options: BridgeOptions) -> Result<Self, BridgeError> {
        let listener = TcpListener::bind(("127.0.0.1", options.port))
            .await
            .map_err(|source| match source.kind() {
                std::io::ErrorKind::AddrInUse => BridgeError::PortInUse(options.port),
                _ => BridgeError::Bind {
                    port: options.port,
                    source,
                },
            })?;
        let addr = listener.local_addr().map_err(|source| BridgeError::Bind {
            port: options.port,
            source,
        })?;

        let info = RunInfo {
            experiment: "live".to_owned(),
            condition: options.mode.label(),
            mode: options.mode,
            seed: options.seed,
            config: options.config.clone(),
        };
        let pipeline = Pipeline::new(&options.config, info, None)?;
        let latency = options.config.actuation.latency.delay;
        let period = Duration::from_secs_f64(1.0 / options.config.perception.camera.rate);

        let (events_tx, events_rx) = mpsc::unbounded_channel();
        let (stop, stop_rx) = oneshot::channel();
        let runner = tokio::spawn(run_loop(pipeline, latency, period, events_rx, stop_rx, options.log));
        let acceptor = tokio::spawn(accept_loop(listener, events_tx));
        info!("bridge listening on ws://{addr}");
        Ok(Self {
            addr,
            stop,
            runner,
            acceptor,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub async fn shutdown(self) -> Result<ServeSummary, BridgeError> {
        self.acceptor.abort();
        let _ = self.stop.send(());
        self.runner.await.map_err(|_| BridgeError::RunnerGone)?
    }
}

async fn accept_loop(listener: TcpListener, events: mpsc::UnboundedSender<Event>) {
    let mut next_id: ClientId = 0;
    loop {
        let (stream, peer) = match listener.accept().await {
            Ok(pair) => pair,
            Err(e) => {
                warn!("accept failed: {e}");
                continue;
            }
        };
        next_id += 1;
        tokio::spawn(connection(next_id, stream, peer, events.clone()));
    }
}

async fn connection(id: ClientId, stream: TcpStream, peer: SocketAddr, events: mpsc::UnboundedSender<Event>) {
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(e) => {
            debug!("handshake with {peer} failed: {e}");
            return;
        }
    };
    info!("client {id} connected from {peer}");
    let (mut sink, mut stream) = ws.split();
    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<String>();
    if events.send(Event::Connected(id, out_tx)).is_err() {
        return;
    }

    let writer = tokio::spawn(async move {
        while let Some(text) = out_rx.recv().await {
            if sink.send(WsMessage::text(text)).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });

    while let Some(msg) = stream.next().await {
        match msg {
            Ok(WsMessage::Text(text)) => {
                if events.send(Event::Frame(id, text.to_string())).is_err() {
                    break;
                }
            }
            Ok(WsMessage::Binary(_)) => {
                // only text frames carry protocol messages
                let _ = events.send(Event::Frame(id, String::new()));
            }
            Ok(WsMessage::Close(_)) | Err(_) => break,
            Ok(_) => {}
        }
    }
    let _ = events.send(Event::Closed(id));
    writer.abort();
    info!("client {id} disconnected");
}

async fn run_loop(
    mut pipeline: Pipeline,
    latency: f64,
    period: Duration,
    mut events: mpsc::UnboundedReceiver<Event>,
    mut stop: oneshot::Receiver<()>,
    mut log: Option<Box<dyn Write + Send>>,
) -> Result<ServeSummary, BridgeError> {
    let mut clients: HashMap<ClientId, Client> = HashMap::new();
    let mut summary = ServeSummary::default();
    let mut ticker = tokio::time::interval(period);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);

    loop {
        tokio::select! {
            _ = &mut stop => break,
            Some(event) = events.recv() => match event {
                Event::Connected(id, out) => {
                    summary.connections += 1;
                    clients.insert(id, Client { session: BridgeSession::new(latency), out });
                }
                Event::Frame(id, text) => {
                    if let Some(client) = clients.get_mut(&id) {
                        if let Some(reply) = client.session.handle(pipeline.bus_mut(), &text) {
                            let _ = client.out.send(reply.to_json());
                        }
                    }
                }
                Event::Closed(id) => {
                    clients.remove(&id);
                }
            },
            _ = ticker.tick() => {
                pipeline.step()?;
                summary.ticks += 1;
                for client in clients.values_mut() {
                    for frame in client.session.poll() {
                        let _ = client.out.send(frame.to_json());
                    }
                }
                let entries = pipeline.take_log();
                if let Some(w) = log.as_mut() {
                    for env in &entries {
                        writeln!(w, "{}", env.to_json_line()).map_err(BridgeError::Log)?;
                    }
                }
            }
        }
    }
    if let Some(w) = log.as_mut() {
        w.flush().map_err(BridgeError::Log)?;
    }
    Ok(summary)
}
