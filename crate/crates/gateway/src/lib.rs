//! WebSocket gateway for operator consoles.
//!
//! One TCP port serves the console's static files and upgrades `/ws` to a
//! WebSocket. Outbound events are fanned out to every connected console by
//! a single dispatcher task; inbound gestures and frames are handed to the
//! host through a plain channel.

pub mod message;
pub mod registry;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{mpsc as std_mpsc, Arc};
use std::time::Duration;

use axum::extract::ws::{Message, Utf8Bytes, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::runtime::Runtime;
use tokio::sync::{mpsc, oneshot};
use tower_http::services::ServeDir;

pub use message::{parse_inbound, GatewayMessage, Inbound, InboundError};
pub use registry::{ClientId, Registry, DEFAULT_BACKLOG};

pub const DEFAULT_PORT: u16 = 9104;

const PLACEHOLDER: &str = "<!doctype html>\n<title>gesturebot</title>\n<p>Console assets are not installed. \
The event stream is at <code>/ws</code>.</p>\n";

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub addr: SocketAddr,
    /// Directory of console assets served at `/`.
    pub static_dir: Option<PathBuf>,
    pub backlog: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self { addr: SocketAddr::from(([127, 0, 0, 1], DEFAULT_PORT)), static_dir: None, backlog: DEFAULT_BACKLOG }
    }
}

/// Counters readable from any thread.
#[derive(Debug, Default)]
pub struct Diagnostics {
    malformed: AtomicU64,
    slow_disconnects: AtomicU64,
    clients: AtomicUsize,
}

impl Diagnostics {
    /// Inbound messages dropped because they could not be used.
    pub fn malformed(&self) -> u64 {
        self.malformed.load(Ordering::SeqCst)
    }

    /// Consoles dropped for exceeding their backlog.
    pub fn slow_disconnects(&self) -> u64 {
        self.slow_disconnects.load(Ordering::SeqCst)
    }

    pub fn clients(&self) -> usize {
        self.clients.load(Ordering::SeqCst)
    }
}

enum Dispatch {
    Register(ClientId, oneshot::Sender<mpsc::Receiver<Utf8Bytes>>),
    Unregister(ClientId),
    Publish(Utf8Bytes),
}

#[derive(Clone)]
struct Shared {
    dispatch: mpsc::UnboundedSender<Dispatch>,
    inbound: std_mpsc::Sender<Inbound>,
    diag: Arc<Diagnostics>,
    next_id: Arc<AtomicU64>,
}

/// Handle to a running gateway. Dropping it stops the server.
pub struct Gateway {
    runtime: Option<Runtime>,
    local_addr: SocketAddr,
    dispatch: mpsc::UnboundedSender<Dispatch>,
    inbound: std_mpsc::Receiver<Inbound>,
    diag: Arc<Diagnostics>,
    stop: Option<oneshot::Sender<()>>,
}

impl Gateway {
    pub fn start(cfg: GatewayConfig) -> std::io::Result<Self> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .thread_name("gateway")
            .enable_all()
            .build()?;
        let listener = runtime.block_on(tokio::net::TcpListener::bind(cfg.addr))?;
        let local_addr = listener.local_addr()?;
        let (dispatch, dispatch_rx) = mpsc::unbounded_channel();
        let (inbound_tx, inbound) = std_mpsc::channel();
        let diag = Arc::new(Diagnostics::default());
        runtime.spawn(dispatcher(Registry::new(cfg.backlog), dispatch_rx, diag.clone()));

        let shared = Shared {
            dispatch: dispatch.clone(),
            inbound: inbound_tx,
            diag: diag.clone(),
            next_id: Arc::new(AtomicU64::new(0)),
        };
        let app = Router::new().route("/ws", get(upgrade));
        let app = match &cfg.static_dir {
            Some(dir) => app.fallback_service(ServeDir::new(dir)),
            None => app.route("/", get(|| async { Html(PLACEHOLDER) })),
        };
        let app = app.with_state(shared);
        let (stop, stopped) = oneshot::channel::<()>();
        runtime.spawn(async move {
            let served = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = stopped.await;
                })
                .await;
            if let Err(e) = served {
                log::error!("gateway stopped: {e}");
            }
        });
        log::info!("gateway listening on {local_addr}");
        Ok(Self { runtime: Some(runtime), local_addr, dispatch, inbound, diag, stop: Some(stop) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// Sends `msg` to every connected console. With no consoles this does
    /// nothing.
    pub fn publish(&self, msg: &GatewayMessage) {
        let _ = self.dispatch.send(Dispatch::Publish(msg.to_json().into()));
    }

    pub fn try_recv(&self) -> Option<Inbound> {
        self.inbound.try_recv().ok()
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<Inbound> {
        self.inbound.recv_timeout(timeout).ok()
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diag
    }
}

impl Drop for Gateway {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(rt) = self.runtime.take() {
            rt.shutdown_timeout(Duration::from_millis(200));
        }
    }
}

async fn dispatcher(mut registry: Registry, mut rx: mpsc::UnboundedReceiver<Dispatch>, diag: Arc<Diagnostics>) {
    while let Some(cmd) = rx.recv().await {
        match cmd {
            Dispatch::Register(id, reply) => {
                let _ = reply.send(registry.register(id));
            }
            Dispatch::Unregister(id) => {
                registry.remove(id);
            }
            Dispatch::Publish(text) => {
                let dropped = registry.broadcast(&text);
                if !dropped.is_empty() {
                    log::warn!("dropping slow consoles {dropped:?}");
                    diag.slow_disconnects.fetch_add(dropped.len() as u64, Ordering::SeqCst);
                }
            }
        }
        diag.clients.store(registry.len(), Ordering::SeqCst);
    }
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Shared>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| session(socket, shared))
}

async fn session(socket: WebSocket, shared: Shared) {
    let id = shared.next_id.fetch_add(1, Ordering::SeqCst);
    let (reply, queue) = oneshot::channel();
    if shared.dispatch.send(Dispatch::Register(id, reply)).is_err() {
        return;
    }
    let Ok(mut queue) = queue.await else {
        return;
    };
    let (mut sink, mut stream) = socket.split();
    let mut writer = tokio::spawn(async move {
        while let Some(text) = queue.recv().await {
            if sink.send(Message::Text(text)).await.is_err() {
                return;
            }
        }
        // the registry dropped us
        let _ = sink.send(Message::Close(None)).await;
    });
    loop {
        tokio::select! {
            _ = &mut writer => break,
            next = stream.next() => match next {
                Some(Ok(Message::Text(text))) => match parse_inbound(text.as_str()) {
                    Ok(msg) => {
                        let _ = shared.inbound.send(msg);
                    }
                    Err(e) => {
                        log::debug!("console {id}: {e}");
                        shared.diag.malformed.fetch_add(1, Ordering::SeqCst);
                    }
                },
                Some(Ok(Message::Binary(_))) => {
                    shared.diag.malformed.fetch_add(1, Ordering::SeqCst);
                }
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => {}
            },
        }
    }
    writer.abort();
    let _ = shared.dispatch.send(Dispatch::Unregister(id));
}
