//! HTTP and websocket service.
//!
//! Each websocket client gets three tasks: a reader forwarding text frames
//! to the session, the session loop ticking every 10 ms, and a writer
//! draining the session's output queue. Sessions share only the read-only
//! model.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::{Json, Router};
use tokio::sync::{mpsc, Notify};
use tokio::time::MissedTickBehavior;
use tower_http::services::ServeDir;

use crate::protocol::{encode_audio, ServerMessage};
use crate::session::{ServiceModel, Session, TICK_MS};

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub audio_queue: usize,
    pub spectrum_queue: usize,
    pub static_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            audio_queue: 32,
            spectrum_queue: 256,
            static_dir: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outgoing {
    Text(String),
    Audio(Vec<u8>),
}

#[derive(Default)]
struct QueueInner {
    items: VecDeque<Outgoing>,
    text: usize,
    audio: usize,
}

/// Bounded per-session output queue. Audio past its bound drops the oldest
/// block; text past its bound makes the producer wait.
pub struct OutQueue {
    inner: Mutex<QueueInner>,
    ready: Notify,
    space: Notify,
    closed: AtomicBool,
    dropped_audio: AtomicU64,
    audio_cap: usize,
    text_cap: usize,
}

impl OutQueue {
    pub fn new(audio_cap: usize, text_cap: usize) -> Self {
        Self {
            inner: Mutex::default(),
            ready: Notify::new(),
            space: Notify::new(),
            closed: AtomicBool::new(false),
            dropped_audio: AtomicU64::new(0),
            audio_cap: audio_cap.max(1),
            text_cap: text_cap.max(1),
        }
    }

    pub fn push_audio(&self, frame: Vec<u8>) {
        let mut q = self.inner.lock().expect("queue lock");
        if q.audio >= self.audio_cap {
            if let Some(i) = q.items.iter().position(|o| matches!(o, Outgoing::Audio(_))) {
                q.items.remove(i);
                q.audio -= 1;
                self.dropped_audio.fetch_add(1, Ordering::Relaxed);
            }
        }
        q.items.push_back(Outgoing::Audio(frame));
        q.audio += 1;
        drop(q);
        self.ready.notify_one();
    }

    /// Waits while the queue already holds its bound of text messages.
    pub async fn push_text(&self, text: String) {
        loop {
            {
                let mut q = self.inner.lock().expect("queue lock");
                if q.text < self.text_cap || self.closed.load(Ordering::Acquire) {
                    q.items.push_back(Outgoing::Text(text));
                    q.text += 1;
                    drop(q);
                    self.ready.notify_one();
                    return;
                }
            }
            self.space.notified().await;
        }
    }

    /// Next item, or `None` once closed and drained.
    pub async fn pop(&self) -> Option<Outgoing> {
        loop {
            {
                let mut q = self.inner.lock().expect("queue lock");
                if let Some(item) = q.items.pop_front() {
                    match item {
                        Outgoing::Text(_) => q.text -= 1,
                        Outgoing::Audio(_) => q.audio -= 1,
                    }
                    drop(q);
                    self.space.notify_one();
                    return Some(item);
                }
                if self.closed.load(Ordering::Acquire) {
                    return None;
                }
            }
            self.ready.notified().await;
        }
    }

    pub fn close(&self) {
        self.closed.store(true, Ordering::Release);
        self.ready.notify_one();
        self.space.notify_one();
    }

    pub fn dropped_audio(&self) -> u64 {
        self.dropped_audio.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("queue lock").items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Drives one session until `incoming` closes: announces the materials,
/// applies client messages as they arrive and emits a spectrum and an audio
/// block every tick.
pub async fn run_session(mut session: Session, mut incoming: mpsc::Receiver<String>, out: Arc<OutQueue>) {
    out.push_text(session.materials_message().to_json()).await;
    let mut interval = tokio::time::interval(Duration::from_millis(TICK_MS));
    interval.set_missed_tick_behavior(MissedTickBehavior::Burst);
    loop {
        // Messages that arrived before a tick are applied before it.
        tokio::select! {
            biased;
            msg = incoming.recv() => match msg {
                Some(text) => {
                    if let Some(reply) = session.handle_text(&text) {
                        out.push_text(reply.to_json()).await;
                    }
                }
                None => break,
            },
            _ = interval.tick() => match session.tick() {
                Ok(t) => {
                    out.push_text(t.spectrum_message().to_json()).await;
                    out.push_audio(encode_audio(t.tick, &t.audio));
                }
                Err(e) => out.push_text(ServerMessage::error("synthesis", e.to_string()).to_json()).await,
            },
        }
    }
    out.close();
}

struct AppState {
    model: Arc<ServiceModel>,
    options: ServeOptions,
    sessions: AtomicU64,
}

pub fn router(model: Arc<ServiceModel>, options: ServeOptions) -> Router {
    let static_dir = options.static_dir.clone();
    let state = Arc::new(AppState {
        model,
        options,
        sessions: AtomicU64::new(0),
    });
    let app = Router::new()
        .route("/healthz", get(healthz))
        .route("/materials", get(materials))
        .route("/ws", get(ws_upgrade));
    let app = match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(index)),
    };
    app.with_state(state)
}

async fn healthz() -> impl IntoResponse {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn materials(State(state): State<Arc<AppState>>) -> impl IntoResponse {
    Json(ServerMessage::Materials {
        materials: state.model.materials().to_vec(),
    })
}

async fn index() -> Html<&'static str> {
    Html(include_str!("index.html"))
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(state): State<Arc<AppState>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, state))
}

async fn client(socket: WebSocket, state: Arc<AppState>) {
    use futures_util::{SinkExt, StreamExt};
    let id = state.sessions.fetch_add(1, Ordering::Relaxed);
    let session = Session::new(state.model.clone(), state.options.seed.wrapping_add(id));
    let out = Arc::new(OutQueue::new(state.options.audio_queue, state.options.spectrum_queue));
    let (tx, rx) = mpsc::channel::<String>(256);
    let (mut sink, mut stream) = socket.split();
    let session_task = tokio::spawn(run_session(session, rx, out.clone()));
    let writer_out = out.clone();
    let writer = tokio::spawn(async move {
        while let Some(item) = writer_out.pop().await {
            let msg = match item {
                Outgoing::Text(t) => Message::Text(t.into()),
                Outgoing::Audio(b) => Message::Binary(b.into()),
            };
            if sink.send(msg).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });
    while let Some(Ok(msg)) = stream.next().await {
        match msg {
            Message::Text(t) => {
                if tx.send(t.to_string()).await.is_err() {
                    break;
                }
            }
            Message::Binary(_) => {
                out.push_text(ServerMessage::error("malformed", "binary client messages are not supported").to_json())
                    .await
            }
            Message::Close(_) => break,
            _ => {}
        }
    }
    drop(tx);
    let _ = session_task.await;
    writer.abort();
    tracing::debug!(session = id, dropped_audio = out.dropped_audio(), "session closed");
}

/// Serves on a bound listener. Nagle's algorithm is disabled: spectra are
/// small and must not wait for the peer's delayed acknowledgement.
pub async fn serve_listener(
    listener: tokio::net::TcpListener,
    model: Arc<ServiceModel>,
    options: ServeOptions,
) -> std::io::Result<()> {
    use axum::serve::ListenerExt;
    let listener = listener.tap_io(|tcp| {
        if let Err(e) = tcp.set_nodelay(true) {
            tracing::warn!("cannot set TCP_NODELAY: {e}");
        }
    });
    axum::serve(listener, router(model, options)).await
}

/// Binds and serves until the process ends.
pub async fn serve(model: Arc<ServiceModel>, options: ServeOptions, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    serve_listener(listener, model, options).await
}
