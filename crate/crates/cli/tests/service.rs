mod common;

use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::sync::mpsc;
use tokio_tungstenite::tungstenite::Message;

use texsynth::dataset::ActionWindow;
use texsynth_cli::protocol::{decode_audio, ServerMessage, AUDIO_BLOCK, AUDIO_FRAME_BYTES};
use texsynth_cli::server::{run_session, serve_listener, OutQueue, Outgoing, ServeOptions};
use texsynth_cli::session::{ServiceModel, Session};

fn action(force: f64, speed: f64, ts: u64) -> String {
    format!(r#"{{"t":"action","force":{force},"speed":{speed},"ts":{ts}}}"#)
}

/// Runs a session for `ticks` ticks in paused time with an action 5 ms into
/// every tick, returning every queued output.
async fn scripted_session(model: Arc<ServiceModel>, material: &str, seed: u64, ticks: u64) -> Vec<Outgoing> {
    let (tx, rx) = mpsc::channel(16);
    let out = Arc::new(OutQueue::new(1 << 20, 1 << 20));
    tx.send(format!(r#"{{"t":"select","material":"{material}"}}"#)).await.unwrap();
    let task = tokio::spawn(run_session(Session::new(model, seed), rx, out.clone()));
    tokio::time::sleep(Duration::from_millis(5)).await;
    for i in 0..ticks {
        let f = 1.0 + 0.5 * ((i as f64) * 0.01).sin();
        tx.send(action(f, 60.0 + (i % 100) as f64, i * 10)).await.unwrap();
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    drop(tx);
    task.await.unwrap();
    let mut items = Vec::new();
    while let Some(o) = out.pop().await {
        items.push(o);
    }
    items
}

fn spectra(items: &[Outgoing]) -> Vec<(u64, Vec<f64>)> {
    items
        .iter()
        .filter_map(|o| match o {
            Outgoing::Text(t) => match serde_json::from_str::<ServerMessage>(t).ok()? {
                ServerMessage::Spectrum { bins, tick } => Some((tick, bins)),
                _ => None,
            },
            _ => None,
        })
        .collect()
}

#[tokio::test(start_paused = true)]
async fn sixty_seconds_yield_six_thousand_spectra() {
    let model = common::service_model();
    let items = scripted_session(model, "synth_00", 0, 6000).await;
    let s = spectra(&items);
    assert!((5999..=6001).contains(&s.len()), "{} spectra", s.len());
    assert!(s.windows(2).all(|w| w[1].0 == w[0].0 + 1));
    let audio = items.iter().filter(|o| matches!(o, Outgoing::Audio(_))).count();
    assert_eq!(audio, s.len());
}

#[tokio::test(start_paused = true)]
async fn concurrent_sessions_match_single_replays() {
    let model = common::service_model();
    let (a, b) = tokio::join!(
        scripted_session(model.clone(), "synth_00", 1, 300),
        scripted_session(model.clone(), "synth_01", 2, 300)
    );
    let solo_a = scripted_session(model.clone(), "synth_00", 1, 300).await;
    let solo_b = scripted_session(model, "synth_01", 2, 300).await;
    assert_eq!(a, solo_a);
    assert_eq!(b, solo_b);
    assert_ne!(spectra(&a), spectra(&b));
}

#[tokio::test(start_paused = true)]
async fn stalled_client_does_not_block_others() {
    let model = common::service_model();
    let (stalled_tx, stalled_rx) = mpsc::channel::<String>(4);
    let stalled_out = Arc::new(OutQueue::new(4, 8));
    let stalled = tokio::spawn(run_session(Session::new(model.clone(), 0), stalled_rx, stalled_out.clone()));
    let items = scripted_session(model, "synth_00", 0, 500).await;
    assert!(spectra(&items).len() >= 500);
    // Nobody drained the stalled queue: it stays bounded and sheds audio.
    assert!(stalled_out.len() <= 4 + 8);
    assert!(stalled_out.dropped_audio() > 0);
    drop(stalled_tx);
    stalled.abort();
}

#[test]
fn zero_force_streams_the_zero_force_prediction() {
    let model = common::service_model();
    let mut s = Session::new(model.clone(), 0);
    let mut active = Vec::new();
    s.handle_text(&action(1.5, 120.0, 0));
    for _ in 0..300 {
        active.extend(s.tick().unwrap().audio);
    }
    s.handle_text(&action(0.0, 120.0, 3000));
    let mut last = None;
    let mut quiet = Vec::new();
    for _ in 0..300 {
        let t = s.tick().unwrap();
        quiet.extend(t.audio.clone());
        last = Some(t);
    }
    let expected = model.predict("synth_00", &ActionWindow::constant(0.0, 120.0)).unwrap();
    for (a, b) in last.unwrap().spectrum.iter().zip(&expected.mags) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
    }
    let rms = |x: &[f32]| (x.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
    let tail = &quiet[quiet.len() - 10 * AUDIO_BLOCK..];
    let ratio = rms(tail) / rms(&active[active.len() / 2..]);
    assert!(ratio < 0.1, "zero-force audio at {ratio} of the active level");
}

async fn start(options: ServeOptions) -> std::net::SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let model = common::service_model();
    tokio::spawn(async move { serve_listener(listener, model, options).await.unwrap() });
    addr
}

async fn http_get(addr: std::net::SocketAddr, path: &str) -> (u16, String) {
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    let req = format!("GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n");
    stream.write_all(req.as_bytes()).await.unwrap();
    let mut buf = String::new();
    stream.read_to_string(&mut buf).await.unwrap();
    let status = buf.split_whitespace().nth(1).unwrap().parse().unwrap();
    let body = buf.split_once("\r\n\r\n").map(|x| x.1.to_string()).unwrap_or_default();
    (status, body)
}

#[tokio::test]
async fn http_endpoints_and_static_assets() {
    let addr = start(ServeOptions::default()).await;
    let (status, body) = http_get(addr, "/healthz").await;
    assert_eq!(status, 200);
    assert!(body.contains(r#""status":"ok""#));
    let (status, body) = http_get(addr, "/materials").await;
    assert_eq!(status, 200);
    let open = body.find('{').unwrap();
    let close = body.rfind('}').unwrap();
    let parsed: ServerMessage = serde_json::from_str(&body[open..=close]).unwrap();
    let ServerMessage::Materials { materials } = parsed else { panic!("{body}") };
    assert_eq!(materials.len(), 2);
    assert!(materials.iter().all(|m| m.force_range[0] <= m.force_range[1]));
    let (status, body) = http_get(addr, "/").await;
    assert_eq!(status, 200);
    assert!(body.contains("<html"));

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>probe</html>").unwrap();
    std::fs::write(dir.path().join("app.js"), "console.log(1)").unwrap();
    let addr = start(ServeOptions {
        static_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    })
    .await;
    assert!(http_get(addr, "/app.js").await.1.contains("console.log(1)"));
    assert!(http_get(addr, "/").await.1.contains("probe"));
    assert_eq!(http_get(addr, "/missing.css").await.0, 404);
    assert_eq!(http_get(addr, "/healthz").await.0, 200);
}

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn next_text(ws: &mut Ws) -> ServerMessage {
    loop {
        match ws.next().await.unwrap().unwrap() {
            Message::Text(t) => return serde_json::from_str(&t).unwrap(),
            _ => continue,
        }
    }
}

async fn next_error(ws: &mut Ws) -> String {
    loop {
        if let ServerMessage::Error { code, .. } = next_text(ws).await {
            return code;
        }
    }
}

#[tokio::test]
async fn websocket_protocol_and_errors() {
    let addr = start(ServeOptions::default()).await;
    let (mut ws, _) = tokio_tungstenite::connect_async_with_config(format!("ws://{addr}/ws"), None, true)
                .await
                .unwrap();
    let ServerMessage::Materials { materials } = next_text(&mut ws).await else {
        panic!("materials must come first")
    };
    assert_eq!(materials.len(), 2);

    ws.send(Message::text("{not json")).await.unwrap();
    assert_eq!(next_error(&mut ws).await, "malformed");
    ws.send(Message::text(r#"{"t":"select","material":"nope"}"#)).await.unwrap();
    assert_eq!(next_error(&mut ws).await, "unknown_material");
    ws.send(Message::text(r#"{"t":"select","material":"synth_01"}"#)).await.unwrap();
    ws.send(Message::text(action(1.0, 100.0, 0))).await.unwrap();

    // The session survives: spectra and matching audio keep arriving.
    let mut spectrum_ticks = Vec::new();
    let mut audio_ticks = Vec::new();
    while spectrum_ticks.len() < 20 || audio_ticks.len() < 20 {
        match ws.next().await.unwrap().unwrap() {
            Message::Text(t) => {
                if let ServerMessage::Spectrum { bins, tick } = serde_json::from_str(&t).unwrap() {
                    assert_eq!(bins.len(), 101);
                    spectrum_ticks.push(tick);
                }
            }
            Message::Binary(b) => {
                assert_eq!(b.len(), AUDIO_FRAME_BYTES);
                let (tick, samples) = decode_audio(&b).unwrap();
                assert_eq!(samples.len(), AUDIO_BLOCK);
                audio_ticks.push(tick);
            }
            _ => {}
        }
    }
    assert!(spectrum_ticks.windows(2).all(|w| w[1] == w[0] + 1));
    let n = spectrum_ticks.len().min(audio_ticks.len());
    assert_eq!(spectrum_ticks[..n], audio_ticks[..n]);
    ws.close(None).await.unwrap();
}
