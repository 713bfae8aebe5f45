//! Kept in its own binary so no other test competes for the CPU.

mod common;

use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use tokio_tungstenite::tungstenite::Message;

use texsynth_cli::protocol::ServerMessage;
use texsynth_cli::server::{serve_listener, ServeOptions};

fn action(force: f64, speed: f64, ts: u64) -> String {
    format!(r#"{{"t":"action","force":{force},"speed":{speed},"ts":{ts}}}"#)
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn loopback_latency_with_ten_sessions() {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let model = common::service_model();
    tokio::spawn(async move { serve_listener(listener, model, ServeOptions::default()).await.unwrap() });
    let clients = (0..10).map(|i| {
        tokio::spawn(async move {
            let (ws, _) = tokio_tungstenite::connect_async_with_config(format!("ws://{addr}/ws"), None, true)
                .await
                .unwrap();
            let (mut sink, mut stream) = ws.split();
            let sender = tokio::spawn(async move {
                let mut interval = tokio::time::interval(Duration::from_millis(10));
                for k in 0..200u64 {
                    interval.tick().await;
                    let f = 0.5 + 0.1 * (i as f64) + 0.2 * ((k as f64) * 0.05).sin();
                    if sink.send(Message::text(action(f, 100.0, k * 10))).await.is_err() {
                        break;
                    }
                }
                sink
            });
            let mut arrivals = Vec::new();
            while arrivals.len() < 200 {
                if let Message::Text(t) = stream.next().await.unwrap().unwrap() {
                    if let Ok(ServerMessage::Spectrum { tick, .. }) = serde_json::from_str(&t) {
                        arrivals.push((tick, Instant::now()));
                    }
                }
            }
            let mut sink = sender.await.unwrap();
            let _ = sink.close().await;
            arrivals
        })
    });
    let mut worst = Duration::ZERO;
    for c in clients.collect::<Vec<_>>() {
        let arrivals = c.await.unwrap();
        // Anchor the 10 ms schedule at the earliest arrival it admits, then
        // measure how late each spectrum is against its own tick.
        let t0 = arrivals
            .iter()
            .map(|(tick, at)| *at - Duration::from_millis(10 * tick))
            .min()
            .unwrap();
        for (tick, at) in &arrivals {
            worst = worst.max(*at - (t0 + Duration::from_millis(10 * tick)));
        }
    }
    println!("worst spectrum lateness across 10 sessions: {worst:?}");
    assert!(worst < Duration::from_millis(10), "worst lateness {worst:?}");
}
