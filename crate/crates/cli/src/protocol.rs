//! Websocket message formats.
//!
//! Client to server (text, JSON):
//!
//! - `{"t":"action","force":<N>,"speed":<mm/s>,"ts":<client ms>}`
//! - `{"t":"select","material":"<id>"}`
//!
//! Server to client:
//!
//! - text `{"t":"materials","materials":[{"id","force_range","speed_range"}]}`,
//!   sent on connect
//! - text `{"t":"spectrum","bins":[101 magnitudes],"tick":<n>}`, one per 10 ms tick
//! - text `{"t":"error","code":"<code>","message":"<text>"}`
//! - binary audio block for tick `n`: `n` as u64 little-endian, then 100
//!   f32 little-endian samples at 10 kHz

use serde::{Deserialize, Serialize};

pub const AUDIO_BLOCK: usize = 100;
pub const AUDIO_FRAME_BYTES: usize = 8 + 4 * AUDIO_BLOCK;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClientMessage {
    Action { force: f64, speed: f64, ts: i64 },
    Select { material: String },
}

/// A material with the action ranges the model was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialInfo {
    pub id: String,
    pub force_range: [f64; 2],
    pub speed_range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase")]
pub enum ServerMessage {
    Materials { materials: Vec<MaterialInfo> },
    Spectrum { bins: Vec<f64>, tick: u64 },
    Error { code: String, message: String },
}

impl ServerMessage {
    pub fn error(code: &str, message: impl Into<String>) -> Self {
        ServerMessage::Error {
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

pub fn encode_audio(tick: u64, samples: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * samples.len());
    out.extend_from_slice(&tick.to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

pub fn decode_audio(bytes: &[u8]) -> Option<(u64, Vec<f32>)> {
    if bytes.len() < 8 || (bytes.len() - 8) % 4 != 0 {
        return None;
    }
    let tick = u64::from_le_bytes(bytes[..8].try_into().ok()?);
    let samples = bytes[8..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    Some((tick, samples))
}
