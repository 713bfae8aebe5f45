//! Per-client synthesis state, independent of any transport.
//!
//! Every 10 ms tick the session extends its 10 kHz action history by 100
//! samples (zero-order hold of the actions received since the previous
//! tick, spread evenly over the block), low-passes the newest 10 samples
//! the same way recordings are preprocessed, predicts the next spectrum and
//! stitches one 100-sample audio block.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use texsynth::dataset::{ActionWindow, ACTION_LEN};
use texsynth::dsp::{lowpass_20hz_tail, lowpass_kernel, SpectralFrame};
use texsynth::neural::{ModelFile, ModelMode};
use texsynth::reconstruct::{StitchMode, StitchState};
use texsynth::texture_repr::TextureCode;

use crate::protocol::{ClientMessage, MaterialInfo, ServerMessage, AUDIO_BLOCK};

pub const TICK_MS: u64 = 10;
/// Raw action samples kept: the low-pass support plus the action window.
const HISTORY: usize = 2048 + ACTION_LEN;

/// Model weights and codes shared read-only by all sessions.
#[derive(Debug)]
pub struct ServiceModel {
    file: ModelFile,
    codes: BTreeMap<String, TextureCode>,
    materials: Vec<MaterialInfo>,
}

impl ServiceModel {
    /// `codes` must hold a code per material for descriptor-mode models and
    /// is ignored otherwise.
    pub fn new(file: ModelFile, codes: BTreeMap<String, TextureCode>) -> texsynth::Result<Self> {
        let mode = file.mode().ok_or(texsynth::Error::Empty("model file"))?;
        debug_assert!(lowpass_kernel().len() / 2 + ACTION_LEN <= HISTORY);
        let ids: Vec<String> = match mode {
            ModelMode::Descriptor => codes.keys().cloned().collect(),
            _ => file.material_ids(),
        };
        if ids.is_empty() {
            return Err(texsynth::Error::Empty("service materials"));
        }
        let materials = ids
            .iter()
            .map(|id| {
                let model = match mode {
                    ModelMode::Descriptor => &file.models[0],
                    _ => file.model_for(id)?,
                };
                Ok(MaterialInfo {
                    id: id.clone(),
                    force_range: advertised_range(&model.norm.input_mean[..ACTION_LEN], &model.norm.input_std[..ACTION_LEN]),
                    speed_range: advertised_range(&model.norm.input_mean[ACTION_LEN..], &model.norm.input_std[ACTION_LEN..]),
                })
            })
            .collect::<texsynth::Result<Vec<_>>>()?;
        Ok(Self { file, codes, materials })
    }

    pub fn materials(&self) -> &[MaterialInfo] {
        &self.materials
    }

    pub fn has_material(&self, id: &str) -> bool {
        self.materials.iter().any(|m| m.id == id)
    }

    pub fn predict(&self, material_id: &str, action: &ActionWindow) -> texsynth::Result<SpectralFrame> {
        match self.file.mode() {
            Some(ModelMode::Descriptor) => {
                let code = self
                    .codes
                    .get(material_id)
                    .ok_or_else(|| texsynth::Error::UnknownMaterial(material_id.to_string()))?;
                self.file.models[0].forward(action, Some(code))
            }
            _ => self.file.model_for(material_id)?.predict_material(action, material_id),
        }
    }
}

/// Mean plus or minus two standard deviations of the training inputs,
/// clamped at zero.
fn advertised_range(mean: &[f64], std: &[f64]) -> [f64; 2] {
    let m = mean.iter().sum::<f64>() / mean.len() as f64;
    let s = std.iter().sum::<f64>() / std.len() as f64;
    [(m - 2.0 * s).max(0.0), (m + 2.0 * s).max(0.0)]
}

/// Output of one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub tick: u64,
    pub spectrum: Vec<f64>,
    pub audio: Vec<f32>,
}

impl TickOutput {
    pub fn spectrum_message(&self) -> ServerMessage {
        ServerMessage::Spectrum {
            bins: self.spectrum.clone(),
            tick: self.tick,
        }
    }
}

pub struct Session {
    model: Arc<ServiceModel>,
    material: String,
    force: VecDeque<f64>,
    speed: VecDeque<f64>,
    pending: Vec<(f64, f64)>,
    held: (f64, f64),
    stitch: StitchState,
    tick: u64,
}

impl Session {
    /// Starts at rest on the first advertised material.
    pub fn new(model: Arc<ServiceModel>, seed: u64) -> Self {
        let material = model.materials()[0].id.clone();
        Self {
            model,
            material,
            force: VecDeque::from(vec![0.0; HISTORY]),
            speed: VecDeque::from(vec![0.0; HISTORY]),
            pending: Vec::new(),
            held: (0.0, 0.0),
            stitch: StitchState::new(AUDIO_BLOCK, StitchMode::Coherent, seed).expect("block size divides the frame"),
            tick: 0,
        }
    }

    pub fn material(&self) -> &str {
        &self.material
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn materials_message(&self) -> ServerMessage {
        ServerMessage::Materials {
            materials: self.model.materials().to_vec(),
        }
    }

    /// Applies one client text message; a reply is only produced for errors.
    pub fn handle_text(&mut self, text: &str) -> Option<ServerMessage> {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => Some(ServerMessage::error("malformed", e.to_string())),
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Option<ServerMessage> {
        match msg {
            ClientMessage::Action { force, speed, .. } => {
                if !force.is_finite() || !speed.is_finite() {
                    return Some(ServerMessage::error("malformed", "force and speed must be finite"));
                }
                self.pending.push((force.max(0.0), speed.max(0.0)));
                None
            }
            ClientMessage::Select { material } => {
                if self.model.has_material(&material) {
                    self.material = material;
                    None
                } else {
                    Some(ServerMessage::error("unknown_material", format!("unknown material `{material}`")))
                }
            }
        }
    }

    pub fn tick(&mut self) -> texsynth::Result<TickOutput> {
        let k = self.pending.len();
        for j in 0..AUDIO_BLOCK {
            let (f, v) = if k == 0 {
                self.held
            } else {
                self.pending[(j * k / AUDIO_BLOCK).min(k - 1)]
            };
            self.force.push_back(f);
            self.speed.push_back(v);
        }
        if let Some(&last) = self.pending.last() {
            self.held = last;
        }
        self.pending.clear();
        self.force.drain(..self.force.len() - HISTORY);
        self.speed.drain(..self.speed.len() - HISTORY);

        let window = |buf: &mut VecDeque<f64>| -> [f64; ACTION_LEN] {
            let tail = lowpass_20hz_tail(buf.make_contiguous(), ACTION_LEN);
            let mut out = [0.0; ACTION_LEN];
            for (o, v) in out.iter_mut().zip(tail) {
                *o = v.max(0.0);
            }
            out
        };
        let action = ActionWindow {
            force: window(&mut self.force),
            speed: window(&mut self.speed),
        };
        let frame = self.model.predict(&self.material, &action)?;
        let audio = self.stitch.push(&frame).into_iter().map(|v| v as f32).collect();
        let out = TickOutput {
            tick: self.tick,
            spectrum: frame.mags,
            audio,
        };
        self.tick += 1;
        Ok(out)
    }
}
