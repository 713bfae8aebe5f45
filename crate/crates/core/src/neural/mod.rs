//! The action-conditional spectral predictor.
//!
//! ```text
//! action (20) -> FC 64 -> ReLU -> FC 64 -> ReLU ----------------+
//!                                                               concat -> FC 256 -> ReLU -> FC 256 -> ReLU -> FC 101 -> softplus
//! texture code (256): embedding row | head(descriptor) --------+
//! ```
//!
//! The descriptor head is `128 -> 256 -> ReLU -> 256`. In per-material mode
//! the texture path is removed and the predictor sees only the action
//! features. Gradients are derived by hand for this fixed graph.
//!
//! The output rectifier is softplus rather than ReLU: a ReLU output bin
//! whose targets are small gets pushed below zero for every input and never
//! recovers, which leaves the high-frequency bins stuck at zero.

mod adam;
mod io;
mod layers;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{AdamConfig, AdamState};
pub use io::{load_model, load_texture_head, save_model, save_texture_head, ModelFile, TextureHeadFile};
pub use layers::Dense;
pub use train::{
    train_stage1, train_stage2, ClassifierHead, CodeSource, EpochStats, Stage1Config, Stage1Outcome,
    TrainConfig, TrainOutcome,
};

use crate::dataset::{ActionWindow, ACTION_LEN};
use crate::dsp::{SpectralFrame, NUM_BINS};
use crate::error::{Error, Result};
use crate::texture_repr::{ImageDescriptor, TextureCode, DESCRIPTOR_DIM};
use layers::{relu_inplace, relu_mask, softplus_inplace, softplus_mask};

pub const ACTION_FEATURES: usize = 2 * ACTION_LEN;
pub const CODE_DIM: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelMode {
    /// Learned per-material code table; known materials only.
    Embedding,
    /// Codes from image descriptors through a frozen pre-trained head.
    Descriptor,
    /// No texture input; one network per material.
    PerMaterial,
}

impl ModelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelMode::Embedding => "embedding",
            ModelMode::Descriptor => "descriptor",
            ModelMode::PerMaterial => "per-material",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "embedding" => Some(ModelMode::Embedding),
            "descriptor" => Some(ModelMode::Descriptor),
            "per-material" => Some(ModelMode::PerMaterial),
            _ => None,
        }
    }
}

impl std::fmt::Display for ModelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub action_hidden: usize,
    pub predictor_hidden: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            action_hidden: 64,
            predictor_hidden: 256,
        }
    }
}

/// Two-layer descriptor-to-code head.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureHead {
    pub layers: [Dense; 2],
}

impl TextureHead {
    pub fn init(rng: &mut ChaCha8Rng) -> Self {
        Self {
            layers: [
                Dense::init(DESCRIPTOR_DIM, CODE_DIM, rng),
                Dense::init(CODE_DIM, CODE_DIM, rng),
            ],
        }
    }

    pub fn encode(&self, descriptor: &[f64]) -> Vec<f64> {
        let mut hidden = vec![0.0; CODE_DIM];
        self.layers[0].forward(descriptor, &mut hidden);
        relu_inplace(&mut hidden);
        let mut code = vec![0.0; CODE_DIM];
        self.layers[1].forward(&hidden, &mut code);
        code
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TextureEncoder {
    /// Row-major `materials x CODE_DIM` table.
    Embedding(Vec<f64>),
    Head(TextureHead),
    None,
}

/// Trainable weights. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub action: [Dense; 2],
    pub texture: TextureEncoder,
    pub predictor: [Dense; 3],
}

impl Params {
    pub fn zeros_like(&self) -> Self {
        Self {
            action: [self.action[0].zeros_like(), self.action[1].zeros_like()],
            texture: match &self.texture {
                TextureEncoder::Embedding(t) => TextureEncoder::Embedding(vec![0.0; t.len()]),
                TextureEncoder::Head(h) => TextureEncoder::Head(TextureHead {
                    layers: [h.layers[0].zeros_like(), h.layers[1].zeros_like()],
                }),
                TextureEncoder::None => TextureEncoder::None,
            },
            predictor: [
                self.predictor[0].zeros_like(),
                self.predictor[1].zeros_like(),
                self.predictor[2].zeros_like(),
            ],
        }
    }

    /// Named flat views of every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (i, l) in self.action.iter().enumerate() {
            out.push((format!("action.{i}.weight"), &l.weight));
            out.push((format!("action.{i}.bias"), &l.bias));
        }
        match &self.texture {
            TextureEncoder::Embedding(t) => out.push(("embedding".into(), t)),
            TextureEncoder::Head(h) => {
                for (i, l) in h.layers.iter().enumerate() {
                    out.push((format!("texture_head.{i}.weight"), &l.weight));
                    out.push((format!("texture_head.{i}.bias"), &l.bias));
                }
            }
            TextureEncoder::None => {}
        }
        for (i, l) in self.predictor.iter().enumerate() {
            out.push((format!("predictor.{i}.weight"), &l.weight));
            out.push((format!("predictor.{i}.bias"), &l.bias));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in self.action.iter_mut() {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        match &mut self.texture {
            TextureEncoder::Embedding(t) => out.push(t),
            TextureEncoder::Head(h) => {
                for l in h.layers.iter_mut() {
                    out.push(&mut l.weight);
                    out.push(&mut l.bias);
                }
            }
            TextureEncoder::None => {}
        }
        for l in self.predictor.iter_mut() {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b.1) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// Fixed input standardization and output scale, fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    /// Predictions are produced in units of this scale.
    pub output_scale: f64,
}

impl Normalization {
    pub fn identity() -> Self {
        Self {
            input_mean: vec![0.0; ACTION_FEATURES],
            input_std: vec![1.0; ACTION_FEATURES],
            output_scale: 1.0,
        }
    }

    /// Per-feature mean/std of the actions and the mean target magnitude.
    pub fn fit<'a>(
        actions: impl Iterator<Item = &'a ActionWindow> + Clone,
        targets: impl Iterator<Item = &'a SpectralFrame>,
    ) -> Self {
        let mut mean = vec![0.0; ACTION_FEATURES];
        let mut count = 0.0;
        for a in actions.clone() {
            for (m, v) in mean.iter_mut().zip(a.features()) {
                *m += v;
            }
            count += 1.0;
        }
        if count == 0.0 {
            return Self::identity();
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; ACTION_FEATURES];
        for a in actions {
            for ((s, v), m) in var.iter_mut().zip(a.features()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|s| {
                let sd = (s / count).sqrt();
                if sd > 1e-9 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        let (mut total, mut n) = (0.0, 0usize);
        for t in targets {
            total += t.mags.iter().sum::<f64>();
            n += t.mags.len();
        }
        let mean_mag = if n > 0 { total / n as f64 } else { 0.0 };
        Self {
            input_mean: mean,
            input_std: std,
            output_scale: if mean_mag > 1e-12 { mean_mag } else { 1.0 },
        }
    }

    pub fn apply(&self, action: &ActionWindow) -> [f64; ACTION_FEATURES] {
        let mut x = action.features();
        for ((v, m), s) in x.iter_mut().zip(&self.input_mean).zip(&self.input_std) {
            *v = (*v - m) / s;
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    pub mode: ModelMode,
    pub material_ids: Vec<String>,
    pub arch: Architecture,
    pub norm: Normalization,
    pub params: Params,
}

/// Where an example's texture code comes from during a forward pass.
#[derive(Debug, Clone, Copy)]
pub enum CodeRef<'a> {
    /// Row of the embedding table.
    Material(usize),
    /// Descriptor to push through the texture head.
    Descriptor(&'a [f64]),
    /// Precomputed code (frozen head or external).
    Code(&'a [f64]),
    None,
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct Trace {
    input: Vec<f64>,
    h1: Vec<f64>,
    /// Concatenation of the action encoding and the texture code.
    joint: Vec<f64>,
    head_hidden: Vec<f64>,
    p1: Vec<f64>,
    p2: Vec<f64>,
    out: Vec<f64>,
}

impl SpectralModel {
    pub fn new(mode: ModelMode, material_ids: Vec<String>, arch: Architecture, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let texture = match mode {
            ModelMode::Embedding => {
                if material_ids.is_empty() {
                    return Err(Error::Empty("embedding materials"));
                }
                let table = (0..material_ids.len() * CODE_DIM)
                    .map(|_| 0.01 * rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal))
                    .collect();
                TextureEncoder::Embedding(table)
            }
            ModelMode::Descriptor => TextureEncoder::Head(TextureHead::init(&mut rng)),
            ModelMode::PerMaterial => {
                if material_ids.len() != 1 {
                    return Err(Error::invalid("a per-material model covers exactly one material"));
                }
                TextureEncoder::None
            }
        };
        let joint = arch.action_hidden + if mode == ModelMode::PerMaterial { 0 } else { CODE_DIM };
        let action = [
            Dense::init(ACTION_FEATURES, arch.action_hidden, &mut rng),
            Dense::init(arch.action_hidden, arch.action_hidden, &mut rng),
        ];
        let mut predictor = [
            Dense::init(joint, arch.predictor_hidden, &mut rng),
            Dense::init(arch.predictor_hidden, arch.predictor_hidden, &mut rng),
            Dense::init(arch.predictor_hidden, NUM_BINS, &mut rng),
        ];
        // Normalized targets average 1; start every output there.
        predictor[2].bias.fill((std::f64::consts::E - 1.0).ln());
        Ok(Self {
            mode,
            material_ids,
            arch,
            norm: Normalization::identity(),
            params: Params {
                action,
                texture,
                predictor,
            },
        })
    }

    /// Training always fits the normalization, so an identity normalization
    /// marks a model that never saw data.
    pub fn is_trained(&self) -> bool {
        self.norm != Normalization::identity()
    }

    pub fn material_index(&self, material_id: &str) -> Result<usize> {
        self.material_ids
            .iter()
            .position(|m| m == material_id)
            .ok_or_else(|| Error::UnknownMaterial(material_id.to_string()))
    }

    /// Texture code for a known material (embedding mode) or a descriptor
    /// (descriptor mode).
    pub fn encode_material(&self, material_id: &str) -> Result<TextureCode> {
        match &self.params.texture {
            TextureEncoder::Embedding(table) => {
                let i = self.material_index(material_id)?;
                Ok(TextureCode(table[i * CODE_DIM..(i + 1) * CODE_DIM].to_vec()))
            }
            _ => Err(Error::ModeMismatch {
                found: self.mode.to_string(),
                requested: ModelMode::Embedding.to_string(),
            }),
        }
    }

    pub fn encode_descriptor(&self, descriptor: &ImageDescriptor) -> Result<TextureCode> {
        match &self.params.texture {
            TextureEncoder::Head(head) => {
                if descriptor.features.len() != DESCRIPTOR_DIM {
                    return Err(Error::LengthMismatch {
                        what: "descriptor",
                        expected: DESCRIPTOR_DIM,
                        actual: descriptor.features.len(),
                    });
                }
                Ok(TextureCode(head.encode(&descriptor.features)))
            }
            _ => Err(Error::ModeMismatch {
                found: self.mode.to_string(),
                requested: ModelMode::Descriptor.to_string(),
            }),
        }
    }

    /// Predicted magnitudes (<= 1 kHz) of the next 100 ms of acceleration.
    pub fn forward(&self, action: &ActionWindow, code: Option<&TextureCode>) -> Result<SpectralFrame> {
        let code_ref = match (self.mode, code) {
            (ModelMode::PerMaterial, _) => CodeRef::None,
            (_, Some(c)) if c.0.len() == CODE_DIM => CodeRef::Code(&c.0),
            (_, Some(c)) => {
                return Err(Error::LengthMismatch {
                    what: "texture code",
                    expected: CODE_DIM,
                    actual: c.0.len(),
                })
            }
            (_, None) => return Err(Error::invalid("texture code required")),
        };
        let input = self.norm.apply(action);
        let mut trace = Trace::default();
        self.forward_normalized(&input, code_ref, &mut trace);
        let mags = trace.out.iter().map(|v| v * self.norm.output_scale).collect();
        Ok(SpectralFrame { mags, origin_index: 0 })
    }

    /// Prediction for a known material of an embedding or per-material model.
    pub fn predict_material(&self, action: &ActionWindow, material_id: &str) -> Result<SpectralFrame> {
        match self.mode {
            ModelMode::PerMaterial => {
                self.material_index(material_id)?;
                self.forward(action, None)
            }
            _ => self.forward(action, Some(&self.encode_material(material_id)?)),
        }
    }

    /// Forward pass on a standardized input; output is in normalized units.
    pub(crate) fn forward_normalized(&self, input: &[f64], code: CodeRef<'_>, t: &mut Trace) {
        let p = &self.params;
        let ah = self.arch.action_hidden;
        let ph = self.arch.predictor_hidden;
        t.input.clear();
        t.input.extend_from_slice(input);
        t.h1.resize(ah, 0.0);
        p.action[0].forward(input, &mut t.h1);
        relu_inplace(&mut t.h1);
        let joint_len = p.predictor[0].inputs;
        t.joint.resize(joint_len, 0.0);
        p.action[1].forward(&t.h1, &mut t.joint[..ah]);
        relu_inplace(&mut t.joint[..ah]);
        match (code, &p.texture) {
            (CodeRef::Material(i), TextureEncoder::Embedding(table)) => {
                t.joint[ah..].copy_from_slice(&table[i * CODE_DIM..(i + 1) * CODE_DIM]);
            }
            (CodeRef::Descriptor(d), TextureEncoder::Head(head)) => {
                t.head_hidden.resize(CODE_DIM, 0.0);
                head.layers[0].forward(d, &mut t.head_hidden);
                relu_inplace(&mut t.head_hidden);
                head.layers[1].forward(&t.head_hidden, &mut t.joint[ah..]);
            }
            (CodeRef::Code(c), _) => t.joint[ah..].copy_from_slice(c),
            (CodeRef::None, TextureEncoder::None) => {}
            _ => panic!("texture input does not match model mode {}", self.mode),
        }
        t.p1.resize(ph, 0.0);
        p.predictor[0].forward(&t.joint, &mut t.p1);
        relu_inplace(&mut t.p1);
        t.p2.resize(ph, 0.0);
        p.predictor[1].forward(&t.p1, &mut t.p2);
        relu_inplace(&mut t.p2);
        t.out.resize(NUM_BINS, 0.0);
        p.predictor[2].forward(&t.p2, &mut t.out);
        softplus_inplace(&mut t.out);
    }

    /// Backpropagates `grad_out` (d loss / d normalized output) through the
    /// activations in `t`, accumulating into `grads`.
    pub(crate) fn backward_trace(
        &self,
        t: &Trace,
        code: CodeRef<'_>,
        grad_out: &[f64],
        grads: &mut Params,
        scratch: &mut BackwardScratch,
        train_head: bool,
    ) {
        let p = &self.params;
        let ah = self.arch.action_hidden;
        let s = scratch;
        s.g_out.clear();
        s.g_out.extend_from_slice(grad_out);
        softplus_mask(&mut s.g_out, &t.out);

        s.g_p2.resize(t.p2.len(), 0.0);
        p.predictor[2].backward(&t.p2, &s.g_out, &mut grads.predictor[2], Some(&mut s.g_p2));
        relu_mask(&mut s.g_p2, &t.p2);

        s.g_p1.resize(t.p1.len(), 0.0);
        p.predictor[1].backward(&t.p1, &s.g_p2, &mut grads.predictor[1], Some(&mut s.g_p1));
        relu_mask(&mut s.g_p1, &t.p1);

        s.g_joint.resize(t.joint.len(), 0.0);
        p.predictor[0].backward(&t.joint, &s.g_p1, &mut grads.predictor[0], Some(&mut s.g_joint));

        match (code, &p.texture, &mut grads.texture) {
            (CodeRef::Material(i), _, TextureEncoder::Embedding(g)) => {
                for (gv, d) in g[i * CODE_DIM..(i + 1) * CODE_DIM].iter_mut().zip(&s.g_joint[ah..]) {
                    *gv += d;
                }
            }
            (CodeRef::Descriptor(d), TextureEncoder::Head(head), TextureEncoder::Head(gh)) if train_head => {
                s.g_head.resize(CODE_DIM, 0.0);
                head.layers[1].backward(&t.head_hidden, &s.g_joint[ah..], &mut gh.layers[1], Some(&mut s.g_head));
                relu_mask(&mut s.g_head, &t.head_hidden);
                head.layers[0].backward(d, &s.g_head, &mut gh.layers[0], None);
            }
            _ => {}
        }

        let g_enc = &mut s.g_joint[..ah];
        relu_mask(g_enc, &t.joint[..ah]);
        s.g_h1.resize(ah, 0.0);
        p.action[1].backward(&t.h1, g_enc, &mut grads.action[1], Some(&mut s.g_h1));
        relu_mask(&mut s.g_h1, &t.h1);
        p.action[0].backward(&t.input, &s.g_h1, &mut grads.action[0], None);
    }
}

#[derive(Debug, Default)]
pub(crate) struct BackwardScratch {
    g_out: Vec<f64>,
    g_p2: Vec<f64>,
    g_p1: Vec<f64>,
    g_joint: Vec<f64>,
    g_head: Vec<f64>,
    g_h1: Vec<f64>,
}

/// Euclidean distance between two spectral frames over all 101 bins.
pub fn loss(pred: &SpectralFrame, target: &SpectralFrame) -> Result<f64> {
    if pred.mags.len() != NUM_BINS || target.mags.len() != NUM_BINS {
        return Err(Error::LengthMismatch {
            what: "loss operands",
            expected: NUM_BINS,
            actual: if pred.mags.len() != NUM_BINS {
                pred.mags.len()
            } else {
                target.mags.len()
            },
        });
    }
    Ok(euclidean(&pred.mags, &target.mags))
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// An example ready for the network: standardized input, code reference and
/// target in normalized units.
#[derive(Debug, Clone)]
pub struct PreparedExample<'a> {
    pub input: [f64; ACTION_FEATURES],
    pub code: CodeRef<'a>,
    pub target: Vec<f64>,
}

/// Mean Euclidean loss over `batch` (normalized units) and its exact
/// gradient with respect to every trainable tensor. With `train_head` unset
/// the texture-head gradient stays zero.
pub fn backward(model: &SpectralModel, batch: &[PreparedExample<'_>], train_head: bool) -> (f64, Params) {
    let mut grads = model.params.zeros_like();
    let loss = accumulate_batch(model, batch, &mut grads, train_head);
    let n = batch.len().max(1) as f64;
    grads.scale(1.0 / n);
    (loss / n, grads)
}

/// Sum of per-example losses; gradients of that sum are added to `grads`.
pub(crate) fn accumulate_batch(
    model: &SpectralModel,
    batch: &[PreparedExample<'_>],
    grads: &mut Params,
    train_head: bool,
) -> f64 {
    let mut trace = Trace::default();
    let mut scratch = BackwardScratch::default();
    let mut grad_out = vec![0.0; NUM_BINS];
    let mut total = 0.0;
    for ex in batch {
        model.forward_normalized(&ex.input, ex.code, &mut trace);
        let dist = euclidean(&trace.out, &ex.target);
        total += dist;
        if dist == 0.0 {
            continue;
        }
        for ((g, o), t) in grad_out.iter_mut().zip(&trace.out).zip(&ex.target) {
            *g = (o - t) / dist;
        }
        model.backward_trace(&trace, ex.code, &grad_out, grads, &mut scratch, train_head);
    }
    total
}

/// Mean loss only (normalized units).
pub fn batch_loss(model: &SpectralModel, batch: &[PreparedExample<'_>]) -> f64 {
    let mut trace = Trace::default();
    let total: f64 = batch
        .iter()
        .map(|ex| {
            model.forward_normalized(&ex.input, ex.code, &mut trace);
            euclidean(&trace.out, &ex.target)
        })
        .sum();
    total / batch.len().max(1) as f64
}
