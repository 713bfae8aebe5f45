//! Model files.
//!
//! Both formats use the checksummed container from [`crate::container`].
//!
//! Model file (`TXSYNMDL`, version 1), after the header:
//!
//! ```text
//! u64 model count
//! per model:
//!   str  mode ("embedding" | "descriptor" | "per-material")
//!   u64  material count, then that many str material ids
//!   u64  action_hidden, u64 predictor_hidden
//!   f64s input_mean, f64s input_std, f64 output_scale
//!   u64  tensor count
//!   per tensor: str name, u64 rows, u64 cols, f64s values
//! ```
//!
//! Texture head file (`TXSYNHED`, version 1): material ids, then the head and
//! classifier tensors in the same tensor encoding.
//!
//! `str` is a u32 byte length followed by UTF-8; `f64s` is a u64 count
//! followed by little-endian values.

use std::path::Path;

use super::layers::Dense;
use super::train::ClassifierHead;
use super::{Architecture, ModelMode, Normalization, SpectralModel, TextureEncoder, TextureHead};
use crate::container::{Reader, Writer};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"TXSYNMDL";
pub const MODEL_VERSION: u32 = 1;
pub const HEAD_MAGIC: &[u8; 8] = b"TXSYNHED";
pub const HEAD_VERSION: u32 = 1;

/// One unified model, or one model per material.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub models: Vec<SpectralModel>,
}

impl ModelFile {
    pub fn single(model: SpectralModel) -> Self {
        Self { models: vec![model] }
    }

    pub fn mode(&self) -> Option<ModelMode> {
        self.models.first().map(|m| m.mode)
    }

    pub fn material_ids(&self) -> Vec<String> {
        self.models.iter().flat_map(|m| m.material_ids.iter().cloned()).collect()
    }

    /// The model covering `material_id`.
    pub fn model_for(&self, material_id: &str) -> Result<&SpectralModel> {
        self.models
            .iter()
            .find(|m| m.material_ids.iter().any(|id| id == material_id))
            .ok_or_else(|| Error::UnknownMaterial(material_id.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MODEL_MAGIC, MODEL_VERSION);
        w.u64(self.models.len() as u64);
        for m in &self.models {
            w.str(m.mode.as_str());
            w.u64(m.material_ids.len() as u64);
            for id in &m.material_ids {
                w.str(id);
            }
            w.u64(m.arch.action_hidden as u64);
            w.u64(m.arch.predictor_hidden as u64);
            w.f64s(&m.norm.input_mean);
            w.f64s(&m.norm.input_std);
            w.f64(m.norm.output_scale);
            let tensors = m.params.tensors();
            w.u64(tensors.len() as u64);
            for ((name, values), (rows, cols)) in tensors.iter().zip(tensor_shapes(m)) {
                w.str(name);
                w.u64(rows as u64);
                w.u64(cols as u64);
                w.f64s(values);
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::open(bytes, MODEL_MAGIC, MODEL_VERSION)?;
        let malformed = |reason: String| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason,
        };
        let count = r.u64()? as usize;
        let mut models = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let mode_str = r.str()?;
            let mode = ModelMode::parse(&mode_str).ok_or_else(|| malformed(format!("unknown mode {mode_str:?}")))?;
            let n = r.u64()? as usize;
            let ids = (0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
            let arch = Architecture {
                action_hidden: r.u64()? as usize,
                predictor_hidden: r.u64()? as usize,
            };
            let mut model = SpectralModel::new(mode, ids, arch, 0)?;
            model.norm = Normalization {
                input_mean: r.f64s()?,
                input_std: r.f64s()?,
                output_scale: r.f64()?,
            };
            let shapes = tensor_shapes(&model);
            let names: Vec<String> = model.params.tensors().into_iter().map(|(n, _)| n).collect();
            let stored = r.u64()? as usize;
            if stored != names.len() {
                return Err(malformed(format!("expected {} tensors, found {stored}", names.len())));
            }
            for (i, (name, shape)) in names.iter().zip(shapes).enumerate() {
                let got = r.str()?;
                let rows = r.u64()? as usize;
                let cols = r.u64()? as usize;
                if &got != name || (rows, cols) != shape {
                    return Err(malformed(format!("tensor {got} {rows}x{cols}, expected {name} {}x{}", shape.0, shape.1)));
                }
                let values = r.f64s()?;
                if values.len() != rows * cols {
                    return Err(malformed(format!("tensor {name} holds {} values", values.len())));
                }
                model.params.tensors_mut()[i].copy_from_slice(&values);
            }
            models.push(model);
        }
        if !r.is_done() {
            return Err(malformed("trailing bytes after the last model".into()));
        }
        Ok(Self { models })
    }
}

/// (rows, cols) of every tensor, in `Params::tensors` order.
fn tensor_shapes(m: &SpectralModel) -> Vec<(usize, usize)> {
    let dense = |d: &Dense| [(d.outputs, d.inputs), (d.outputs, 1)];
    let mut out = Vec::new();
    for l in &m.params.action {
        out.extend(dense(l));
    }
    match &m.params.texture {
        TextureEncoder::Embedding(t) => out.push((m.material_ids.len(), t.len() / m.material_ids.len().max(1))),
        TextureEncoder::Head(h) => h.layers.iter().for_each(|l| out.extend(dense(l))),
        TextureEncoder::None => {}
    }
    for l in &m.params.predictor {
        out.extend(dense(l));
    }
    out
}

pub fn save_model(file: &ModelFile, path: &Path) -> Result<()> {
    std::fs::write(path, file.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Loads a model file; with `expected` set, a file of another mode is a
/// mode-mismatch error.
pub fn load_model(path: &Path, expected: Option<ModelMode>) -> Result<ModelFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let file = ModelFile::from_bytes(&bytes, path)?;
    if let (Some(want), Some(found)) = (expected, file.mode()) {
        if want != found {
            return Err(Error::ModeMismatch {
                found: found.to_string(),
                requested: want.to_string(),
            });
        }
    }
    Ok(file)
}

/// Output of classification pre-training.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureHeadFile {
    pub material_ids: Vec<String>,
    pub head: TextureHead,
    pub classifier: ClassifierHead,
}

fn write_dense(w: &mut Writer, d: &Dense) {
    w.u64(d.inputs as u64);
    w.u64(d.outputs as u64);
    w.f64s(&d.weight);
    w.f64s(&d.bias);
}

fn read_dense(r: &mut Reader<'_>, path: &Path) -> Result<Dense> {
    let inputs = r.u64()? as usize;
    let outputs = r.u64()? as usize;
    let weight = r.f64s()?;
    let bias = r.f64s()?;
    if weight.len() != inputs * outputs || bias.len() != outputs {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "layer shape does not match its data".into(),
        });
    }
    Ok(Dense {
        inputs,
        outputs,
        weight,
        bias,
    })
}

pub fn save_texture_head(file: &TextureHeadFile, path: &Path) -> Result<()> {
    let mut w = Writer::new(HEAD_MAGIC, HEAD_VERSION);
    w.u64(file.material_ids.len() as u64);
    for id in &file.material_ids {
        w.str(id);
    }
    for l in file.head.layers.iter().chain(&file.classifier.layers) {
        write_dense(&mut w, l);
    }
    std::fs::write(path, w.finish()).map_err(|e| Error::io(path, e))
}

pub fn load_texture_head(path: &Path) -> Result<TextureHeadFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::open(&bytes, HEAD_MAGIC, HEAD_VERSION)?;
    let n = r.u64()? as usize;
    let material_ids = (0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let mut layers = (0..4).map(|_| read_dense(&mut r, path)).collect::<Result<Vec<_>>>()?.into_iter();
    let mut next = || layers.next().expect("four layers read");
    Ok(TextureHeadFile {
        material_ids,
        head: TextureHead {
            layers: [next(), next()],
        },
        classifier: ClassifierHead {
            layers: [next(), next()],
        },
    })
}
