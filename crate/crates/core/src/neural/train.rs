use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{relu_inplace, relu_mask, Dense};
use super::{
    accumulate_batch, euclidean, AdamConfig, AdamState, CodeRef, ModelMode, Params, PreparedExample,
    SpectralModel, TextureEncoder, TextureHead, Trace, CODE_DIM,
};
use crate::dataset::TrainingExample;
use crate::error::{Error, Result};
use crate::texture_repr::{ImageDescriptor, DESCRIPTOR_DIM};

/// Examples per gradient work unit. Partial sums are reduced in chunk order
/// so results do not depend on the thread count.
const CHUNK: usize = 16;

// ---------------------------------------------------------------- stage 1

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage1Config {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// `code -> ReLU -> 128 -> ReLU -> classes`, trained with cross-entropy on
/// top of the texture head.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub layers: [Dense; 2],
}

impl ClassifierHead {
    pub fn classes(&self) -> usize {
        self.layers[1].outputs
    }

    pub fn logits(&self, head: &TextureHead, descriptor: &[f64]) -> Vec<f64> {
        let mut c = Stage1Trace::default();
        stage1_forward(head, self, descriptor, &mut c);
        c.logits
    }

    pub fn predict(&self, head: &TextureHead, descriptor: &[f64]) -> usize {
        crate::dsp::argmax(&self.logits(head, descriptor))
    }
}

#[derive(Debug, Clone)]
pub struct Stage1Outcome {
    pub head: TextureHead,
    pub classifier: ClassifierHead,
    /// Mean cross-entropy per epoch.
    pub losses: Vec<f64>,
    pub train_accuracy: f64,
    pub steps: usize,
}

#[derive(Debug, Default)]
struct Stage1Trace {
    hidden: Vec<f64>,
    code: Vec<f64>,
    z1: Vec<f64>,
    logits: Vec<f64>,
}

fn stage1_forward(head: &TextureHead, cls: &ClassifierHead, d: &[f64], t: &mut Stage1Trace) {
    t.hidden.resize(CODE_DIM, 0.0);
    head.layers[0].forward(d, &mut t.hidden);
    relu_inplace(&mut t.hidden);
    t.code.resize(CODE_DIM, 0.0);
    head.layers[1].forward(&t.hidden, &mut t.code);
    relu_inplace(&mut t.code);
    t.z1.resize(cls.layers[0].outputs, 0.0);
    cls.layers[0].forward(&t.code, &mut t.z1);
    relu_inplace(&mut t.z1);
    t.logits.resize(cls.classes(), 0.0);
    cls.layers[1].forward(&t.z1, &mut t.logits);
}

fn softmax_cross_entropy(logits: &[f64], label: usize, grad: &mut Vec<f64>) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    grad.clear();
    grad.extend(logits.iter().map(|z| (z - max).exp() / sum));
    grad[label] -= 1.0;
    sum.ln() + max - logits[label]
}

type Stage1Params = (TextureHead, ClassifierHead);

fn stage1_tensors_mut(p: &mut Stage1Params) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> = Vec::new();
    for l in p.0.layers.iter_mut().chain(p.1.layers.iter_mut()) {
        out.push(&mut l.weight);
        out.push(&mut l.bias);
    }
    out
}

fn stage1_zeros(p: &Stage1Params) -> Stage1Params {
    (
        TextureHead {
            layers: [p.0.layers[0].zeros_like(), p.0.layers[1].zeros_like()],
        },
        ClassifierHead {
            layers: [p.1.layers[0].zeros_like(), p.1.layers[1].zeros_like()],
        },
    )
}

/// Pre-trains the descriptor head as a material classifier.
pub fn train_stage1(descriptors: &[Vec<f64>], labels: &[usize], config: &Stage1Config) -> Result<Stage1Outcome> {
    if descriptors.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "stage-1 labels",
            expected: descriptors.len(),
            actual: labels.len(),
        });
    }
    if let Some(bad) = descriptors.iter().find(|d| d.len() != DESCRIPTOR_DIM) {
        return Err(Error::LengthMismatch {
            what: "descriptor",
            expected: DESCRIPTOR_DIM,
            actual: bad.len(),
        });
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let distinct: std::collections::BTreeSet<_> = labels.iter().collect();
    if distinct.len() < 2 {
        return Err(Error::invalid("stage-1 training needs at least two classes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params: Stage1Params = (
        TextureHead::init(&mut rng),
        ClassifierHead {
            layers: [Dense::init(CODE_DIM, 128, &mut rng), Dense::init(128, classes, &mut rng)],
        },
    );
    let shapes: Vec<usize> = stage1_tensors_mut(&mut params).iter().map(|t| t.len()).collect();
    let mut adam = AdamState::new(config.adam, &shapes);
    let frozen = vec![false; shapes.len()];
    let mut order: Vec<usize> = (0..descriptors.len()).collect();
    let batch_size = config.batch_size.max(1);
    let mut losses = Vec::with_capacity(config.epochs);
    let mut steps = 0;
    let (mut t, mut g_logits, mut g_z1, mut g_code, mut g_hidden) =
        (Stage1Trace::default(), Vec::new(), vec![], vec![], vec![]);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(batch_size) {
            let mut grads = stage1_zeros(&params);
            for &i in batch {
                let (head, cls) = &params;
                stage1_forward(head, cls, &descriptors[i], &mut t);
                epoch_loss += softmax_cross_entropy(&t.logits, labels[i], &mut g_logits);
                g_z1.resize(t.z1.len(), 0.0);
                cls.layers[1].backward(&t.z1, &g_logits, &mut grads.1.layers[1], Some(&mut g_z1));
                relu_mask(&mut g_z1, &t.z1);
                g_code.resize(CODE_DIM, 0.0);
                cls.layers[0].backward(&t.code, &g_z1, &mut grads.1.layers[0], Some(&mut g_code));
                relu_mask(&mut g_code, &t.code);
                g_hidden.resize(CODE_DIM, 0.0);
                head.layers[1].backward(&t.hidden, &g_code, &mut grads.0.layers[1], Some(&mut g_hidden));
                relu_mask(&mut g_hidden, &t.hidden);
                head.layers[0].backward(&descriptors[i], &g_hidden, &mut grads.0.layers[0], None);
            }
            let scale = 1.0 / batch.len() as f64;
            let mut g = stage1_tensors_mut(&mut grads);
            g.iter_mut().for_each(|t| t.iter_mut().for_each(|v| *v *= scale));
            let g: Vec<&[f64]> = g.into_iter().map(|t| &*t).collect();
            adam.update(&mut stage1_tensors_mut(&mut params), &g, &frozen);
            steps += 1;
        }
        losses.push(epoch_loss / descriptors.len() as f64);
    }
    let (head, classifier) = params;
    let correct = descriptors
        .iter()
        .zip(labels)
        .filter(|(d, &l)| classifier.predict(&head, d) == l)
        .count();
    Ok(Stage1Outcome {
        train_accuracy: correct as f64 / descriptors.len() as f64,
        head,
        classifier,
        losses,
        steps,
    })
}

// ---------------------------------------------------------------- stage 2

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Learning rate at the last scheduled step as a fraction of the
    /// initial one, reached along a half cosine. 1 keeps it constant.
    pub final_lr_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            batch_size: 64,
            adam: AdamConfig::default(),
            patience: 20,
            seed: 0,
            final_lr_fraction: 1.0,
        }
    }
}

impl TrainConfig {
    /// Learning rate for update `step` (0-based) of `total`.
    pub fn learning_rate_at(&self, step: usize, total: usize) -> f64 {
        let lr = self.adam.learning_rate;
        if self.final_lr_fraction == 1.0 || total <= 1 {
            return lr;
        }
        let progress = (step as f64 / (total - 1) as f64).min(1.0);
        let f = self.final_lr_fraction;
        lr * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
    }
}

/// How each example's texture input is resolved.
#[derive(Debug, Clone, Copy)]
pub enum CodeSource<'a> {
    /// Learned table rows, indexed by the example's material.
    Embedding,
    /// Descriptors per material pushed through the frozen head; examples
    /// cycle through a material's descriptors.
    Descriptors(&'a BTreeMap<String, Vec<ImageDescriptor>>),
    /// Per-material models.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches (normalized units).
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation checkpoint (best training loss without a validation set).
    pub model: SpectralModel,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub steps: usize,
    /// Mean loss on the training set before the first update.
    pub initial_train_loss: f64,
}

fn prepare<'a>(
    model: &SpectralModel,
    examples: &[TrainingExample],
    codes: &'a BTreeMap<String, Vec<Vec<f64>>>,
) -> Result<Vec<PreparedExample<'a>>> {
    let scale = 1.0 / model.norm.output_scale;
    examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let code = match model.mode {
                ModelMode::Embedding => CodeRef::Material(model.material_index(&ex.material_id)?),
                ModelMode::Descriptor => {
                    let list = codes
                        .get(&ex.material_id)
                        .ok_or_else(|| Error::UnknownMaterial(ex.material_id.clone()))?;
                    CodeRef::Code(&list[i % list.len()])
                }
                ModelMode::PerMaterial => {
                    model.material_index(&ex.material_id)?;
                    CodeRef::None
                }
            };
            Ok(PreparedExample {
                input: model.norm.apply(&ex.action),
                code,
                target: ex.target.mags.iter().map(|m| m * scale).collect(),
            })
        })
        .collect()
}

/// Sum of losses and gradients over `batch`, reduced chunk by chunk in order.
fn chunked_gradient(model: &SpectralModel, batch: &[PreparedExample<'_>]) -> (f64, Params) {
    let work = |chunk: &[PreparedExample<'_>]| {
        let mut g = model.params.zeros_like();
        let l = accumulate_batch(model, chunk, &mut g, false);
        (l, g)
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<(f64, Params)> = {
        use rayon::prelude::*;
        batch.par_chunks(CHUNK).map(work).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<(f64, Params)> = batch.chunks(CHUNK).map(work).collect();
    let mut iter = parts.into_iter();
    let (mut loss, mut grads) = iter.next().unwrap_or_else(|| (0.0, model.params.zeros_like()));
    for (l, g) in iter {
        loss += l;
        grads.add_assign(&g);
    }
    (loss, grads)
}

/// Mean loss over a prepared set, reduced in chunk order.
fn mean_loss(model: &SpectralModel, set: &[PreparedExample<'_>]) -> f64 {
    let work = |chunk: &[PreparedExample<'_>]| {
        let mut t = Trace::default();
        chunk
            .iter()
            .map(|ex| {
                model.forward_normalized(&ex.input, ex.code, &mut t);
                euclidean(&t.out, &ex.target)
            })
            .sum::<f64>()
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<f64> = {
        use rayon::prelude::*;
        set.par_chunks(CHUNK * 4).map(work).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<f64> = set.chunks(CHUNK * 4).map(work).collect();
    parts.into_iter().sum::<f64>() / set.len().max(1) as f64
}

/// Trains the action encoder, code table (embedding mode) and predictor with
/// Adam on the mean Euclidean spectral loss. In descriptor mode the texture
/// head is frozen. Input standardization and the output scale are fitted on
/// `train` and stored in the returned model.
pub fn train_stage2(
    mut model: SpectralModel,
    train: &[TrainingExample],
    val: &[TrainingExample],
    source: CodeSource<'_>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let source_ok = matches!(
        (model.mode, source),
        (ModelMode::Embedding, CodeSource::Embedding)
            | (ModelMode::Descriptor, CodeSource::Descriptors(_))
            | (ModelMode::PerMaterial, CodeSource::None)
    );
    if !source_ok {
        return Err(Error::invalid(format!("code source does not fit a {} model", model.mode)));
    }
    if !(0.0..=1.0).contains(&config.final_lr_fraction) {
        return Err(Error::invalid(format!(
            "final learning-rate fraction {} outside [0, 1]",
            config.final_lr_fraction
        )));
    }
    model.norm = super::Normalization::fit(train.iter().map(|e| &e.action), train.iter().map(|e| &e.target));

    let mut codes: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    if let CodeSource::Descriptors(map) = source {
        for (id, descs) in map {
            if descs.is_empty() {
                return Err(Error::Empty("material descriptors"));
            }
            let list = descs
                .iter()
                .map(|d| model.encode_descriptor(d).map(|c| c.0))
                .collect::<Result<Vec<_>>>()?;
            codes.insert(id.clone(), list);
        }
    }
    let train_set = prepare(&model, train, &codes)?;
    let val_set = prepare(&model, val, &codes)?;

    let names: Vec<String> = model.params.tensors().into_iter().map(|(n, _)| n).collect();
    let shapes: Vec<usize> = model.params.tensors().iter().map(|(_, t)| t.len()).collect();
    let frozen: Vec<bool> = names.iter().map(|n| n.starts_with("texture_head")).collect();
    let mut adam = AdamState::new(config.adam, &shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let batch_size = config.batch_size.max(1);
    let total_steps = config.max_epochs * train_set.len().div_ceil(batch_size);

    let initial_train_loss = mean_loss(&model, &train_set);
    let mut best = (f64::INFINITY, 0usize, model.params.clone());
    let mut history = Vec::new();
    let mut steps = 0;
    let mut batch: Vec<PreparedExample<'_>> = Vec::with_capacity(batch_size);
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for idx in order.chunks(batch_size) {
            batch.clear();
            batch.extend(idx.iter().map(|&i| train_set[i].clone()));
            let (loss, mut grads) = chunked_gradient(&model, &batch);
            epoch_loss += loss;
            grads.scale(1.0 / batch.len() as f64);
            let g = grads.tensors();
            let g: Vec<&[f64]> = g.iter().map(|(_, t)| *t).collect();
            adam.config.learning_rate = config.learning_rate_at(steps, total_steps);
            adam.update(&mut model.params.tensors_mut(), &g, &frozen);
            steps += 1;
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let val_loss = (!val_set.is_empty()).then(|| mean_loss(&model, &val_set));
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        let score = val_loss.unwrap_or(train_loss);
        if score < best.0 {
            best = (score, epoch, model.params.clone());
        } else if epoch - best.1 >= config.patience {
            break;
        }
    }
    // The score of the last epoch is measured after its updates, the
    // training loss during them; without validation the final weights are
    // kept when they are at least as good as the recorded best.
    if val_set.is_empty() && mean_loss(&model, &train_set) <= best.0 {
        best = (best.0, history.len().saturating_sub(1), model.params.clone());
    }
    model.params = best.2;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: best.1,
        steps,
        initial_train_loss,
    })
}

impl SpectralModel {
    /// Descriptor-mode model around a pre-trained head.
    pub fn with_head(material_ids: Vec<String>, arch: super::Architecture, head: TextureHead, seed: u64) -> Result<Self> {
        let mut m = SpectralModel::new(ModelMode::Descriptor, material_ids, arch, seed)?;
        m.params.texture = TextureEncoder::Head(head);
        Ok(m)
    }
}
