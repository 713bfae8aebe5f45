//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use texsynth::ar_baseline::{build_bank, load_banks, save_banks, synthesize, Grid, SynthConfig};
use texsynth::dataset::{
    extract_examples, import_csv, load_recording, preprocess_actions, split_sections, synthetic_suite, ActionWindow,
    Recording, SplitAssignment, Subset, ACTION_LEN,
};
use texsynth::dsp::{Signal, SpectralFrame, FRAME_LEN, SAMPLE_RATE_HZ};
use texsynth::eval::{
    compare, derive_seed, export_embeddings, write_report_csv, write_summary_json, CompareConfig, Condition,
    EvalMaterial, Predictor,
};
use texsynth::neural::{
    load_model, load_texture_head, save_model, save_texture_head, train_stage1, train_stage2, AdamConfig,
    Architecture, CodeSource, ModelFile, ModelMode, SpectralModel, Stage1Config, TextureHeadFile, TrainConfig,
};
use texsynth::reconstruct::{gla_from_predictions, stitch_sequence, GlaConfig, StitchMode};
use texsynth::texture_repr::{
    load_press_sequence, material_code, save_press_sequence, synthetic_press_sequence, training_descriptors,
    ImageDescriptor, TextureCode,
};
use texsynth::Error;

use crate::config::Config;
use crate::server::{serve, ServeOptions};
use crate::session::ServiceModel;
use crate::{Cli, CliError, Command};

/// Provenance suffix marking recordings whose actions are already filtered.
pub const PREPROCESSED_TAG: &str = "preprocessed: 20 Hz low-pass";
pub const SYNTHETIC_IMAGE_SIZE: u32 = 96;
pub const SYNTHETIC_PRESS_FRAMES: usize = 9;

type CliResult<T> = Result<T, CliError>;

pub fn execute(cli: Cli, env: impl IntoIterator<Item = (String, String)>) -> CliResult<()> {
    let mut config = Config::load(cli.config.as_deref(), env)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match cli.command {
        Command::Ingest(a) => {
            let rec = import_csv(&a.csv, &a.material)?.with_provenance(format!("csv {}", a.csv.display()));
            create_dir(&a.out)?;
            let path = a.out.join(format!("{}.rec", a.material));
            rec.save(&path)?;
            println!("wrote {} ({} samples)", path.display(), rec.len());
        }
        Command::Preprocess(a) => {
            create_dir(&a.out)?;
            for rec in load_recordings(&a.data)? {
                let done = prepared(rec)?;
                done.save(&a.out.join(format!("{}.rec", done.material_id)))?;
            }
        }
        Command::Split(a) => {
            let mut out = BTreeMap::new();
            for rec in load_recordings(&a.data)? {
                let split = split_sections(&rec)?;
                if split.overlap_warning {
                    eprintln!(
                        "warning: {}: a val/test section's mean action lies outside the training sections' range",
                        rec.material_id
                    );
                }
                out.insert(rec.material_id.clone(), split);
            }
            write_json(&a.out, &out)?;
        }
        Command::TrainClassifier(a) => {
            let map = load_descriptor_map(&a.images)?;
            let ids: Vec<String> = map.keys().cloned().collect();
            let mut descriptors = Vec::new();
            let mut labels = Vec::new();
            for (label, descs) in map.values().enumerate() {
                for d in descs {
                    descriptors.push(d.features.clone());
                    labels.push(label);
                }
            }
            let cfg = Stage1Config {
                epochs: a.epochs.unwrap_or(config.classifier.epochs),
                seed: config.seed,
                ..Default::default()
            };
            let outcome = train_stage1(&descriptors, &labels, &cfg)?;
            println!("training accuracy {:.4} after {} steps", outcome.train_accuracy, outcome.steps);
            save_texture_head(
                &TextureHeadFile {
                    material_ids: ids,
                    head: outcome.head,
                    classifier: outcome.classifier,
                },
                &a.out,
            )?;
        }
        Command::Train(a) => train(a, &config)?,
        Command::TrainAr(a) => {
            let order = a.order.unwrap_or(config.ar.order);
            let banks = load_prepared(&a.data)?
                .iter()
                .map(|(rec, split)| build_bank(rec, split, order, Grid::default()))
                .collect::<texsynth::Result<Vec<_>>>()?;
            save_banks(&banks, &a.out)?;
            println!("wrote {} AR banks to {}", banks.len(), a.out.display());
        }
        Command::Synth(a) => synth(a, &config)?,
        Command::Eval(a) => {
            let model = LoadedModel::open(&a.model, a.images.as_deref())?;
            let banks = load_banks(&a.ar_bank)?;
            let materials: Vec<EvalMaterial> = load_prepared(&a.data)?
                .into_iter()
                .map(|(recording, split)| EvalMaterial { recording, split })
                .collect();
            let condition_name = a.condition.unwrap_or(config.eval.condition.clone());
            let condition = Condition::parse(&condition_name)
                .ok_or_else(|| CliError::Usage(format!("unknown condition `{condition_name}`")))?;
            let cfg = CompareConfig {
                runs: a.runs.unwrap_or(config.eval.runs),
                seed: config.seed,
                condition,
                gla: GlaConfig {
                    iterations: config.eval.gla_iterations,
                    ..Default::default()
                },
                synth: synth_config(&config),
            };
            let report = compare(&materials, &model, &banks, &cfg)?;
            write_report_csv(&report, &a.report)?;
            write_summary_json(&report, &summary_path(&a.report))?;
            for row in report.rows.iter().filter(|r| !r.is_ok()) {
                eprintln!("warning: {}: {}", row.material_id, row.error);
            }
            println!(
                "network beats the AR baseline on {}/{} materials",
                report.wins,
                report.rows.len()
            );
        }
        Command::ExportEmbeddings(a) => {
            let loaded = LoadedModel::open(&a.model, a.images.as_deref())?;
            let model = &loaded.file.models[0];
            let mut extra: Vec<(String, TextureCode)> =
                loaded.codes.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
            if let Some(dir) = &a.held_out {
                if model.mode != ModelMode::Descriptor {
                    return Err(CliError::Usage("--held-out needs a descriptor-mode model".into()));
                }
                for (id, descs) in load_descriptor_map(dir)? {
                    extra.push((id.clone(), material_code(model, &id, &descs)?));
                }
            }
            let ids = if model.mode == ModelMode::Descriptor {
                Vec::new()
            } else {
                model.material_ids.clone()
            };
            let table = export_embeddings(model, &ids, &extra)?;
            table.write_csv(&a.out)?;
            println!("wrote {} rows to {}", table.rows.len(), a.out.display());
        }
        Command::GenSynthetic(a) => {
            if a.materials == 0 || !(a.seconds > 0.0) {
                return Err(CliError::Usage("need at least one material and a positive duration".into()));
            }
            let len = (a.seconds * SAMPLE_RATE_HZ).round() as usize;
            let suite = synthetic_suite(a.materials, config.seed);
            create_dir(&a.out)?;
            for m in &suite {
                m.render(len)?.save(&a.out.join(format!("{}.rec", m.material_id)))?;
                if a.images {
                    let seq = synthetic_press_sequence(m, SYNTHETIC_IMAGE_SIZE, SYNTHETIC_PRESS_FRAMES)?;
                    save_press_sequence(&seq, &a.out.join("images").join(&m.material_id))?;
                }
            }
            write_json(&a.out.join("materials.json"), &suite)?;
            println!("wrote {} synthetic recordings to {}", suite.len(), a.out.display());
        }
        Command::Serve(a) => {
            let loaded = LoadedModel::open(&a.model, a.images.as_deref())?;
            let model = Arc::new(ServiceModel::new(loaded.file, loaded.codes)?);
            let static_dir = a
                .static_dir
                .or_else(|| (!config.serve.static_dir.is_empty()).then(|| PathBuf::from(&config.serve.static_dir)));
            let options = ServeOptions {
                audio_queue: config.serve.audio_queue,
                spectrum_queue: config.serve.spectrum_queue,
                static_dir,
                seed: config.seed,
            };
            let host = a.host.unwrap_or(config.serve.host.clone());
            let port = a.port.unwrap_or(config.serve.port);
            let addr: std::net::SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| CliError::Usage(format!("bad address {host}:{port}: {e}")))?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
            runtime
                .block_on(serve(model, options, addr))
                .map_err(|e| Error::io(format!("{addr}"), e))?;
        }
    }
    Ok(())
}

fn train(a: crate::TrainArgs, config: &Config) -> CliResult<()> {
    let mode = ModelMode::parse(&a.mode).ok_or_else(|| CliError::Usage(format!("unknown mode `{}`", a.mode)))?;
    let data = load_prepared(&a.data)?;
    let ids: Vec<String> = data.iter().map(|(r, _)| r.material_id.clone()).collect();
    let cfg = TrainConfig {
        max_epochs: a.epochs.unwrap_or(config.train.epochs),
        batch_size: config.train.batch_size,
        adam: AdamConfig {
            learning_rate: config.train.learning_rate,
            ..Default::default()
        },
        patience: config.train.patience,
        seed: config.seed,
        final_lr_fraction: config.train.final_lr_fraction,
    };
    let examples = |subset| -> Vec<_> {
        data.iter()
            .flat_map(|(rec, split)| extract_examples(rec, split, subset))
            .collect()
    };
    let arch = Architecture::default();
    let file = match mode {
        ModelMode::Embedding => {
            let model = SpectralModel::new(mode, ids, arch, config.seed)?;
            let out = train_stage2(model, &examples(Subset::Train), &examples(Subset::Val), CodeSource::Embedding, &cfg)?;
            report_training("unified", &out);
            ModelFile::single(out.model)
        }
        ModelMode::Descriptor => {
            let (Some(head), Some(images)) = (&a.head, &a.images) else {
                return Err(CliError::Usage("descriptor mode needs --head and --images".into()));
            };
            let head = load_texture_head(head)?;
            let map = load_descriptor_map(images)?;
            if let Some(missing) = ids.iter().find(|id| !map.contains_key(*id)) {
                return Err(Error::UnknownMaterial(format!("{missing} (no press sequence)")).into());
            }
            let model = SpectralModel::with_head(ids, arch, head.head, config.seed)?;
            let out = train_stage2(
                model,
                &examples(Subset::Train),
                &examples(Subset::Val),
                CodeSource::Descriptors(&map),
                &cfg,
            )?;
            report_training("descriptor", &out);
            ModelFile::single(out.model)
        }
        ModelMode::PerMaterial => {
            let mut models = Vec::new();
            for (i, (rec, split)) in data.iter().enumerate() {
                let seed = derive_seed(config.seed, i as u64, 0);
                let model = SpectralModel::new(mode, vec![rec.material_id.clone()], arch, seed)?;
                let out = train_stage2(
                    model,
                    &extract_examples(rec, split, Subset::Train),
                    &extract_examples(rec, split, Subset::Val),
                    CodeSource::None,
                    &TrainConfig { seed, ..cfg },
                )?;
                report_training(&rec.material_id, &out);
                models.push(out.model);
            }
            ModelFile { models }
        }
    };
    save_model(&file, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn report_training(label: &str, out: &texsynth::neural::TrainOutcome) {
    let best = &out.history[out.best_epoch];
    println!(
        "{label}: {} epochs, best epoch {} (train {:.4}, val {}), {} steps",
        out.history.len(),
        out.best_epoch,
        best.train_loss,
        best.val_loss.map_or("n/a".to_string(), |v| format!("{v:.4}")),
        out.steps
    );
}

fn synth(a: crate::SynthArgs, config: &Config) -> CliResult<()> {
    let (force, speed) = match &a.actions {
        Some(path) => read_actions(path)?,
        None => {
            let len = (a.seconds * SAMPLE_RATE_HZ).round() as usize;
            (vec![a.force; len], vec![a.speed; len])
        }
    };
    let len = force.len();
    let actions = preprocess_actions(&Recording::new(&a.material, force, speed, vec![0.0; len])?)?;
    let (f, v) = (&actions.force_n.samples, &actions.speed_mm_s.samples);
    let signal = if a.method == "ar" {
        let bank_path = a.ar_bank.as_ref().expect("clap requires --ar-bank");
        let banks = load_banks(bank_path)?;
        let bank = banks
            .iter()
            .find(|b| b.material_id == a.material)
            .ok_or_else(|| Error::UnknownMaterial(a.material.clone()))?;
        synthesize(bank, f, v, config.seed, synth_config(config))?
    } else {
        let model_path = a.model.as_ref().expect("clap requires --model");
        let model = LoadedModel::open(model_path, a.images.as_deref())?;
        let hop = if a.method == "gla" { GlaConfig::default().hop } else { 100 };
        if len == 0 {
            return Err(Error::TooShort { needed: 1, actual: 0 }.into());
        }
        // Hold the first action as history for sample 0 and the last one
        // until the final frame is complete, so output sample i lines up
        // with action sample i.
        // GLA overlap-adds whole frames; the stitcher emits one hop per frame.
        let frames_needed = if a.method == "gla" {
            len.saturating_sub(FRAME_LEN).div_ceil(hop) + 1
        } else {
            len.div_ceil(hop)
        }
        .max(2);
        let padded_len = ACTION_LEN + (frames_needed - 1) * hop + FRAME_LEN;
        let pad = |x: &[f64]| -> Vec<f64> {
            let mut out = vec![x[0]; ACTION_LEN];
            out.extend_from_slice(x);
            out.resize(padded_len, x[x.len() - 1]);
            out
        };
        let (pf, pv) = (pad(f), pad(v));
        let frames = (0..frames_needed)
            .map(|k| model.predict(&a.material, &ActionWindow::ending_at(&pf, &pv, ACTION_LEN + k * hop)))
            .collect::<texsynth::Result<Vec<SpectralFrame>>>()?;
        let mut signal = if a.method == "gla" {
            let cfg = GlaConfig {
                iterations: config.eval.gla_iterations,
                phase_seed: config.seed,
                ..Default::default()
            };
            gla_from_predictions(&frames, &cfg)?.signal
        } else {
            stitch_sequence(&frames, hop, StitchMode::Coherent, config.seed)?
        };
        signal.samples.truncate(len);
        signal
    };
    write_signal_csv(&signal, &a.out)?;
    println!("wrote {} samples to {}", signal.len(), a.out.display());
    Ok(())
}

fn synth_config(config: &Config) -> SynthConfig {
    SynthConfig {
        neighbours: config.ar.neighbours,
        refresh: config.ar.refresh,
    }
}

/// A model file plus codes for descriptor-mode models.
pub struct LoadedModel {
    pub file: ModelFile,
    pub codes: BTreeMap<String, TextureCode>,
}

impl LoadedModel {
    pub fn open(path: &Path, images: Option<&Path>) -> CliResult<Self> {
        let file = load_model(path, None)?;
        let mut codes = BTreeMap::new();
        if file.mode() == Some(ModelMode::Descriptor) {
            let dir = images.ok_or_else(|| CliError::Usage("a descriptor-mode model needs --images".into()))?;
            for (id, descs) in load_descriptor_map(dir)? {
                let code = material_code(&file.models[0], &id, &descs)?;
                codes.insert(id, code);
            }
        }
        Ok(Self { file, codes })
    }
}

impl Predictor for LoadedModel {
    fn predict(&self, material_id: &str, action: &ActionWindow) -> texsynth::Result<SpectralFrame> {
        if self.file.mode() == Some(ModelMode::Descriptor) {
            let code = self
                .codes
                .get(material_id)
                .ok_or_else(|| Error::UnknownMaterial(material_id.to_string()))?;
            self.file.models[0].forward(action, Some(code))
        } else {
            self.file.predict(material_id, action)
        }
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e).into())
}

pub fn summary_path(report: &Path) -> PathBuf {
    report.with_extension("summary.json")
}

/// `.rec` files of `dir`, sorted by name.
pub fn recording_paths(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "rec"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Empty("recordings directory").into());
    }
    Ok(paths)
}

pub fn load_recordings(dir: &Path) -> CliResult<Vec<Recording>> {
    recording_paths(dir)?
        .iter()
        .map(|p| load_recording(p).map_err(CliError::from))
        .collect()
}

fn prepared(rec: Recording) -> texsynth::Result<Recording> {
    if rec.provenance.contains(PREPROCESSED_TAG) {
        return Ok(rec);
    }
    let provenance = if rec.provenance.is_empty() {
        PREPROCESSED_TAG.to_string()
    } else {
        format!("{}; {PREPROCESSED_TAG}", rec.provenance)
    };
    Ok(preprocess_actions(&rec)?.with_provenance(provenance))
}

/// Recordings with filtered actions and their splits. Raw recordings are
/// preprocessed on the fly.
pub fn load_prepared(dir: &Path) -> CliResult<Vec<(Recording, SplitAssignment)>> {
    load_recordings(dir)?
        .into_iter()
        .map(|rec| {
            let rec = prepared(rec)?;
            let split = split_sections(&rec)?;
            Ok((rec, split))
        })
        .collect()
}

/// Training descriptors of every press sequence under `dir`, keyed by
/// subdirectory name.
pub fn load_descriptor_map(dir: &Path) -> CliResult<BTreeMap<String, Vec<ImageDescriptor>>> {
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    let mut map = BTreeMap::new();
    for sub in subdirs {
        let id = sub.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let seq = load_press_sequence(&sub, &id)?;
        map.insert(id, training_descriptors(&seq)?);
    }
    if map.is_empty() {
        return Err(Error::Empty("press sequences").into());
    }
    Ok(map)
}

fn read_actions(path: &Path) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let bad = |reason: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let (fi, si) = (col("force")?, col("speed")?);
    let (mut force, mut speed) = (Vec::new(), Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| -> texsynth::Result<f64> {
            let field = record.get(i).unwrap_or("");
            field
                .parse()
                .map_err(|_| bad(format!("row {}: `{field}` is not a number", row + 1)))
        };
        force.push(num(fi)?);
        speed.push(num(si)?);
    }
    Ok((force, speed))
}

fn write_signal_csv(signal: &Signal, path: &Path) -> CliResult<()> {
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["t", "accel"]).map_err(io)?;
    for (i, v) in signal.samples.iter().enumerate() {
        w.write_record([(i as f64 / SAMPLE_RATE_HZ).to_string(), v.to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e).into())
}
