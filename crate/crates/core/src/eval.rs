//! Short-time spectral distance, model-versus-baseline comparison and
//! embedding export.
//!
//! Comparison CSV columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `material_id` | material |
//! | `ar_mean_distance` | mean over runs of the AR per-run mean window distance |
//! | `nn_mean_distance` | mean window distance of the network output |
//! | `delta` | `ar_mean_distance - nn_mean_distance`; positive favours the network |
//! | `runs` | AR synthesis runs |
//! | `windows` | evaluated windows per run |
//! | `nn_q25`, `nn_median`, `nn_q75` | network quartiles over windows |
//! | `ar_q25`, `ar_median`, `ar_q75` | AR quartiles over windows, pooled over runs |
//! | `ar_run_q25`, `ar_run_median`, `ar_run_q75` | AR quartiles over per-run means |
//! | `error` | empty, or why the material could not be evaluated |
//!
//! The JSON summary (`schema_version` 1) holds the condition, seed, run
//! count, material count, win count and the mean of each distance column.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ar_baseline::{synthesize, ArBank, SynthConfig};
use crate::dataset::{ActionWindow, Recording, SplitAssignment, Subset, ACTION_LEN};
use crate::dsp::{frame_at, Signal, SpectralFrame, FRAME_LEN, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};
use crate::neural::{euclidean, ModelFile, ModelMode, SpectralModel};
use crate::reconstruct::{gla_from_predictions, stitch_sequence, GlaConfig, StitchMode};
use crate::texture_repr::TextureCode;

pub const EVAL_HOP: usize = 100;
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDistanceReport {
    pub distances: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl SpectralDistanceReport {
    pub fn from_distances(distances: Vec<f64>) -> Self {
        let mut sorted = distances.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let mean = if distances.is_empty() {
            f64::NAN
        } else {
            distances.iter().sum::<f64>() / distances.len() as f64
        };
        Self {
            mean,
            median: quantile(&sorted, 0.5),
            q25: quantile(&sorted, 0.25),
            q75: quantile(&sorted, 0.75),
            distances,
        }
    }
}

/// Window starts `0, 100, 200, ...` of every full 1000-sample window.
pub fn window_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..).step_by(EVAL_HOP).take_while(move |s| s + FRAME_LEN <= len)
}

/// Euclidean distance between the <= 1 kHz magnitudes of each pair of
/// rectangular 1000-sample windows, stepped by 100 samples.
pub fn spectral_distance(pred: &Signal, truth: &Signal) -> Result<SpectralDistanceReport> {
    for s in [pred, truth] {
        if s.sample_rate_hz != SAMPLE_RATE_HZ {
            return Err(Error::UnsupportedRate(s.sample_rate_hz));
        }
    }
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "spectral distance operands",
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    if truth.len() < FRAME_LEN {
        return Err(Error::TooShort {
            needed: FRAME_LEN,
            actual: truth.len(),
        });
    }
    let distances = window_starts(truth.len())
        .map(|t| {
            euclidean(
                &frame_at(&pred.samples, t).mags,
                &frame_at(&truth.samples, t).mags,
            )
        })
        .collect();
    Ok(SpectralDistanceReport::from_distances(distances))
}

/// Source of network predictions for a material.
pub trait Predictor: Sync {
    fn predict(&self, material_id: &str, action: &ActionWindow) -> Result<SpectralFrame>;
}

impl Predictor for ModelFile {
    fn predict(&self, material_id: &str, action: &ActionWindow) -> Result<SpectralFrame> {
        self.model_for(material_id)?.predict_material(action, material_id)
    }
}

/// A descriptor-mode model together with a code per material.
pub struct CodedModel<'a> {
    pub model: &'a SpectralModel,
    pub codes: BTreeMap<String, TextureCode>,
}

impl Predictor for CodedModel<'_> {
    fn predict(&self, material_id: &str, action: &ActionWindow) -> Result<SpectralFrame> {
        let code = self
            .codes
            .get(material_id)
            .ok_or_else(|| Error::UnknownMaterial(material_id.to_string()))?;
        self.model.forward(action, Some(code))
    }
}

/// How network predictions become a comparable signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    /// Fast-GLA reconstruction of predictions spaced by the GLA hop.
    Gla,
    /// Raw predicted frames against the true window magnitudes.
    Frames,
    /// Streaming coherent-phase stitching at the evaluation hop.
    Stitch,
}

impl Condition {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gla" => Some(Condition::Gla),
            "frames" => Some(Condition::Frames),
            "stitch" => Some(Condition::Stitch),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub runs: usize,
    pub seed: u64,
    pub condition: Condition,
    pub gla: GlaConfig,
    pub synth: SynthConfig,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            runs: 10,
            seed: 0,
            condition: Condition::Gla,
            gla: GlaConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

/// A preprocessed recording and its split.
#[derive(Debug, Clone)]
pub struct EvalMaterial {
    pub recording: Recording,
    pub split: SplitAssignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub material_id: String,
    pub ar_mean_distance: f64,
    pub nn_mean_distance: f64,
    pub delta: f64,
    pub runs: usize,
    pub windows: usize,
    pub nn_q25: f64,
    pub nn_median: f64,
    pub nn_q75: f64,
    pub ar_q25: f64,
    pub ar_median: f64,
    pub ar_q75: f64,
    pub ar_run_q25: f64,
    pub ar_run_median: f64,
    pub ar_run_q75: f64,
    pub error: String,
}

impl ComparisonRow {
    fn failed(material_id: &str, error: &Error) -> Self {
        Self {
            material_id: material_id.to_string(),
            ar_mean_distance: f64::NAN,
            nn_mean_distance: f64::NAN,
            delta: f64::NAN,
            runs: 0,
            windows: 0,
            nn_q25: f64::NAN,
            nn_median: f64::NAN,
            nn_q75: f64::NAN,
            ar_q25: f64::NAN,
            ar_median: f64::NAN,
            ar_q75: f64::NAN,
            ar_run_q25: f64::NAN,
            ar_run_median: f64::NAN,
            ar_run_q75: f64::NAN,
            error: error.to_string(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub condition: Condition,
    pub seed: u64,
    pub runs: usize,
    pub rows: Vec<ComparisonRow>,
    /// Materials with a positive delta.
    pub wins: usize,
}

/// SplitMix64 step, used to derive independent sub-seeds.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Network and truth material for one test section.
struct SectionEval {
    /// Absolute sample span compared.
    span: std::ops::Range<usize>,
    /// Network distances per window (frames condition) or `None` when a
    /// signal is compared.
    nn_frames: Option<Vec<f64>>,
    nn_signal: Option<Signal>,
}

fn evaluate_section(
    predictor: &dyn Predictor,
    rec: &Recording,
    section: std::ops::Range<usize>,
    cfg: &CompareConfig,
    section_seed: u64,
) -> Result<SectionEval> {
    let force = &rec.force_n.samples;
    let speed = &rec.speed_mm_s.samples;
    let accel = &rec.accel_ms2.samples;
    let first = section.start + ACTION_LEN;
    let predict_at = |t: usize| predictor.predict(&rec.material_id, &ActionWindow::ending_at(force, speed, t));
    let starts = |hop: usize| (first..).step_by(hop).take_while(|t| t + FRAME_LEN <= section.end);
    match cfg.condition {
        Condition::Frames => {
            let ts: Vec<usize> = starts(EVAL_HOP).collect();
            let distances = ts
                .iter()
                .map(|&t| Ok(euclidean(&predict_at(t)?.mags, &frame_at(accel, t).mags)))
                .collect::<Result<Vec<_>>>()?;
            let end = ts.last().map_or(first, |t| t + FRAME_LEN);
            Ok(SectionEval {
                span: first..end,
                nn_frames: Some(distances),
                nn_signal: None,
            })
        }
        Condition::Gla => {
            let preds = starts(cfg.gla.hop)
                .map(predict_at)
                .collect::<Result<Vec<_>>>()?;
            let gla = GlaConfig {
                phase_seed: section_seed,
                ..cfg.gla
            };
            let out = gla_from_predictions(&preds, &gla)?;
            Ok(SectionEval {
                span: first..first + out.signal.len(),
                nn_frames: None,
                nn_signal: Some(out.signal),
            })
        }
        Condition::Stitch => {
            let preds = starts(EVAL_HOP).map(predict_at).collect::<Result<Vec<_>>>()?;
            let signal = stitch_sequence(&preds, EVAL_HOP, StitchMode::Coherent, section_seed)?;
            Ok(SectionEval {
                span: first..first + signal.len(),
                nn_frames: None,
                nn_signal: Some(signal),
            })
        }
    }
}

fn compare_material(
    index: usize,
    material: &EvalMaterial,
    predictor: &dyn Predictor,
    banks: &BTreeMap<&str, &ArBank>,
    cfg: &CompareConfig,
) -> Result<ComparisonRow> {
    let rec = &material.recording;
    let bank = banks
        .get(rec.material_id.as_str())
        .ok_or_else(|| Error::UnknownMaterial(format!("{} (no AR bank)", rec.material_id)))?;
    let sections = material.split.sections(&[Subset::Test]);
    let accel = &rec.accel_ms2.samples;
    let mut nn_distances = Vec::new();
    let mut ar_distances: Vec<Vec<f64>> = vec![Vec::new(); cfg.runs];
    for (s, section) in sections.into_iter().enumerate() {
        let section_seed = derive_seed(cfg.seed, index as u64, s as u64);
        let eval = evaluate_section(predictor, rec, section.clone(), cfg, section_seed)?;
        let truth = Signal::at_10khz(accel[eval.span.clone()].to_vec())?;
        match (&eval.nn_frames, &eval.nn_signal) {
            (Some(d), _) => nn_distances.extend_from_slice(d),
            (None, Some(sig)) => nn_distances.extend(spectral_distance(sig, &truth)?.distances),
            (None, None) => unreachable!(),
        }
        for (run, dist) in ar_distances.iter_mut().enumerate() {
            let seed = derive_seed(cfg.seed ^ 0xA5A5_A5A5, (index * 1000 + s) as u64, run as u64);
            let synth = synthesize(
                bank,
                &rec.force_n.samples[section.clone()],
                &rec.speed_mm_s.samples[section.clone()],
                seed,
                cfg.synth,
            )?;
            let offset = eval.span.start - section.start;
            let ar = Signal::at_10khz(synth.samples[offset..offset + eval.span.len()].to_vec())?;
            dist.extend(spectral_distance(&ar, &truth)?.distances);
        }
    }
    if nn_distances.is_empty() {
        return Err(Error::Empty("test windows"));
    }
    let nn = SpectralDistanceReport::from_distances(nn_distances);
    let run_means: Vec<f64> = ar_distances
        .iter()
        .map(|d| d.iter().sum::<f64>() / d.len() as f64)
        .collect();
    let runs = SpectralDistanceReport::from_distances(run_means);
    let pooled = SpectralDistanceReport::from_distances(ar_distances.concat());
    Ok(ComparisonRow {
        material_id: rec.material_id.clone(),
        ar_mean_distance: runs.mean,
        nn_mean_distance: nn.mean,
        delta: runs.mean - nn.mean,
        runs: cfg.runs,
        windows: nn.distances.len(),
        nn_q25: nn.q25,
        nn_median: nn.median,
        nn_q75: nn.q75,
        ar_q25: pooled.q25,
        ar_median: pooled.median,
        ar_q75: pooled.q75,
        ar_run_q25: runs.q25,
        ar_run_median: runs.median,
        ar_run_q75: runs.q75,
        error: String::new(),
    })
}

/// Per-material comparison of the network against the AR baseline on the
/// test sections. The network output is deterministic; the baseline is
/// synthesized `runs` times with distinct sub-seeds. Materials that cannot
/// be evaluated get an error row.
pub fn compare(
    materials: &[EvalMaterial],
    predictor: &dyn Predictor,
    banks: &[ArBank],
    cfg: &CompareConfig,
) -> Result<ComparisonReport> {
    if cfg.runs == 0 {
        return Err(Error::invalid("at least one run is required"));
    }
    let bank_map: BTreeMap<&str, &ArBank> = banks.iter().map(|b| (b.material_id.as_str(), b)).collect();
    let work = |(i, m): (usize, &EvalMaterial)| {
        compare_material(i, m, predictor, &bank_map, cfg)
            .unwrap_or_else(|e| ComparisonRow::failed(&m.recording.material_id, &e))
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<ComparisonRow> = {
        use rayon::prelude::*;
        materials.par_iter().enumerate().map(work).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<ComparisonRow> = materials.iter().enumerate().map(work).collect();
    let wins = rows.iter().filter(|r| r.is_ok() && r.delta > 0.0).count();
    Ok(ComparisonReport {
        condition: cfg.condition,
        seed: cfg.seed,
        runs: cfg.runs,
        rows,
        wins,
    })
}

pub fn write_report_csv(report: &ComparisonReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    for row in &report.rows {
        w.serialize(row).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub schema_version: u32,
    pub condition: Condition,
    pub seed: u64,
    pub runs: usize,
    pub materials: usize,
    pub evaluated: usize,
    pub wins: usize,
    pub mean_ar_distance: f64,
    pub mean_nn_distance: f64,
    pub mean_delta: f64,
}

impl ReportSummary {
    pub fn of(report: &ComparisonReport) -> Self {
        let ok: Vec<&ComparisonRow> = report.rows.iter().filter(|r| r.is_ok()).collect();
        let mean = |f: fn(&ComparisonRow) -> f64| {
            if ok.is_empty() {
                0.0
            } else {
                ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
            }
        };
        Self {
            schema_version: SUMMARY_SCHEMA_VERSION,
            condition: report.condition,
            seed: report.seed,
            runs: report.runs,
            materials: report.rows.len(),
            evaluated: ok.len(),
            wins: report.wins,
            mean_ar_distance: mean(|r| r.ar_mean_distance),
            mean_nn_distance: mean(|r| r.nn_mean_distance),
            mean_delta: mean(|r| r.delta),
        }
    }
}

pub fn write_summary_json(report: &ComparisonReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&ReportSummary::of(report))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// `material_id` plus 256 code values per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub rows: Vec<(String, Vec<f64>)>,
}

impl EmbeddingTable {
    pub fn to_csv(&self) -> String {
        let width = self.rows.first().map_or(0, |r| r.1.len());
        let mut out = String::from("material_id");
        for i in 0..width {
            out.push_str(&format!(",c{i}"));
        }
        out.push('\n');
        for (id, code) in &self.rows {
            out.push_str(id);
            for v in code {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Codes of the listed materials, followed by extra labelled codes such as
/// held-out descriptors.
pub fn export_embeddings(
    model: &SpectralModel,
    materials: &[String],
    extra: &[(String, TextureCode)],
) -> Result<EmbeddingTable> {
    if !model.is_trained() {
        return Err(Error::invalid("model has not been trained"));
    }
    if model.mode == ModelMode::PerMaterial {
        return Err(Error::ModeMismatch {
            found: model.mode.to_string(),
            requested: "a mode with texture codes".into(),
        });
    }
    let mut rows = Vec::with_capacity(materials.len() + extra.len());
    for id in materials {
        rows.push((id.clone(), model.encode_material(id)?.0));
    }
    for (label, code) in extra {
        rows.push((label.clone(), code.0.clone()));
    }
    Ok(EmbeddingTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{preprocess_actions, split_sections, synthetic_suite};
    use crate::neural::{Architecture, Normalization};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(N^2) DFT magnitude of each 1000-sample window, bins 0..=100.
    fn brute_force_mean(a: &[f64], b: &[f64]) -> f64 {
        let mags = |x: &[f64]| -> Vec<f64> {
            (0..=100)
                .map(|k| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (n, v) in x.iter().enumerate() {
                        let ang = -2.0 * std::f64::consts::PI * (k * n % 1000) as f64 / 1000.0;
                        re += v * ang.cos();
                        im += v * ang.sin();
                    }
                    re.hypot(im)
                })
                .collect()
        };
        let mut total = 0.0;
        let mut count = 0;
        let mut t = 0;
        while t + 1000 <= a.len() {
            let (ma, mb) = (mags(&a[t..t + 1000]), mags(&b[t..t + 1000]));
            total += ma.iter().zip(&mb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            count += 1;
            t += 100;
        }
        total / count as f64
    }

    fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Signal {
        Signal::at_10khz((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn distance_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..3 {
            let a = random_signal(&mut rng, 5000);
            let b = random_signal(&mut rng, 5000);
            let r = spectral_distance(&a, &b).unwrap();
            let oracle = brute_force_mean(&a.samples, &b.samples);
            assert!((r.mean - oracle).abs() <= 1e-9 * oracle.max(1.0));
            assert_eq!(r.distances.len(), (5000 - 1000) / 100 + 1);
        }
    }

    #[test]
    fn distance_identity_symmetry_and_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_signal(&mut rng, 3000);
        let b = random_signal(&mut rng, 3000);
        assert!(spectral_distance(&a, &a).unwrap().distances.iter().all(|&d| d == 0.0));
        assert_eq!(spectral_distance(&a, &b).unwrap(), spectral_distance(&b, &a).unwrap());
        let tone = |shift: usize| {
            Signal::at_10khz(
                (0..4000)
                    .map(|n| (2.0 * std::f64::consts::PI * 100.0 * (n + shift) as f64 / 10_000.0).sin())
                    .collect(),
            )
            .unwrap()
        };
        let r = spectral_distance(&tone(1000), &tone(0)).unwrap();
        assert!(r.distances.iter().all(|&d| d < 1e-9));
        assert!(spectral_distance(&a, &random_signal(&mut rng, 2999)).is_err());
    }

    #[test]
    fn quartiles_are_ordered() {
        let r = SpectralDistanceReport::from_distances(vec![4.0, 1.0, 3.0, 2.0]);
        assert_eq!((r.q25, r.median, r.q75, r.mean), (1.75, 2.5, 3.25, 2.5));
    }

    /// Predicts the true spectrum of the window following each action.
    struct Oracle<'a>(&'a Recording);

    impl Predictor for Oracle<'_> {
        fn predict(&self, _: &str, action: &ActionWindow) -> Result<SpectralFrame> {
            let f = &self.0.force_n.samples;
            let t = (ACTION_LEN..f.len())
                .find(|&t| f[t - ACTION_LEN..t] == action.force[..])
                .unwrap();
            Ok(frame_at(&self.0.accel_ms2.samples, t))
        }
    }

    fn eval_material(seed: u64) -> EvalMaterial {
        let m = &synthetic_suite(2, seed)[1];
        let recording = preprocess_actions(&m.render(100_000).unwrap()).unwrap();
        let split = split_sections(&recording).unwrap();
        EvalMaterial { recording, split }
    }

    #[test]
    fn perfect_predictions_win_and_reports_are_deterministic() {
        let mat = eval_material(3);
        let bank = crate::ar_baseline::build_bank(&mat.recording, &mat.split, 20, Default::default()).unwrap();
        let cfg = CompareConfig {
            runs: 3,
            seed: 11,
            condition: Condition::Frames,
            ..Default::default()
        };
        let oracle = Oracle(&mat.recording);
        let report = compare(std::slice::from_ref(&mat), &oracle, std::slice::from_ref(&bank), &cfg).unwrap();
        let row = &report.rows[0];
        assert!(row.is_ok(), "{}", row.error);
        assert_eq!(row.nn_mean_distance, 0.0);
        assert!(row.ar_mean_distance > 0.0 && row.delta > 0.0);
        assert_eq!(report.wins, 1);
        assert!((row.delta - (row.ar_mean_distance - row.nn_mean_distance)).abs() <= 1e-12);
        let again = compare(std::slice::from_ref(&mat), &oracle, std::slice::from_ref(&bank), &cfg).unwrap();
        assert_eq!(report, again);
        for condition in [Condition::Gla, Condition::Stitch] {
            let c = CompareConfig {
                condition,
                runs: 1,
                ..cfg
            };
            let r = compare(std::slice::from_ref(&mat), &oracle, std::slice::from_ref(&bank), &c).unwrap();
            assert!(r.rows[0].is_ok(), "{}", r.rows[0].error);
        }
    }

    #[test]
    fn missing_bank_gives_error_row() {
        let mat = eval_material(4);
        let oracle = Oracle(&mat.recording);
        let report = compare(&[mat.clone()], &oracle, &[], &CompareConfig::default()).unwrap();
        assert!(!report.rows[0].is_ok());
        assert_eq!(report.wins, 0);
    }

    #[test]
    fn report_files() {
        let mat = eval_material(5);
        let bank = crate::ar_baseline::build_bank(&mat.recording, &mat.split, 10, Default::default()).unwrap();
        let cfg = CompareConfig {
            runs: 2,
            condition: Condition::Frames,
            ..Default::default()
        };
        let report = compare(&[mat.clone()], &Oracle(&mat.recording), &[bank], &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("r.csv");
        write_report_csv(&report, &csv_path).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert!(text.starts_with("material_id,ar_mean_distance,nn_mean_distance,delta,runs"));
        assert_eq!(text.lines().count(), 2);
        let json_path = dir.path().join("r.json");
        write_summary_json(&report, &json_path).unwrap();
        let summary: ReportSummary = serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
        assert_eq!(summary.wins, 1);
        assert_eq!(summary.schema_version, 1);
    }

    #[test]
    fn embedding_export_shape_and_determinism() {
        let ids: Vec<String> = (0..4).map(|i| format!("m{i}")).collect();
        let mut model = SpectralModel::new(ModelMode::Embedding, ids.clone(), Architecture::default(), 1).unwrap();
        assert!(export_embeddings(&model, &ids, &[]).is_err());
        model.norm = Normalization {
            output_scale: 0.5,
            ..Normalization::identity()
        };
        let table = export_embeddings(&model, &ids, &[]).unwrap();
        let csv = table.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().all(|l| l.split(',').count() == 257));
        assert_eq!(csv, export_embeddings(&model, &ids, &[]).unwrap().to_csv());
        let first: Vec<f64> = csv.lines().nth(1).unwrap().split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert_eq!(first, model.encode_material("m0").unwrap().0);
    }
}
