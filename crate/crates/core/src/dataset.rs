//! Recordings, preprocessing, the 25-section split, supervised example
//! extraction and a synthetic texture generator.
//!
//! # Recording file (`.rec`)
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 8    | magic `TXSYNREC`                        |
//! | 8      | 4    | format version, `u32` (currently 1)     |
//! | 12     | 4    | reserved, zero                          |
//! | 16     | 4    | channel count, `u32` (always 3)         |
//! | 20     | 8    | samples per channel, `u64`              |
//! | 28     | 8    | sample rate in Hz, `f64`                |
//! | 36     | 8·n  | force (N), `f64` × n                    |
//! |        | 8·n  | speed (mm/s), `f64` × n                 |
//! |        | 8·n  | acceleration (m/s²), `f64` × n          |
//!
//! All fields are little-endian. A UTF-8 JSON sidecar named
//! `<stem>.meta.json` carries `material_id` and `provenance`.

use std::f64::consts::PI;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, lowpass_20hz, Signal, SpectralFrame, FRAME_LEN, SAMPLE_RATE_HZ};
use crate::error::{check_finite, Error, Result};

pub const RECORDING_MAGIC: &[u8; 8] = b"TXSYNREC";
pub const RECORDING_VERSION: u32 = 1;
const DESCRIPTOR_END: usize = 36;

pub const SECTIONS: usize = 25;
/// Samples per action window (1 ms).
pub const ACTION_LEN: usize = 10;
/// Stride between consecutive training examples.
pub const EXAMPLE_STRIDE: usize = 100;
pub const MIN_SECTION_LEN: usize = FRAME_LEN + EXAMPLE_STRIDE;
pub const VAL_SECTIONS: [usize; 4] = [2, 8, 14, 20];
pub const TEST_SECTIONS: [usize; 4] = [5, 11, 17, 23];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub material_id: String,
    pub force_n: Signal,
    pub speed_mm_s: Signal,
    pub accel_ms2: Signal,
    #[serde(default)]
    pub provenance: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    material_id: String,
    #[serde(default)]
    provenance: String,
}

impl Recording {
    pub fn new(
        material_id: impl Into<String>,
        force: Vec<f64>,
        speed: Vec<f64>,
        accel: Vec<f64>,
    ) -> Result<Self> {
        let n = accel.len();
        for (what, len) in [("force channel", force.len()), ("speed channel", speed.len())] {
            if len != n {
                return Err(Error::LengthMismatch {
                    what,
                    expected: n,
                    actual: len,
                });
            }
        }
        check_finite("force channel", &force)?;
        check_finite("speed channel", &speed)?;
        check_finite("acceleration channel", &accel)?;
        if let Some(i) = force.iter().position(|&f| f < 0.0) {
            return Err(Error::invalid(format!("negative force at sample {i}")));
        }
        if let Some(i) = speed.iter().position(|&v| v < 0.0) {
            return Err(Error::invalid(format!("negative speed at sample {i}")));
        }
        Ok(Self {
            material_id: material_id.into(),
            force_n: Signal::at_10khz(force)?,
            speed_mm_s: Signal::at_10khz(speed)?,
            accel_ms2: Signal::at_10khz(accel)?,
            provenance: String::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.accel_ms2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accel_ms2.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.accel_ms2.duration_s()
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    /// Copies `range` of every channel into a new recording.
    pub fn slice(&self, range: Range<usize>) -> Recording {
        let cut = |s: &Signal| Signal {
            samples: s.samples[range.clone()].to_vec(),
            sample_rate_hz: s.sample_rate_hz,
        };
        Recording {
            material_id: self.material_id.clone(),
            force_n: cut(&self.force_n),
            speed_mm_s: cut(&self.speed_mm_s),
            accel_ms2: cut(&self.accel_ms2),
            provenance: self.provenance.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len();
        let mut out = Vec::with_capacity(DESCRIPTOR_END + 24 * n);
        out.extend_from_slice(RECORDING_MAGIC);
        out.extend_from_slice(&RECORDING_VERSION.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&3u32.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&SAMPLE_RATE_HZ.to_le_bytes());
        for ch in [&self.force_n, &self.speed_mm_s, &self.accel_ms2] {
            for v in &ch.samples {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], material_id: &str, path: &Path) -> Result<Self> {
        let malformed = |reason: &str| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < DESCRIPTOR_END {
            return Err(malformed("file shorter than header"));
        }
        if &bytes[..8] != RECORDING_MAGIC {
            return Err(malformed("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != RECORDING_VERSION {
            return Err(Error::VersionMismatch {
                expected: RECORDING_VERSION,
                found: version,
            });
        }
        let channels = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
        if channels != 3 {
            return Err(malformed(&format!("expected 3 channels, found {channels}")));
        }
        let n = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
        let rate = f64::from_le_bytes(bytes[28..36].try_into().unwrap());
        if rate != SAMPLE_RATE_HZ {
            return Err(Error::UnsupportedRate(rate));
        }
        let body = &bytes[DESCRIPTOR_END..];
        let expected = n.checked_mul(24).ok_or_else(|| malformed("sample count overflows"))?;
        if body.len() != expected {
            return Err(Error::LengthMismatch {
                what: "recording body bytes",
                expected,
                actual: body.len(),
            });
        }
        let mut channels = body.chunks_exact(8 * n.max(1)).map(|c| {
            c.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect::<Vec<f64>>()
        });
        let (force, speed, accel) = if n == 0 {
            (vec![], vec![], vec![])
        } else {
            (
                channels.next().unwrap(),
                channels.next().unwrap(),
                channels.next().unwrap(),
            )
        };
        Recording::new(material_id, force, speed, accel)
    }

    /// Writes the binary file and its metadata sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))?;
        let sidecar = Sidecar {
            material_id: self.material_id.clone(),
            provenance: self.provenance.clone(),
        };
        let meta = sidecar_path(path);
        let text = serde_json::to_string_pretty(&sidecar)?;
        fs::write(&meta, text).map_err(|e| Error::io(&meta, e))
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// Loads a `.rec` file. Without a sidecar, the file stem is the material id.
pub fn load_recording(path: &Path) -> Result<Recording> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let meta = sidecar_path(path);
    let sidecar = match fs::read_to_string(&meta) {
        Ok(text) => serde_json::from_str::<Sidecar>(&text)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Sidecar {
            material_id: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            provenance: String::new(),
        },
        Err(e) => return Err(Error::io(&meta, e)),
    };
    Ok(Recording::from_bytes(&bytes, &sidecar.material_id, path)?.with_provenance(sidecar.provenance))
}

/// Imports a CSV with header `t,force,speed,accel` (t in seconds).
///
/// A missing value in a column shortens that channel, which surfaces as a
/// length-mismatch error.
pub fn import_csv(path: &Path, material_id: &str) -> Result<Recording> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::MalformedHeader {
                path: path.to_path_buf(),
                reason: format!("missing column `{name}`"),
            })
    };
    let idx = [col("t")?, col("force")?, col("speed")?, col("accel")?];
    let mut chans: [Vec<f64>; 4] = Default::default();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        for (c, &i) in idx.iter().enumerate() {
            match record.get(i).filter(|s| !s.is_empty()) {
                Some(field) => {
                    let v: f64 = field.parse().map_err(|_| Error::MalformedHeader {
                        path: path.to_path_buf(),
                        reason: format!("row {}: `{field}` is not a number", row + 1),
                    })?;
                    chans[c].push(v);
                }
                None => {}
            }
        }
    }
    let [t, force, speed, accel] = chans;
    let rec = Recording::new(material_id, force, speed, accel)?;
    if t.len() < 2 {
        return Ok(rec);
    }
    let rate = (t.len() - 1) as f64 / (t[t.len() - 1] - t[0]);
    // Anything slower cannot carry the 1 kHz band.
    if !(rate.is_finite() && rate >= 2_000.0) {
        return Err(Error::UnsupportedRate(rate));
    }
    if (rate - SAMPLE_RATE_HZ).abs() <= 1e-3 * SAMPLE_RATE_HZ {
        return Ok(rec);
    }
    let to_10k = |s: &Signal, floor: f64| -> Result<Vec<f64>> {
        Ok(dsp::resample(&s.samples, rate, SAMPLE_RATE_HZ)?
            .into_iter()
            .map(|v| v.max(floor))
            .collect())
    };
    // Ringing may dip slightly below zero; force and speed stay non-negative.
    Recording::new(
        material_id,
        to_10k(&rec.force_n, 0.0)?,
        to_10k(&rec.speed_mm_s, 0.0)?,
        to_10k(&rec.accel_ms2, f64::NEG_INFINITY)?,
    )
    .map(|r| r.with_provenance(format!("resampled from {rate:.1} Hz")))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Low-passes force and speed at 20 Hz and clamps them at zero. The
/// acceleration channel is passed through untouched.
pub fn preprocess_actions(rec: &Recording) -> Result<Recording> {
    let clamp = |s: Signal| Signal {
        samples: s.samples.into_iter().map(|v| v.max(0.0)).collect(),
        sample_rate_hz: s.sample_rate_hz,
    };
    Ok(Recording {
        material_id: rec.material_id.clone(),
        force_n: clamp(lowpass_20hz(&rec.force_n)?),
        speed_mm_s: clamp(lowpass_20hz(&rec.speed_mm_s)?),
        accel_ms2: rec.accel_ms2.clone(),
        provenance: rec.provenance.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub labels: Vec<Subset>,
    pub section_len: usize,
    /// Set when a val/test section's mean (force, speed) falls outside the
    /// bounding box of the training sections' means.
    pub overlap_warning: bool,
}

impl SplitAssignment {
    pub fn count(&self, subset: Subset) -> usize {
        self.labels.iter().filter(|&&l| l == subset).count()
    }

    /// Sample ranges of the sections carrying any of `subsets`.
    pub fn sections(&self, subsets: &[Subset]) -> Vec<Range<usize>> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| subsets.contains(l))
            .map(|(i, _)| i * self.section_len..(i + 1) * self.section_len)
            .collect()
    }
}

pub fn section_labels() -> Vec<Subset> {
    (0..SECTIONS)
        .map(|i| {
            if VAL_SECTIONS.contains(&i) {
                Subset::Val
            } else if TEST_SECTIONS.contains(&i) {
                Subset::Test
            } else {
                Subset::Train
            }
        })
        .collect()
}

/// Splits a recording into 25 equal sections (remainder truncated) with a
/// fixed interleaved 17/4/4 train/val/test pattern.
pub fn split_sections(rec: &Recording) -> Result<SplitAssignment> {
    let needed = SECTIONS * MIN_SECTION_LEN;
    if rec.len() < needed {
        return Err(Error::TooShort {
            needed,
            actual: rec.len(),
        });
    }
    let section_len = rec.len() / SECTIONS;
    let labels = section_labels();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let points: Vec<(f64, f64)> = (0..SECTIONS)
        .map(|i| {
            let r = i * section_len..(i + 1) * section_len;
            (
                mean(&rec.force_n.samples[r.clone()]),
                mean(&rec.speed_mm_s.samples[r]),
            )
        })
        .collect();
    let (mut f_lo, mut f_hi, mut v_lo, mut v_hi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (p, l) in points.iter().zip(&labels) {
        if *l == Subset::Train {
            f_lo = f_lo.min(p.0);
            f_hi = f_hi.max(p.0);
            v_lo = v_lo.min(p.1);
            v_hi = v_hi.max(p.1);
        }
    }
    let overlap_warning = points
        .iter()
        .zip(&labels)
        .filter(|(_, l)| **l != Subset::Train)
        .any(|(p, _)| p.0 < f_lo || p.0 > f_hi || p.1 < v_lo || p.1 > v_hi);
    Ok(SplitAssignment {
        labels,
        section_len,
        overlap_warning,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionWindow {
    pub force: [f64; ACTION_LEN],
    pub speed: [f64; ACTION_LEN],
}

impl ActionWindow {
    pub fn constant(force: f64, speed: f64) -> Self {
        Self {
            force: [force; ACTION_LEN],
            speed: [speed; ACTION_LEN],
        }
    }

    /// Samples `[t - 10, t)` of the force and speed channels.
    pub fn ending_at(force: &[f64], speed: &[f64], t: usize) -> Self {
        let mut w = Self::constant(0.0, 0.0);
        w.force.copy_from_slice(&force[t - ACTION_LEN..t]);
        w.speed.copy_from_slice(&speed[t - ACTION_LEN..t]);
        w
    }

    /// Network input: ten force samples followed by ten speed samples.
    pub fn features(&self) -> [f64; 2 * ACTION_LEN] {
        let mut out = [0.0; 2 * ACTION_LEN];
        out[..ACTION_LEN].copy_from_slice(&self.force);
        out[ACTION_LEN..].copy_from_slice(&self.speed);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub action: ActionWindow,
    pub target: SpectralFrame,
    pub material_id: String,
}

/// Start indices `t` of the examples inside one section: the action occupies
/// `[t - 10, t)` and the target `[t, t + 1000)`.
pub fn example_starts(section: Range<usize>) -> impl Iterator<Item = usize> {
    let first = section.start + ACTION_LEN;
    let end = section.end;
    (first..)
        .step_by(EXAMPLE_STRIDE)
        .take_while(move |t| t + FRAME_LEN <= end)
}

/// Closed-form example count for a section of `len` samples.
pub fn examples_per_section(len: usize) -> usize {
    if len < ACTION_LEN + FRAME_LEN {
        0
    } else {
        (len - ACTION_LEN - FRAME_LEN) / EXAMPLE_STRIDE + 1
    }
}

/// Extracts (action, next-100 ms spectrum) pairs from every section labeled
/// `subset`, never crossing a section boundary.
pub fn extract_examples(
    rec: &Recording,
    split: &SplitAssignment,
    subset: Subset,
) -> Vec<TrainingExample> {
    let force = &rec.force_n.samples;
    let speed = &rec.speed_mm_s.samples;
    let accel = &rec.accel_ms2.samples;
    split
        .sections(&[subset])
        .into_iter()
        .flat_map(|section| example_starts(section))
        .map(|t| TrainingExample {
            action: ActionWindow::ending_at(force, speed, t),
            target: dsp::frame_at(accel, t),
            material_id: rec.material_id.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTextureParams {
    pub spatial_freq_per_mm: f64,
    pub amp_gain: f64,
    /// Exponent applied to the normal force in the vibration amplitude.
    pub force_exponent: f64,
    pub noise_floor: f64,
    /// Centre of a noise-driven resonance; zero disables it.
    pub resonance_hz: f64,
    pub seed: u64,
}

/// Force (N) and speed (mm/s) at 10 kHz driving the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionScript {
    pub force: Vec<f64>,
    pub speed: Vec<f64>,
}

impl ActionScript {
    pub fn constant(force: f64, speed: f64, len: usize) -> Self {
        Self {
            force: vec![force; len],
            speed: vec![speed; len],
        }
    }

    /// Smooth, quasi-periodic motion resembling a hand tracing circles: each
    /// channel is a sum of slow sinusoids mapped into its range.
    pub fn circular(len: usize, force_range: (f64, f64), speed_range: (f64, f64), seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut channel = |(lo, hi): (f64, f64)| -> Vec<f64> {
            let comps: Vec<(f64, f64, f64)> = (0..3)
                .map(|i| {
                    let freq = rng.random_range(0.12..0.55) * (1.0 + 0.4 * i as f64);
                    let phase = rng.random_range(0.0..2.0 * PI);
                    let weight = 1.0 / (1.0 + i as f64);
                    (freq, phase, weight)
                })
                .collect();
            let norm: f64 = comps.iter().map(|c| c.2).sum();
            (0..len)
                .map(|n| {
                    let t = n as f64 / SAMPLE_RATE_HZ;
                    let s: f64 = comps
                        .iter()
                        .map(|&(f, p, w)| w * (2.0 * PI * f * t + p).sin())
                        .sum::<f64>()
                        / norm;
                    lo + (hi - lo) * 0.5 * (1.0 + s)
                })
                .collect()
        };
        let force = channel(force_range);
        let speed = channel(speed_range);
        Self { force, speed }
    }

    pub fn len(&self) -> usize {
        self.force.len()
    }

    pub fn is_empty(&self) -> bool {
        self.force.is_empty()
    }
}

impl SyntheticTextureParams {
    pub fn validate(&self, max_speed: f64) -> Result<()> {
        let ok = self.spatial_freq_per_mm > 0.0
            && self.amp_gain > 0.0
            && self.force_exponent.is_finite()
            && self.noise_floor >= 0.0
            && self.resonance_hz >= 0.0
            && self.resonance_hz < SAMPLE_RATE_HZ / 2.0;
        if !ok {
            return Err(Error::invalid(format!("invalid synthetic params {self:?}")));
        }
        if self.spatial_freq_per_mm * max_speed > 1000.0 {
            return Err(Error::invalid(format!(
                "dominant tone {} Hz exceeds 1 kHz",
                self.spatial_freq_per_mm * max_speed
            )));
        }
        Ok(())
    }
}

/// Relative RMS of the resonance term against the tone amplitude.
const RESONANCE_LEVEL: f64 = 0.3;
const RESONANCE_POLE_RADIUS: f64 = 0.99;

/// Renders acceleration for a synthetic texture:
/// `amp * F^gamma * sin(2 pi * integral(spatial_freq * v)) + resonance + noise`.
pub fn generate_synthetic(
    material_id: &str,
    params: &SyntheticTextureParams,
    script: &ActionScript,
) -> Result<Recording> {
    if script.force.len() != script.speed.len() {
        return Err(Error::LengthMismatch {
            what: "action script",
            expected: script.force.len(),
            actual: script.speed.len(),
        });
    }
    check_finite("script force", &script.force)?;
    check_finite("script speed", &script.speed)?;
    let max_speed = script.speed.iter().cloned().fold(0.0, f64::max);
    params.validate(max_speed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (a1, a2, res_gain) = if params.resonance_hz > 0.0 {
        let r = RESONANCE_POLE_RADIUS;
        let theta = 2.0 * PI * params.resonance_hz / SAMPLE_RATE_HZ;
        let a1 = 2.0 * r * theta.cos();
        let a2 = -r * r;
        // Stationary variance of y = a1 y1 + a2 y2 + e for unit-variance e.
        let var = (1.0 - a2) / ((1.0 + a2) * ((1.0 - a2).powi(2) - a1 * a1));
        (a1, a2, RESONANCE_LEVEL / var.sqrt())
    } else {
        (0.0, 0.0, 0.0)
    };

    let mut phase = 0.0f64;
    let (mut y1, mut y2) = (0.0, 0.0);
    let accel: Vec<f64> = script
        .force
        .iter()
        .zip(&script.speed)
        .map(|(&f, &v)| {
            let drive = if f > 0.0 {
                params.amp_gain * f.powf(params.force_exponent)
            } else {
                0.0
            };
            phase = (phase + 2.0 * PI * params.spatial_freq_per_mm * v / SAMPLE_RATE_HZ) % (2.0 * PI);
            let e: f64 = rng.sample(StandardNormal);
            let noise: f64 = rng.sample(StandardNormal);
            let res = a1 * y1 + a2 * y2 + res_gain * drive * e;
            y2 = y1;
            y1 = res;
            drive * phase.sin() + res + params.noise_floor * noise
        })
        .collect();

    let force = script.force.iter().map(|f| f.max(0.0)).collect();
    let speed = script.speed.iter().map(|v| v.max(0.0)).collect();
    Ok(Recording::new(material_id, force, speed, accel)?
        .with_provenance(format!("synthetic {}", serde_json::to_string(params)?)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMaterial {
    pub material_id: String,
    /// Materials sharing a group share their spatial frequency.
    pub group: usize,
    pub params: SyntheticTextureParams,
    pub force_range: (f64, f64),
    pub speed_range: (f64, f64),
    pub script_seed: u64,
}

impl SyntheticMaterial {
    pub fn script(&self, len: usize) -> ActionScript {
        ActionScript::circular(len, self.force_range, self.speed_range, self.script_seed)
    }

    pub fn render(&self, len: usize) -> Result<Recording> {
        generate_synthetic(&self.material_id, &self.params, &self.script(len))
    }
}

/// A deterministic family of `count` materials in pairs: both members of a
/// pair share spatial frequency and resonance but differ in force exponent,
/// gain and noise floor.
pub fn synthetic_suite(count: usize, seed: u64) -> Vec<SyntheticMaterial> {
    let groups = count.div_ceil(2).max(1);
    let speed_range = (30.0, 200.0);
    (0..count)
        .map(|i| {
            let group = i / 2;
            let variant = i % 2;
            let frac = if groups > 1 {
                group as f64 / (groups - 1) as f64
            } else {
                0.5
            };
            let spatial = 0.6 + 3.9 * frac;
            let resonance = 120.0 + 170.0 * ((group * 3) % groups.max(1)) as f64;
            let (gamma, gain, noise) = if variant == 0 {
                (1.0, 2.0, 0.05)
            } else {
                (1.5, 1.6, 0.15)
            };
            let material_seed = seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(i as u64 + 1);
            SyntheticMaterial {
                material_id: format!("synth_{i:02}"),
                group,
                params: SyntheticTextureParams {
                    spatial_freq_per_mm: spatial,
                    amp_gain: gain,
                    force_exponent: gamma,
                    noise_floor: noise,
                    resonance_hz: resonance,
                    seed: material_seed,
                },
                force_range: (0.3, 2.5),
                speed_range,
                script_seed: material_seed ^ 0xA5A5_5A5A,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_recording(len: usize) -> Recording {
        Recording::new("c", vec![1.0; len], vec![100.0; len], vec![0.0; len]).unwrap()
    }

    #[test]
    fn binary_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rec");
        let rec = Recording::new(
            "mat-a",
            vec![1.0; 100_000],
            vec![50.0; 100_000],
            (0..100_000).map(|i| (i as f64 * 0.01).sin()).collect(),
        )
        .unwrap()
        .with_provenance("fixture");
        rec.save(&path).unwrap();
        let back = load_recording(&path).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.duration_s(), 10.0);

        let mut bytes = rec.to_bytes();
        bytes.truncate(bytes.len() - 8);
        assert!(matches!(
            Recording::from_bytes(&bytes, "x", &path),
            Err(Error::LengthMismatch { .. })
        ));

        let mut bytes = rec.to_bytes();
        let accel_at = DESCRIPTOR_END + 16 * 100_000 + 8 * 17;
        bytes[accel_at..accel_at + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(
            Recording::from_bytes(&bytes, "x", &path),
            Err(Error::NonFinite { what: "acceleration channel", index: 17 })
        ));

        let mut bytes = rec.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            Recording::from_bytes(&bytes, "x", &path),
            Err(Error::MalformedHeader { .. })
        ));
    }

    #[test]
    fn csv_import_resamples_to_10khz() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fast.csv");
        let rate = 20_000.0;
        let mut text = String::from("t,force,speed,accel\n");
        for i in 0..20_000 {
            let t = i as f64 / rate;
            text += &format!("{t},1.5,40,{}\n", (2.0 * PI * 250.0 * t).sin());
        }
        fs::write(&path, &text).unwrap();
        let rec = import_csv(&path, "f").unwrap();
        assert_eq!(rec.len(), 10_000);
        assert!(rec.provenance.contains("20000.0 Hz"));
        assert!(rec.force_n.samples.iter().all(|&f| (f - 1.5).abs() < 1e-9));
        let worst = (500..9_500)
            .map(|i| (rec.accel_ms2.samples[i] - (2.0 * PI * 250.0 * i as f64 / 1e4).sin()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");

        let slow = dir.path().join("slow.csv");
        fs::write(&slow, "t,force,speed,accel\n0,1,1,0\n0.001,1,1,0\n").unwrap();
        assert!(matches!(import_csv(&slow, "s"), Err(Error::UnsupportedRate(_))));
    }

    #[test]
    fn csv_import_detects_short_channel() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.csv");
        let mut text = String::from("t,force,speed,accel\n");
        for i in 0..50 {
            text += &format!("{},{},{},{}\n", i as f64 / 1e4, 1.0, 20.0, 0.5);
        }
        fs::write(&good, &text).unwrap();
        let rec = import_csv(&good, "g").unwrap();
        assert_eq!(rec.len(), 50);

        let bad = dir.path().join("bad.csv");
        fs::write(&bad, text.replacen("0.0049,1,20,0.5", "0.0049,,20,0.5", 1)).unwrap();
        assert!(matches!(
            import_csv(&bad, "b"),
            Err(Error::LengthMismatch { what: "force channel", .. })
        ));
    }

    #[test]
    fn preprocess_filters_actions_only() {
        let n = 30_000;
        let ripple: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.2 * (2.0 * PI * 200.0 * i as f64 / SAMPLE_RATE_HZ).sin())
            .collect();
        let accel: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let rec = Recording::new("r", ripple.clone(), vec![1.0; n], accel).unwrap();
        let out = preprocess_actions(&rec).unwrap();
        assert_eq!(out.accel_ms2, rec.accel_ms2);
        let before: Vec<f64> = ripple.iter().map(|v| v - 1.0).collect();
        let after: Vec<f64> = out.force_n.samples.iter().map(|v| v - 1.0).collect();
        let ratio = dsp::interior_rms(&after, 2000) / dsp::interior_rms(&before, 2000);
        assert!(20.0 * ratio.log10() <= -40.0);
        for &v in &out.speed_mm_s.samples[1000..n - 1000] {
            assert!((v - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn split_is_fixed_and_deterministic() {
        let rec = constant_recording(27_500);
        let s = split_sections(&rec).unwrap();
        assert_eq!(s.labels.len(), 25);
        assert_eq!(
            (s.count(Subset::Train), s.count(Subset::Val), s.count(Subset::Test)),
            (17, 4, 4)
        );
        assert!(!s.overlap_warning);
        assert_eq!(s, split_sections(&rec).unwrap());

        assert!(matches!(
            split_sections(&constant_recording(27_499)),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn split_flags_out_of_range_test_section() {
        let n = 100_000;
        let mut speed = vec![50.0; n];
        for v in &mut speed[5 * 4000..6 * 4000] {
            *v = 500.0;
        }
        let rec = Recording::new("s", vec![1.0; n], speed, vec![0.0; n]).unwrap();
        assert!(split_sections(&rec).unwrap().overlap_warning);
    }

    #[test]
    fn example_counts_and_boundaries() {
        assert_eq!(examples_per_section(4000), 30);
        let starts: Vec<usize> = example_starts(0..4000).collect();
        assert_eq!(starts.len(), 30);
        assert_eq!(starts[0], 10);
        assert!(starts.iter().all(|t| t + FRAME_LEN <= 4000));

        let rec = constant_recording(100_000);
        let split = split_sections(&rec).unwrap();
        let train = extract_examples(&rec, &split, Subset::Train);
        assert_eq!(train.len(), 17 * 30);
        assert_eq!(train[0].target.origin_index, 10);
    }

    #[test]
    fn synthetic_dominant_bin() {
        let params = SyntheticTextureParams {
            spatial_freq_per_mm: 2.0,
            amp_gain: 1.0,
            force_exponent: 1.0,
            noise_floor: 0.01,
            resonance_hz: 0.0,
            seed: 3,
        };
        let rec = generate_synthetic("t", &params, &ActionScript::constant(1.0, 100.0, 30_000)).unwrap();
        let split = split_sections(&rec).unwrap();
        let ex = extract_examples(&rec, &split, Subset::Train);
        let bins: Vec<usize> = ex.iter().map(|e| e.target.argmax_bin()).collect();
        assert!(bins.iter().all(|&b| (19..=21).contains(&b)), "{bins:?}");
        let mut mean = vec![0.0; dsp::NUM_BINS];
        for e in &ex {
            for (m, v) in mean.iter_mut().zip(&e.target.mags) {
                *m += v;
            }
        }
        assert_eq!(dsp::argmax(&mean), 20);
    }

    #[test]
    fn synthetic_zero_force_and_determinism() {
        let mut params = SyntheticTextureParams {
            spatial_freq_per_mm: 1.0,
            amp_gain: 2.0,
            force_exponent: 1.3,
            noise_floor: 0.0,
            resonance_hz: 300.0,
            seed: 9,
        };
        let silent = generate_synthetic("z", &params, &ActionScript::constant(0.0, 80.0, 5000)).unwrap();
        assert!(silent.accel_ms2.samples.iter().all(|&a| a == 0.0));

        params.noise_floor = 0.1;
        let script = ActionScript::circular(20_000, (0.5, 2.0), (20.0, 150.0), 4);
        let a = generate_synthetic("d", &params, &script).unwrap();
        let b = generate_synthetic("d", &params, &script).unwrap();
        assert_eq!(a, b);

        params.spatial_freq_per_mm = 20.0;
        assert!(generate_synthetic("bad", &params, &script).is_err());
    }

    #[test]
    fn suite_respects_band_limit() {
        for m in synthetic_suite(10, 7) {
            m.params.validate(m.speed_range.1).unwrap();
        }
        let suite = synthetic_suite(10, 7);
        assert_eq!(suite[0].params.spatial_freq_per_mm, suite[1].params.spatial_freq_per_mm);
        assert_ne!(suite[0].params.force_exponent, suite[1].params.force_exponent);
    }
}
