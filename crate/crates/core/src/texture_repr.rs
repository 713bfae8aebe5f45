//! Texture representations: press-frame selection, dihedral augmentation,
//! a handcrafted 128-d image descriptor and the 256-d texture code.
//!
//! Press sequences are directories of numbered images (`frame_0000.pgm`,
//! `frame_0001.pgm`, ...). Frame 0 is the non-contact reference.

use std::path::Path;

use image::{imageops, GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dataset::SyntheticMaterial;
use crate::error::{Error, Result};
use crate::neural::{ModelMode, SpectralModel, CODE_DIM};

pub const DESCRIPTOR_DIM: usize = 128;
pub const ORIENTATION_BINS: usize = 8;
pub const MAGNITUDE_BINS: usize = 8;
pub const RADIAL_BINS: usize = 64;
pub const MIN_DESCRIBE_SIZE: u32 = 64;

#[derive(Debug, Clone)]
pub struct PressSequence {
    pub material_id: String,
    pub frames: Vec<GrayImage>,
}

impl PressSequence {
    pub fn new(material_id: impl Into<String>, frames: Vec<GrayImage>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::invalid("a press sequence needs a reference frame and at least one more"));
        }
        let (w, h) = frames[0].dimensions();
        if frames.iter().any(|f| f.dimensions() != (w, h)) {
            return Err(Error::invalid("press frames differ in size"));
        }
        Ok(Self {
            material_id: material_id.into(),
            frames,
        })
    }
}

/// Rec. 601 luminance.
pub fn to_gray(img: &image::DynamicImage) -> GrayImage {
    let rgb = img.to_rgb8();
    GrayImage::from_fn(rgb.width(), rgb.height(), |x, y| {
        let p = rgb.get_pixel(x, y).0;
        let l = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
        Luma([l.round().clamp(0.0, 255.0) as u8])
    })
}

pub fn load_image(path: &Path) -> Result<GrayImage> {
    let img = image::open(path)?;
    Ok(to_gray(&img))
}

/// Loads `frame_NNNN.*` files from `dir` in index order.
pub fn load_press_sequence(dir: &Path, material_id: &str) -> Result<PressSequence> {
    let mut numbered = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if let Some(index) = stem.strip_prefix("frame_").and_then(|n| n.parse::<usize>().ok()) {
            numbered.push((index, path));
        }
    }
    numbered.sort();
    let frames = numbered
        .iter()
        .map(|(_, p)| load_image(p))
        .collect::<Result<Vec<_>>>()?;
    PressSequence::new(material_id, frames)
}

pub fn save_press_sequence(seq: &PressSequence, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, frame) in seq.frames.iter().enumerate() {
        let path = dir.join(format!("frame_{i:04}.pgm"));
        frame.save(&path)?;
    }
    Ok(())
}

fn l1_difference(a: &GrayImage, b: &GrayImage) -> u64 {
    a.as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&x, &y)| (x as i64 - y as i64).unsigned_abs())
        .sum()
}

/// Index of the frame farthest (sum of absolute pixel differences) from the
/// non-contact frame 0. Ties go to the earliest index.
pub fn select_press_frame(seq: &PressSequence) -> Result<usize> {
    if seq.frames.len() < 2 {
        return Err(Error::invalid("a press sequence needs at least two frames"));
    }
    let reference = &seq.frames[0];
    let mut best = (1, l1_difference(reference, &seq.frames[1]));
    for (i, f) in seq.frames.iter().enumerate().skip(2) {
        let d = l1_difference(reference, f);
        if d > best.1 {
            best = (i, d);
        }
    }
    Ok(best.0)
}

/// The peak frame and its immediate neighbours (excluding the reference).
pub fn press_frames(seq: &PressSequence) -> Result<Vec<&GrayImage>> {
    let peak = select_press_frame(seq)?;
    let lo = peak.saturating_sub(1).max(1);
    let hi = (peak + 1).min(seq.frames.len() - 1);
    Ok((lo..=hi).map(|i| &seq.frames[i]).collect())
}

pub fn center_crop_square(img: &GrayImage) -> GrayImage {
    let (w, h) = img.dimensions();
    let s = w.min(h);
    imageops::crop_imm(img, (w - s) / 2, (h - s) / 2, s, s).to_image()
}

/// Rotations by 0, 90, 180 and 270 degrees, each with and without a
/// horizontal mirror, of the centered square crop.
pub fn augment(img: &GrayImage) -> Vec<GrayImage> {
    let base = center_crop_square(img);
    let rotations = [
        base.clone(),
        imageops::rotate90(&base),
        imageops::rotate180(&base),
        imageops::rotate270(&base),
    ];
    rotations
        .into_iter()
        .flat_map(|r| {
            let m = imageops::flip_horizontal(&r);
            [r, m]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageDescriptor {
    /// 64 orientation/magnitude histogram bins then 64 radial spectrum bins.
    pub features: Vec<f64>,
    /// Set for images without gradient or spectral energy.
    pub low_texture: bool,
}

/// Histogram index of an unsigned gradient orientation, bins centred at
/// multiples of pi/8.
fn orientation_bin(gx: f64, gy: f64) -> usize {
    let mut theta = gy.atan2(gx);
    if theta < 0.0 {
        theta += std::f64::consts::PI;
    }
    ((theta / (std::f64::consts::PI / ORIENTATION_BINS as f64)).round() as usize) % ORIENTATION_BINS
}

fn magnitude_bin(mag: f64) -> usize {
    mag.log2().floor().clamp(0.0, (MAGNITUDE_BINS - 1) as f64) as usize
}

fn gradient_histogram(pixels: &[f64], n: usize) -> Vec<f64> {
    let mut hist = vec![0.0; ORIENTATION_BINS * MAGNITUDE_BINS];
    for y in 1..n - 1 {
        for x in 1..n - 1 {
            let gx = (pixels[y * n + x + 1] - pixels[y * n + x - 1]) / 2.0;
            let gy = (pixels[(y + 1) * n + x] - pixels[(y - 1) * n + x]) / 2.0;
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            hist[orientation_bin(gx, gy) * MAGNITUDE_BINS + magnitude_bin(mag)] += 1.0;
        }
    }
    hist
}

fn radial_spectrum(pixels: &[f64], n: usize) -> Vec<f64> {
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mut data: Vec<Complex64> = pixels.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); n];
    for x in 0..n {
        for y in 0..n {
            column[y] = data[y * n + x];
        }
        fft.process(&mut column);
        for y in 0..n {
            data[y * n + x] = column[y];
        }
    }
    let signed = |k: usize| if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
    let mut bins = vec![0.0; RADIAL_BINS];
    for fy in 0..n {
        for fx in 0..n {
            if fx == 0 && fy == 0 {
                continue;
            }
            let r = signed(fx).hypot(signed(fy)) / (n as f64 / 2.0);
            let b = (r * RADIAL_BINS as f64).floor() as usize;
            if b < RADIAL_BINS {
                bins[b] += data[fy * n + fx].norm_sqr();
            }
        }
    }
    bins
}

fn normalize_half(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= 1e-12 {
        v.iter_mut().for_each(|x| *x = 0.0);
        return false;
    }
    let scale = std::f64::consts::FRAC_1_SQRT_2 / norm;
    v.iter_mut().for_each(|x| *x *= scale);
    true
}

/// Gradient-orientation/magnitude histogram plus radial power spectrum of
/// the centered square crop. Each half has norm 1/sqrt(2).
pub fn describe(img: &GrayImage) -> Result<ImageDescriptor> {
    let (w, h) = img.dimensions();
    if w < MIN_DESCRIBE_SIZE || h < MIN_DESCRIBE_SIZE {
        return Err(Error::invalid(format!(
            "image {w}x{h} is smaller than {MIN_DESCRIBE_SIZE}x{MIN_DESCRIBE_SIZE}"
        )));
    }
    let square = center_crop_square(img);
    let n = square.width() as usize;
    let pixels: Vec<f64> = square.as_raw().iter().map(|&p| p as f64).collect();
    let mut features = gradient_histogram(&pixels, n);
    features.extend(radial_spectrum(&pixels, n));
    let (hist, spec) = features.split_at_mut(ORIENTATION_BINS * MAGNITUDE_BINS);
    let textured = normalize_half(hist) & normalize_half(spec);
    if !textured {
        features.iter_mut().for_each(|x| *x = 0.0);
    }
    Ok(ImageDescriptor {
        features,
        low_texture: !textured,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextureCode(pub Vec<f64>);

impl TextureCode {
    pub fn cosine_similarity(&self, other: &TextureCode) -> f64 {
        cosine_similarity(&self.0, &other.0)
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum TextureInput<'a> {
    Material(&'a str),
    Descriptor(&'a ImageDescriptor),
}

/// Texture code for a known material (embedding mode) or any descriptor
/// (descriptor mode).
pub fn encode_texture(model: &SpectralModel, input: TextureInput<'_>) -> Result<TextureCode> {
    let code = match input {
        TextureInput::Material(id) => model.encode_material(id)?,
        TextureInput::Descriptor(d) => model.encode_descriptor(d)?,
    };
    debug_assert_eq!(code.0.len(), CODE_DIM);
    Ok(code)
}

/// Mean code of a material's descriptors (descriptor mode) or its table row.
pub fn material_code(model: &SpectralModel, material_id: &str, descriptors: &[ImageDescriptor]) -> Result<TextureCode> {
    if model.mode != ModelMode::Descriptor {
        return model.encode_material(material_id);
    }
    if descriptors.is_empty() {
        return Err(Error::Empty("descriptors"));
    }
    let mut mean = vec![0.0; CODE_DIM];
    for d in descriptors {
        for (m, v) in mean.iter_mut().zip(model.encode_descriptor(d)?.0) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= descriptors.len() as f64);
    Ok(TextureCode(mean))
}

/// Press video of a synthetic surface: a grating whose period follows the
/// spatial frequency, roughened by the noise floor, pressed into view over
/// `frames` frames.
pub fn synthetic_press_sequence(material: &SyntheticMaterial, size: u32, frames: usize) -> Result<PressSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(material.params.seed ^ 0x5EED_F00D);
    let period_px = 24.0 / material.params.spatial_freq_per_mm;
    let angle = 0.3 * material.group as f64;
    let (c, s) = (angle.cos(), angle.sin());
    let roughness = 40.0 * material.params.noise_floor / 0.15;
    let surface: Vec<f64> = (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as f64, (i / size) as f64);
            let phase = 2.0 * std::f64::consts::PI * (c * x + s * y) / period_px;
            60.0 * phase.sin() + roughness * rng.random_range(-1.0..1.0)
        })
        .collect();
    let peak = frames / 2;
    let images = (0..frames)
        .map(|f| {
            let contact = if f == 0 {
                0.0
            } else {
                1.0 - (f as f64 - peak as f64).abs() / peak.max(1) as f64
            };
            GrayImage::from_fn(size, size, |x, y| {
                let v = 128.0 + contact.max(0.0) * surface[(y * size + x) as usize];
                Luma([v.round().clamp(0.0, 255.0) as u8])
            })
        })
        .collect();
    PressSequence::new(material.material_id.clone(), images)
}

/// Descriptors of every augmentation of the peak frame and its neighbours.
pub fn training_descriptors(seq: &PressSequence) -> Result<Vec<ImageDescriptor>> {
    let mut out = Vec::new();
    for frame in press_frames(seq)? {
        for img in augment(frame) {
            out.push(describe(&img)?);
        }
    }
    Ok(out)
}
