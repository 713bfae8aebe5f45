use std::f64::consts::PI;

use texsynth::dataset::{generate_synthetic, synthetic_suite, ActionScript, SyntheticMaterial};
use texsynth::dsp::{
    lowpass_kernel, stft_mag, stft_complex, Signal, Window, FRAME_LEN, NUM_BINS, SAMPLE_RATE_HZ,
};
use texsynth::reconstruct::{gla_reconstruct, GlaConfig};
use texsynth::{Error, Result};

pub const MATERIALS: usize = 6;
const SUITE_SEED: u64 = 7;
/// Samples discarded while the resonator settles.
const WARMUP: usize = 2000;
const AVERAGED_FRAMES: usize = 8;

fn suite() -> Vec<SyntheticMaterial> {
    synthetic_suite(MATERIALS, SUITE_SEED)
}

pub fn material_names() -> Vec<String> {
    suite().into_iter().map(|m| m.material_id).collect()
}

/// Mean rectangular-window magnitude over a few frames after warm-up.
pub fn texture_spectrum(material: usize, force: f64, speed: f64) -> Result<Vec<f64>> {
    let suite = suite();
    let m = suite
        .get(material)
        .ok_or_else(|| Error::UnknownMaterial(format!("index {material}")))?;
    let len = WARMUP + AVERAGED_FRAMES * FRAME_LEN;
    let rec = generate_synthetic(&m.material_id, &m.params, &ActionScript::constant(force, speed, len))?;
    let tail = Signal::at_10khz(rec.accel_ms2.samples[WARMUP..].to_vec())?;
    let frames = stft_mag(&tail, FRAME_LEN, Window::Rectangular)?;
    let mut mean = vec![0.0; NUM_BINS];
    for f in &frames {
        for (m, v) in mean.iter_mut().zip(&f.mags) {
            *m += v / frames.len() as f64;
        }
    }
    Ok(mean)
}

pub fn gla_convergence(tone_a_hz: f64, tone_b_hz: f64, iterations: usize, momentum: f64) -> Result<Vec<f64>> {
    let x: Vec<f64> = (0..8000)
        .map(|n| {
            let t = n as f64 / SAMPLE_RATE_HZ;
            (2.0 * PI * tone_a_hz * t).sin() + 0.5 * (2.0 * PI * tone_b_hz * t).sin()
        })
        .collect();
    let cfg = GlaConfig {
        iterations,
        momentum,
        ..Default::default()
    };
    let targets: Vec<Vec<f64>> = stft_complex(&x, FRAME_LEN, cfg.hop, Window::Hann)?
        .iter()
        .map(|f| f.magnitudes())
        .collect();
    let out = gla_reconstruct(&targets, &cfg)?;
    let start = out.consistency[0];
    Ok(out
        .consistency
        .iter()
        .map(|c| if start > 0.0 { c / start } else { 0.0 })
        .collect())
}

/// DTFT magnitude of the filter kernel, in dB.
pub fn lowpass_response(max_hz: f64, points: usize) -> Vec<f64> {
    let h = lowpass_kernel();
    let center = (h.len() / 2) as f64;
    (0..points)
        .map(|i| {
            let f = if points > 1 { max_hz * i as f64 / (points - 1) as f64 } else { 0.0 };
            let w = 2.0 * PI * f / SAMPLE_RATE_HZ;
            // Symmetric kernel: the response is real about the centre tap.
            let gain: f64 = h
                .iter()
                .enumerate()
                .map(|(n, &c)| c * (w * (n as f64 - center)).cos())
                .sum();
            20.0 * gain.abs().max(1e-12).log10()
        })
        .collect()
}
