//! Browser bindings for three small views of the signal path: the spectrum
//! of a synthetic texture under a chosen action, fast versus classic
//! Griffin-Lim convergence, and the action low-pass response.
//!
//! Everything in [`demo`] is plain Rust so it can be tested natively; the
//! exported functions only convert errors for JavaScript.

use wasm_bindgen::prelude::*;

pub mod demo;

/// Names of the demo materials, in index order.
#[wasm_bindgen(js_name = materialNames)]
pub fn material_names() -> Vec<String> {
    demo::material_names()
}

/// 101 magnitudes (0..1000 Hz in 10 Hz steps) of the chosen material's
/// vibration at constant force (N) and speed (mm/s).
#[wasm_bindgen(js_name = textureSpectrum)]
pub fn texture_spectrum(material: usize, force: f64, speed: f64) -> Result<Vec<f64>, JsError> {
    demo::texture_spectrum(material, force, speed).map_err(|e| JsError::new(&e.to_string()))
}

/// Consistency error per iteration, relative to the random-phase start, for
/// a two-tone test signal.
#[wasm_bindgen(js_name = glaConvergence)]
pub fn gla_convergence(tone_a_hz: f64, tone_b_hz: f64, iterations: usize, momentum: f64) -> Result<Vec<f64>, JsError> {
    demo::gla_convergence(tone_a_hz, tone_b_hz, iterations, momentum).map_err(|e| JsError::new(&e.to_string()))
}

/// Gain in dB of the action low-pass at `points` frequencies from 0 to
/// `max_hz`.
#[wasm_bindgen(js_name = lowpassResponse)]
pub fn lowpass_response(max_hz: f64, points: usize) -> Vec<f64> {
    demo::lowpass_response(max_hz, points)
}
