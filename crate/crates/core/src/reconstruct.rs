//! Temporal signals from magnitude frames: fast Griffin-Lim for offline
//! reconstruction and an overlap-add stitcher for streaming.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{
    hann_periodic, irdft_unchecked, istft_with, ola_norm, stft_complex_with, ComplexFrame, Signal, SpectralFrame,
    FRAME_LEN, FULL_BINS,
};
use crate::error::{check_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlaConfig {
    pub iterations: usize,
    /// Fast-GLA extrapolation weight; 0 gives classic GLA.
    pub momentum: f64,
    pub hop: usize,
    pub phase_seed: u64,
    /// Floor on the overlap-add window power, as a fraction of its peak.
    /// Without it the few samples covered only by a frame's tapered edge
    /// are divided by a near-zero sum and blow up when the frames are
    /// inconsistent, as predicted frames are.
    pub min_window_power: f64,
}

impl Default for GlaConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            momentum: 0.99,
            hop: 250,
            phase_seed: 0,
            min_window_power: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlaOutput {
    pub signal: Signal,
    /// Consistency error of the random-phase start followed by one entry per
    /// iteration.
    pub consistency: Vec<f64>,
}

fn random_phases(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..FULL_BINS)
        .map(|k| {
            if k == 0 || k == FULL_BINS - 1 {
                0.0
            } else {
                rng.random_range(0.0..2.0 * PI)
            }
        })
        .collect()
}

/// `sum_frames sum_k w_k (|c_k| - target_k)^2` with `w_k = 2` for bins that
/// appear twice in the two-sided spectrum and 1 for DC and Nyquist.
fn consistency_error(frames: &[ComplexFrame], targets: &[Vec<f64>]) -> f64 {
    frames
        .iter()
        .zip(targets)
        .map(|(f, t)| {
            f.bins
                .iter()
                .zip(t)
                .enumerate()
                .map(|(k, (c, m))| {
                    let w = if k == 0 || k == FULL_BINS - 1 { 1.0 } else { 2.0 };
                    w * (c.norm() - m).powi(2)
                })
                .sum::<f64>()
        })
        .sum()
}

/// Replaces magnitudes by the targets, keeping phases (zero-magnitude bins
/// take phase 0).
fn project_magnitudes(frames: &mut [ComplexFrame], targets: &[Vec<f64>]) {
    for (f, t) in frames.iter_mut().zip(targets) {
        for (c, &m) in f.bins.iter_mut().zip(t) {
            let n = c.norm();
            *c = if n > 0.0 { *c * (m / n) } else { Complex64::new(m, 0.0) };
        }
    }
}

/// Applies `floor * peak` as the smallest window power in an `ola_norm`
/// reciprocal table.
fn floored_norm(norm: Vec<f64>, floor: f64) -> Vec<f64> {
    let min_recip = norm.iter().copied().filter(|&n| n > 0.0).fold(f64::INFINITY, f64::min);
    if floor == 0.0 || !min_recip.is_finite() {
        return norm;
    }
    let cap = 1.0 / (floor / min_recip);
    norm.into_iter().map(|n| if n == 0.0 { cap } else { n.min(cap) }).collect()
}

/// Phase retrieval for full one-sided (501-bin) Hann-window magnitude frames
/// spaced `cfg.hop` apart.
pub fn gla_reconstruct(targets: &[Vec<f64>], cfg: &GlaConfig) -> Result<GlaOutput> {
    if targets.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            actual: targets.len(),
        });
    }
    for (i, t) in targets.iter().enumerate() {
        if t.len() != FULL_BINS {
            return Err(Error::LengthMismatch {
                what: "GLA target frame",
                expected: FULL_BINS,
                actual: t.len(),
            });
        }
        check_finite("GLA target frame", t)?;
        if let Some(bin) = t.iter().position(|&m| m < 0.0) {
            return Err(Error::NegativeMagnitude { frame: i, bin });
        }
    }
    if cfg.iterations == 0 || cfg.hop == 0 || FRAME_LEN % cfg.hop != 0 {
        return Err(Error::invalid("GLA needs at least one iteration and a hop dividing 1000"));
    }
    if !(0.0..1.0).contains(&cfg.momentum) {
        return Err(Error::invalid(format!("momentum {} outside [0, 1)", cfg.momentum)));
    }
    let w = hann_periodic(FRAME_LEN);
    if !(0.0..=1.0).contains(&cfg.min_window_power) {
        return Err(Error::invalid("min_window_power outside [0, 1]"));
    }
    let norm = floored_norm(ola_norm(targets.len(), &w, cfg.hop), cfg.min_window_power);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.phase_seed);
    let mut t: Vec<ComplexFrame> = targets
        .iter()
        .map(|m| ComplexFrame::from_polar(m, &random_phases(&mut rng)))
        .collect();

    let mut signal = istft_with(&t, &w, cfg.hop, &norm);
    let mut c_prev = stft_complex_with(&signal, &w, cfg.hop);
    let mut consistency = vec![consistency_error(&c_prev, targets)];
    t.clone_from(&c_prev);
    for _ in 0..cfg.iterations {
        project_magnitudes(&mut t, targets);
        signal = istft_with(&t, &w, cfg.hop, &norm);
        let c = stft_complex_with(&signal, &w, cfg.hop);
        consistency.push(consistency_error(&c, targets));
        for ((tf, cf), pf) in t.iter_mut().zip(&c).zip(&c_prev) {
            for ((tv, cv), pv) in tf.bins.iter_mut().zip(&cf.bins).zip(&pf.bins) {
                *tv = cv + (cv - pv) * cfg.momentum;
            }
        }
        c_prev = c;
    }
    Ok(GlaOutput {
        signal: Signal::at_10khz(signal)?,
        consistency,
    })
}

/// Hann-window magnitudes estimated from rectangular-window magnitudes.
///
/// The Hann spectrum is `0.5 X_k - 0.25 (X_{k-1} + X_{k+1})`; with
/// unknown, independent phases its expected power is the weighted sum of the
/// neighbouring powers.
pub fn rect_to_hann(mags: &[f64]) -> Vec<f64> {
    let n = mags.len();
    let at = |k: isize| -> f64 {
        if k < 0 {
            mags[(-k) as usize % n]
        } else if (k as usize) < n {
            mags[k as usize]
        } else {
            mags[2 * (n - 1) - k as usize]
        }
    };
    (0..n as isize)
        .map(|k| {
            let (a, b, c) = (at(k - 1), at(k), at(k + 1));
            (0.25 * b * b + 0.0625 * (a * a + c * c)).sqrt()
        })
        .collect()
}

/// GLA on model predictions: 101-bin rectangular frames spaced `cfg.hop`
/// apart, converted to Hann magnitudes and zero-filled above 1 kHz.
pub fn gla_from_predictions(frames: &[SpectralFrame], cfg: &GlaConfig) -> Result<GlaOutput> {
    let targets: Vec<Vec<f64>> = frames.iter().map(|f| rect_to_hann(&f.to_full_bins())).collect();
    gla_reconstruct(&targets, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StitchMode {
    /// Per-bin phases advance by the bin frequency times the hop.
    Coherent,
    /// Fresh random phases for every frame.
    RandomPhase,
}

/// Streaming overlap-add state for one output stream.
#[derive(Debug, Clone)]
pub struct StitchState {
    pub hop: usize,
    pub mode: StitchMode,
    /// Per-bin phase in [0, 2 pi).
    pub phases: Vec<f64>,
    window: Vec<f64>,
    acc: Vec<f64>,
    weight: Vec<f64>,
    rng: ChaCha8Rng,
}

impl StitchState {
    pub fn new(hop: usize, mode: StitchMode, seed: u64) -> Result<Self> {
        if hop == 0 || hop > FRAME_LEN {
            return Err(Error::invalid(format!("stitch hop {hop} outside 1..=1000")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phases = random_phases(&mut rng);
        Ok(Self {
            hop,
            mode,
            phases,
            window: hann_periodic(FRAME_LEN),
            acc: vec![0.0; FRAME_LEN],
            weight: vec![0.0; FRAME_LEN],
            rng,
        })
    }

    /// Adds one frame and returns the next `hop` output samples.
    pub fn push(&mut self, frame: &SpectralFrame) -> Vec<f64> {
        let mags = frame.to_full_bins();
        if self.mode == StitchMode::RandomPhase {
            self.phases = random_phases(&mut self.rng);
        }
        let spectrum: Vec<Complex64> = mags
            .iter()
            .zip(&self.phases)
            .map(|(&m, &p)| Complex64::from_polar(m, p))
            .collect();
        let segment = irdft_unchecked(&spectrum, FRAME_LEN);
        for j in 0..FRAME_LEN {
            self.acc[j] += self.window[j] * segment[j];
            self.weight[j] += self.window[j];
        }
        let out: Vec<f64> = (0..self.hop)
            .map(|j| {
                if self.weight[j] > 1e-9 {
                    self.acc[j] / self.weight[j]
                } else {
                    0.0
                }
            })
            .collect();
        self.acc.copy_within(self.hop.., 0);
        self.weight.copy_within(self.hop.., 0);
        self.acc[FRAME_LEN - self.hop..].fill(0.0);
        self.weight[FRAME_LEN - self.hop..].fill(0.0);
        if self.mode == StitchMode::Coherent {
            let step = 2.0 * PI * self.hop as f64 / FRAME_LEN as f64;
            for (k, p) in self.phases.iter_mut().enumerate() {
                *p = (*p + step * k as f64).rem_euclid(2.0 * PI);
            }
        }
        out
    }
}

/// One block of `state.hop` samples per frame.
pub fn stitch_streaming(frame: &SpectralFrame, state: &mut StitchState) -> Vec<f64> {
    state.push(frame)
}

/// Stitches a whole frame sequence; frame `i` describes the window starting
/// `i * hop` samples after the first.
pub fn stitch_sequence(frames: &[SpectralFrame], hop: usize, mode: StitchMode, seed: u64) -> Result<Signal> {
    let mut state = StitchState::new(hop, mode, seed)?;
    let mut out = Vec::with_capacity(frames.len() * hop);
    for f in frames {
        out.extend(state.push(f));
    }
    Signal::at_10khz(out)
}
