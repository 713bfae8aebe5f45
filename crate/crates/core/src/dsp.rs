//! Signal-processing kernels: real DFT, short-time transforms, overlap-add
//! inversion, the 20 Hz action low-pass filter and band-limited resampling.
//!
//! All signals run at a fixed 10 kHz. A spectral frame is the magnitude of the
//! DFT of a 1000-sample (100 ms) window, truncated to the 101 bins at or below
//! 1 kHz, so bin `k` sits at `10 * k` Hz.
//!
//! The forward DFT is unnormalized and the inverse carries the `1/N` factor.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

pub use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

pub const SAMPLE_RATE_HZ: f64 = 10_000.0;
/// Samples per spectral frame (100 ms).
pub const FRAME_LEN: usize = 1000;
/// One-sided bins of a full 1000-point frame.
pub const FULL_BINS: usize = FRAME_LEN / 2 + 1;
/// Bins kept in a [`SpectralFrame`] (0..=1000 Hz).
pub const NUM_BINS: usize = 101;
pub const BIN_HZ: f64 = SAMPLE_RATE_HZ / FRAME_LEN as f64;

/// Length of the low-pass kernel used on force and speed.
pub const LOWPASS_TAPS: usize = 2001;
pub const LOWPASS_CUTOFF_HZ: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        check_finite("signal", &samples)?;
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    /// A signal at the fixed 10 kHz rate.
    pub fn at_10khz(samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, SAMPLE_RATE_HZ)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    fn require_10khz(&self) -> Result<()> {
        if self.sample_rate_hz != SAMPLE_RATE_HZ {
            return Err(Error::UnsupportedRate(self.sample_rate_hz));
        }
        Ok(())
    }
}

/// Magnitudes of a 1000-sample window at or below 1 kHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFrame {
    pub mags: Vec<f64>,
    /// Sample offset of the window in its source signal.
    pub origin_index: usize,
}

impl SpectralFrame {
    pub fn new(mags: Vec<f64>, origin_index: usize) -> Result<Self> {
        if mags.len() != NUM_BINS {
            return Err(Error::LengthMismatch {
                what: "spectral frame",
                expected: NUM_BINS,
                actual: mags.len(),
            });
        }
        check_finite("spectral frame", &mags)?;
        if let Some(bin) = mags.iter().position(|&m| m < 0.0) {
            return Err(Error::NegativeMagnitude { frame: 0, bin });
        }
        Ok(Self { mags, origin_index })
    }

    pub fn zeros(origin_index: usize) -> Self {
        Self {
            mags: vec![0.0; NUM_BINS],
            origin_index,
        }
    }

    pub fn argmax_bin(&self) -> usize {
        argmax(&self.mags)
    }

    /// Zero-fills bins above 1 kHz to produce a full one-sided magnitude frame.
    pub fn to_full_bins(&self) -> Vec<f64> {
        let mut full = vec![0.0; FULL_BINS];
        full[..NUM_BINS].copy_from_slice(&self.mags);
        full
    }
}

/// One-sided complex spectrum of a 1000-sample frame (501 bins).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexFrame {
    pub bins: Vec<Complex64>,
}

impl ComplexFrame {
    pub fn zeros() -> Self {
        Self {
            bins: vec![Complex64::new(0.0, 0.0); FULL_BINS],
        }
    }

    pub fn from_polar(mags: &[f64], phases: &[f64]) -> Self {
        Self {
            bins: mags
                .iter()
                .zip(phases)
                .map(|(&m, &p)| Complex64::from_polar(m, p))
                .collect(),
        }
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm()).collect()
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

fn check_frame_len(n: usize) -> Result<()> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::OddLength(n));
    }
    Ok(())
}

/// One-sided DFT `X[k] = sum_n x[n] exp(-i 2 pi k n / N)` for `k = 0..=N/2`.
pub fn rdft(frame: &[f64]) -> Result<Vec<Complex64>> {
    check_frame_len(frame.len())?;
    check_finite("rdft input", frame)?;
    Ok(rdft_unchecked(frame))
}

pub(crate) fn rdft_unchecked(frame: &[f64]) -> Vec<Complex64> {
    let n = frame.len();
    let mut buf: Vec<Complex64> = frame.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    plan(n, FftDirection::Forward).process(&mut buf);
    buf.truncate(n / 2 + 1);
    buf
}

/// Inverse of [`rdft`]: rebuilds the Hermitian spectrum and returns `N` real
/// samples. The imaginary parts of the DC and Nyquist bins are ignored.
pub fn irdft(spectrum: &[Complex64], n: usize) -> Result<Vec<f64>> {
    check_frame_len(n)?;
    if spectrum.len() != n / 2 + 1 {
        return Err(Error::LengthMismatch {
            what: "one-sided spectrum",
            expected: n / 2 + 1,
            actual: spectrum.len(),
        });
    }
    Ok(irdft_unchecked(spectrum, n))
}

pub(crate) fn irdft_unchecked(spectrum: &[Complex64], n: usize) -> Vec<f64> {
    let half = n / 2;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[0] = Complex64::new(spectrum[0].re, 0.0);
    buf[half] = Complex64::new(spectrum[half].re, 0.0);
    for k in 1..half {
        buf[k] = spectrum[k];
        buf[n - k] = spectrum[k].conj();
    }
    plan(n, FftDirection::Inverse).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

/// Magnitudes of bins 0..=100 of a one-sided 1000-point spectrum at 10 kHz.
pub fn mag_leq_1khz(spectrum: &[Complex64], sample_rate_hz: f64) -> Result<SpectralFrame> {
    if spectrum.len() != FULL_BINS {
        return Err(Error::LengthMismatch {
            what: "one-sided spectrum",
            expected: FULL_BINS,
            actual: spectrum.len(),
        });
    }
    if sample_rate_hz != SAMPLE_RATE_HZ {
        return Err(Error::UnsupportedRate(sample_rate_hz));
    }
    Ok(SpectralFrame {
        mags: spectrum[..NUM_BINS].iter().map(|c| c.norm()).collect(),
        origin_index: 0,
    })
}

/// Spectral frame of the 1000 samples starting at `start`, rectangular window.
pub(crate) fn frame_at(samples: &[f64], start: usize) -> SpectralFrame {
    let spectrum = rdft_unchecked(&samples[start..start + FRAME_LEN]);
    SpectralFrame {
        mags: spectrum[..NUM_BINS].iter().map(|c| c.norm()).collect(),
        origin_index: start,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rectangular,
    /// Periodic Hann, `0.5 - 0.5 cos(2 pi n / N)`.
    Hann,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => hann_periodic(n),
        }
    }
}

pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Number of frames of length `win` at stride `hop` in `len` samples.
pub fn frame_count(len: usize, win: usize, hop: usize) -> usize {
    if len < win || hop == 0 {
        0
    } else {
        (len - win) / hop + 1
    }
}

/// Short-time magnitude frames (1000-sample windows, bins <= 1 kHz).
pub fn stft_mag(signal: &Signal, hop: usize, window: Window) -> Result<Vec<SpectralFrame>> {
    signal.require_10khz()?;
    if hop == 0 {
        return Err(Error::invalid("hop must be at least 1"));
    }
    if signal.len() < FRAME_LEN {
        return Err(Error::TooShort {
            needed: FRAME_LEN,
            actual: signal.len(),
        });
    }
    let count = frame_count(signal.len(), FRAME_LEN, hop);
    let frames = match window {
        Window::Rectangular => (0..count).map(|i| frame_at(&signal.samples, i * hop)).collect(),
        Window::Hann => {
            let w = hann_periodic(FRAME_LEN);
            (0..count)
                .map(|i| {
                    let start = i * hop;
                    let windowed: Vec<f64> = signal.samples[start..start + FRAME_LEN]
                        .iter()
                        .zip(&w)
                        .map(|(x, w)| x * w)
                        .collect();
                    let spectrum = rdft_unchecked(&windowed);
                    SpectralFrame {
                        mags: spectrum[..NUM_BINS].iter().map(|c| c.norm()).collect(),
                        origin_index: start,
                    }
                })
                .collect()
        }
    };
    Ok(frames)
}

/// Full one-sided complex STFT of `samples` with a `win`-point window.
pub fn stft_complex(
    samples: &[f64],
    win: usize,
    hop: usize,
    window: Window,
) -> Result<Vec<ComplexFrame>> {
    check_frame_len(win)?;
    if hop == 0 {
        return Err(Error::invalid("hop must be at least 1"));
    }
    if samples.len() < win {
        return Err(Error::TooShort {
            needed: win,
            actual: samples.len(),
        });
    }
    check_finite("stft input", samples)?;
    let w = window.coefficients(win);
    Ok(stft_complex_with(samples, &w, hop))
}

pub(crate) fn stft_complex_with(samples: &[f64], w: &[f64], hop: usize) -> Vec<ComplexFrame> {
    let win = w.len();
    let mut windowed = vec![0.0; win];
    (0..frame_count(samples.len(), win, hop))
        .map(|i| {
            let start = i * hop;
            for ((dst, x), w) in windowed.iter_mut().zip(&samples[start..start + win]).zip(w) {
                *dst = x * w;
            }
            ComplexFrame {
                bins: rdft_unchecked(&windowed),
            }
        })
        .collect()
}

/// Weighted overlap-add inversion with a periodic Hann synthesis window.
///
/// Each inverse frame is multiplied by the window, summed at `hop` offsets and
/// divided by the summed squared window. Samples where that sum vanishes are
/// set to zero. For frames produced by [`stft_complex`] with a Hann window
/// this is the least-squares inverse, so consistent frames are reproduced.
pub fn istft_overlap_add(frames: &[ComplexFrame], hop: usize) -> Result<Signal> {
    if frames.is_empty() {
        return Err(Error::Empty("istft frames"));
    }
    let bins = frames[0].bins.len();
    if bins < 2 {
        return Err(Error::invalid("frames need at least 2 bins"));
    }
    let win = 2 * (bins - 1);
    if hop == 0 || win % hop != 0 {
        return Err(Error::invalid(format!(
            "hop {hop} must divide the window length {win}"
        )));
    }
    for f in frames {
        if f.bins.len() != bins {
            return Err(Error::LengthMismatch {
                what: "istft frame",
                expected: bins,
                actual: f.bins.len(),
            });
        }
        if f.bins.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite {
                what: "istft frame",
                index: 0,
            });
        }
    }
    let w = hann_periodic(win);
    let norm = ola_norm(frames.len(), &w, hop);
    Signal::at_10khz(istft_with(frames, &w, hop, &norm))
}

/// Reciprocal of the summed squared window, zero where the sum vanishes.
pub(crate) fn ola_norm(frame_count: usize, w: &[f64], hop: usize) -> Vec<f64> {
    let win = w.len();
    let len = (frame_count - 1) * hop + win;
    let mut acc = vec![0.0; len];
    for i in 0..frame_count {
        for (a, w) in acc[i * hop..i * hop + win].iter_mut().zip(w) {
            *a += w * w;
        }
    }
    acc.iter()
        .map(|&s| if s > 1e-12 { 1.0 / s } else { 0.0 })
        .collect()
}

pub(crate) fn istft_with(frames: &[ComplexFrame], w: &[f64], hop: usize, norm: &[f64]) -> Vec<f64> {
    let win = w.len();
    let mut out = vec![0.0; norm.len()];
    for (i, frame) in frames.iter().enumerate() {
        let time = irdft_unchecked(&frame.bins, win);
        for ((o, x), w) in out[i * hop..i * hop + win].iter_mut().zip(&time).zip(w) {
            *o += x * w;
        }
    }
    for (o, n) in out.iter_mut().zip(norm) {
        *o *= n;
    }
    out
}

/// 2001-tap Hamming-windowed sinc, 20 Hz cutoff at 10 kHz, unit DC gain.
pub fn lowpass_kernel() -> &'static [f64] {
    static KERNEL: OnceLock<Vec<f64>> = OnceLock::new();
    KERNEL.get_or_init(|| design_lowpass(LOWPASS_TAPS, LOWPASS_CUTOFF_HZ / SAMPLE_RATE_HZ))
}

/// Windowed-sinc low-pass design; `cutoff` is in cycles per sample.
pub fn design_lowpass(taps: usize, cutoff: f64) -> Vec<f64> {
    let mid = (taps - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let t = n as f64 - mid;
            let sinc = if t == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * t).sin() / (PI * t)
            };
            let hamming = 0.54 - 0.46 * (2.0 * PI * n as f64 / (taps - 1) as f64).cos();
            sinc * hamming
        })
        .collect();
    let dc: f64 = h.iter().sum();
    for v in &mut h {
        *v /= dc;
    }
    h
}

/// Zero-phase 20 Hz low-pass. Edges are padded by replicating the first and
/// last samples; output length equals input length.
pub fn lowpass_20hz(signal: &Signal) -> Result<Signal> {
    signal.require_10khz()?;
    if signal.is_empty() {
        return Ok(signal.clone());
    }
    let h = lowpass_kernel();
    let half = h.len() / 2;
    let x = &signal.samples;
    let mut padded = Vec::with_capacity(x.len() + 2 * half);
    padded.extend(std::iter::repeat_n(x[0], half));
    padded.extend_from_slice(x);
    padded.extend(std::iter::repeat_n(x[x.len() - 1], half));
    let full = fft_convolve(&padded, h);
    let out = full[2 * half..2 * half + x.len()].to_vec();
    Signal::at_10khz(out)
}

/// The last `count` samples of [`lowpass_20hz`] applied to `buffer`, computed
/// directly. Used by streaming sessions that only need the newest outputs.
pub fn lowpass_20hz_tail(buffer: &[f64], count: usize) -> Vec<f64> {
    let h = lowpass_kernel();
    let half = h.len() as isize / 2;
    let len = buffer.len() as isize;
    if len == 0 {
        return vec![0.0; count];
    }
    let count = count.min(buffer.len());
    (buffer.len() - count..buffer.len())
        .map(|i| {
            h.iter()
                .enumerate()
                .map(|(j, &hj)| {
                    let k = (i as isize + half - j as isize).clamp(0, len - 1);
                    hj * buffer[k as usize]
                })
                .sum()
        })
        .collect()
}

/// Full linear convolution via zero-padded FFT.
pub fn fft_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();
    let mut a: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(n, Complex64::new(0.0, 0.0));
    let mut b: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    b.resize(n, Complex64::new(0.0, 0.0));
    let fwd = plan(n, FftDirection::Forward);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (a, b) in a.iter_mut().zip(&b) {
        *a *= b;
    }
    plan(n, FftDirection::Inverse).process(&mut a);
    let scale = 1.0 / n as f64;
    a.iter().take(out_len).map(|c| c.re * scale).collect()
}

/// RMS over `samples[skip..len - skip]`.
pub fn interior_rms(samples: &[f64], skip: usize) -> f64 {
    let interior = &samples[skip..samples.len() - skip];
    (interior.iter().map(|x| x * x).sum::<f64>() / interior.len() as f64).sqrt()
}

/// Zero crossings of the resampling kernel on each side, at the lower rate.
const RESAMPLE_ZEROS: f64 = 32.0;

/// Band-limited resampling with a Hann-windowed sinc whose cutoff sits at
/// 90% of the lower Nyquist. Weights are renormalised per output sample, so
/// constants survive exactly, edges included (samples past the ends repeat
/// the end values).
pub fn resample(samples: &[f64], from_hz: f64, to_hz: f64) -> Result<Vec<f64>> {
    for rate in [from_hz, to_hz] {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::UnsupportedRate(rate));
        }
    }
    check_finite("resample input", samples)?;
    if samples.is_empty() || from_hz == to_hz {
        return Ok(samples.to_vec());
    }
    let ratio = to_hz / from_hz;
    // Cutoff in cycles per input sample.
    let cutoff = 0.45 * ratio.min(1.0);
    let half = RESAMPLE_ZEROS / (2.0 * cutoff / 0.9);
    let n = samples.len();
    let out_len = ((n - 1) as f64 * ratio).floor() as usize + 1;
    let last = (n - 1) as isize;
    Ok((0..out_len)
        .map(|m| {
            let t = m as f64 / ratio;
            let (lo, hi) = ((t - half).ceil() as isize, (t + half).floor() as isize);
            let (mut acc, mut norm) = (0.0, 0.0);
            for i in lo..=hi {
                let x = t - i as f64;
                let arg = 2.0 * cutoff * x;
                let sinc = if arg == 0.0 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
                let w = 0.5 * (1.0 + (PI * x / half).cos());
                let h = sinc * w;
                acc += h * samples[i.clamp(0, last) as usize];
                norm += h;
            }
            acc / norm
        })
        .collect())
}
