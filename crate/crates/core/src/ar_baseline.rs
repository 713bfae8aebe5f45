//! Piecewise autoregressive baseline.
//!
//! Models follow `x[n] = sum_k a_k x[n-k] + e[n]` with `e ~ N(0, noise_std^2)`.
//! A bank holds one model per occupied cell of a force/speed grid; synthesis
//! blends the nearest models through their line spectral frequencies.
//!
//! Bank file (`TXSYNARB`, version 1) payload:
//!
//! ```text
//! u64 bank count
//! per bank:
//!   str material_id
//!   f64 force_min, f64 force_max, f64 speed_min, f64 speed_max
//!   u64 model count
//!   per model: u64 order, f64s coefficients, f64 noise_std,
//!              f64 anchor_force, f64 anchor_speed
//! ```

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::container::{Reader, Writer};
use crate::dataset::{Recording, SplitAssignment, Subset};
use crate::dsp::Signal;
use crate::error::{Error, Result};

pub const BANK_MAGIC: &[u8; 8] = b"TXSYNARB";
pub const BANK_VERSION: u32 = 1;
pub const DEFAULT_ORDER: usize = 30;
/// Samples per chunk when partitioning recordings over the action grid.
pub const CHUNK_LEN: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    pub coefficients: Vec<f64>,
    pub noise_std: f64,
    /// (force N, speed mm/s)
    pub anchor: (f64, f64),
    lsf: Vec<f64>,
}

impl ArModel {
    pub fn new(coefficients: Vec<f64>, noise_std: f64, anchor: (f64, f64)) -> Result<Self> {
        crate::error::check_finite("AR coefficients", &coefficients)?;
        if coefficients.is_empty() {
            return Err(Error::invalid("AR order must be at least 1"));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::invalid(format!("noise std {noise_std} is not a non-negative number")));
        }
        let lsf = to_lsf(&coefficients)?;
        Ok(Self {
            coefficients,
            noise_std,
            anchor,
            lsf,
        })
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// Line spectral frequencies in ascending order, radians in (0, pi).
    pub fn lsf(&self) -> &[f64] {
        &self.lsf
    }
}

/// Burg estimate of an order-`p` model over one or more segments that share
/// the same statistics. Reflection coefficients never exceed 1 in
/// magnitude, so the model is stable.
pub fn fit_ar_segments(segments: &[&[f64]], p: usize) -> Result<(Vec<f64>, f64)> {
    if p == 0 {
        return Err(Error::invalid("AR order must be at least 1"));
    }
    let total: usize = segments.iter().map(|s| s.len()).sum();
    if total < 10 * p || segments.iter().all(|s| s.len() <= p) {
        return Err(Error::TooShort {
            needed: 10 * p,
            actual: total,
        });
    }
    for s in segments {
        crate::error::check_finite("AR segment", s)?;
    }
    let mut f: Vec<Vec<f64>> = segments.iter().map(|s| s.to_vec()).collect();
    let mut b = f.clone();
    let mut a = vec![1.0];
    let mut power = segments.iter().flat_map(|s| s.iter()).map(|v| v * v).sum::<f64>() / total as f64;
    for m in 1..=p {
        let (mut num, mut den) = (0.0, 0.0);
        for (fs, bs) in f.iter().zip(&b) {
            for n in m..fs.len() {
                num += fs[n] * bs[n - 1];
                den += fs[n] * fs[n] + bs[n - 1] * bs[n - 1];
            }
        }
        let k = if den > 0.0 { (-2.0 * num / den).clamp(-1.0, 1.0) } else { 0.0 };
        let mut next = a.clone();
        next.push(0.0);
        for i in 1..=m {
            next[i] += k * a.get(m - i).copied().unwrap_or(0.0);
        }
        a = next;
        for (fs, bs) in f.iter_mut().zip(b.iter_mut()) {
            for n in (m..fs.len()).rev() {
                let fv = fs[n];
                let bv = bs[n - 1];
                fs[n] = fv + k * bv;
                bs[n] = bv + k * fv;
            }
        }
        power *= 1.0 - k * k;
    }
    Ok((a[1..].iter().map(|v| -v).collect(), power.max(0.0).sqrt()))
}

/// Burg fit of a single segment. The anchor is left at the origin.
pub fn fit_ar(segment: &[f64], p: usize) -> Result<ArModel> {
    let (coefficients, noise_std) = fit_ar_segments(&[segment], p)?;
    ArModel::new(coefficients, noise_std, (0.0, 0.0))
}

// ---------------------------------------------------------------- LSF

/// `Re` (symmetric) or `Im` (antisymmetric) part of
/// `e^{i w (p+1)/2} C(e^{iw})`, divided by its trivial zeros at 0 and pi.
fn lsf_function(c: &[f64], w: f64, symmetric: bool, odd_order: bool) -> f64 {
    let half = (c.len() - 1) as f64 / 2.0;
    let mut v = 0.0;
    for (k, ck) in c.iter().enumerate() {
        let arg = (half - k as f64) * w;
        v += ck * if symmetric { arg.cos() } else { arg.sin() };
    }
    match (symmetric, odd_order) {
        (true, false) => v / (w / 2.0).cos(),
        (true, true) => v,
        (false, false) => v / (w / 2.0).sin(),
        (false, true) => v / w.sin(),
    }
}

fn find_roots(c: &[f64], symmetric: bool, odd_order: bool, expected: usize, grid: usize) -> Vec<f64> {
    let f = |w: f64| lsf_function(c, w, symmetric, odd_order);
    let mut roots = Vec::with_capacity(expected);
    let step = PI / grid as f64;
    let mut lo = step * 1e-3;
    let mut flo = f(lo);
    for i in 1..=grid {
        let hi = if i == grid { PI - step * 1e-3 } else { i as f64 * step };
        let fhi = f(hi);
        if flo == 0.0 {
            roots.push(lo);
        } else if flo * fhi < 0.0 {
            let (mut a, mut b, mut fa) = (lo, hi, flo);
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                let fm = f(mid);
                if fm == 0.0 || b - a < 1e-15 {
                    a = mid;
                    b = mid;
                    break;
                }
                if fa * fm < 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        lo = hi;
        flo = fhi;
    }
    roots
}

/// Line spectral frequencies of `A(z) = 1 - sum a_k z^-k`.
pub fn to_lsf(coefficients: &[f64]) -> Result<Vec<f64>> {
    let p = coefficients.len();
    let mut a = vec![1.0];
    a.extend(coefficients.iter().map(|c| -c));
    a.push(0.0);
    let sum: Vec<f64> = (0..=p + 1).map(|k| a[k] + a[p + 1 - k]).collect();
    let diff: Vec<f64> = (0..=p + 1).map(|k| a[k] - a[p + 1 - k]).collect();
    let odd = p % 2 == 1;
    let (np, nq) = if odd { (p.div_ceil(2), p / 2) } else { (p / 2, p / 2) };
    for grid in [2048, 16384, 131072] {
        let rp = find_roots(&sum, true, odd, np, grid);
        let rq = find_roots(&diff, false, odd, nq, grid);
        if rp.len() == np && rq.len() == nq {
            let mut all: Vec<f64> = rp.into_iter().chain(rq).collect();
            all.sort_by(|x, y| x.total_cmp(y));
            return Ok(all);
        }
    }
    Err(Error::invalid("line spectral frequencies could not be resolved (unstable or degenerate model)"))
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Inverse of [`to_lsf`].
pub fn from_lsf(lsf: &[f64]) -> Vec<f64> {
    let p = lsf.len();
    let mut pp = vec![1.0];
    let mut qq = vec![1.0];
    for (i, w) in lsf.iter().enumerate() {
        let quad = [1.0, -2.0 * w.cos(), 1.0];
        if i % 2 == 0 {
            pp = poly_mul(&pp, &quad);
        } else {
            qq = poly_mul(&qq, &quad);
        }
    }
    if p % 2 == 0 {
        pp = poly_mul(&pp, &[1.0, 1.0]);
        qq = poly_mul(&qq, &[1.0, -1.0]);
    } else {
        qq = poly_mul(&qq, &[1.0, 0.0, -1.0]);
    }
    (1..=p).map(|k| -0.5 * (pp[k] + qq[k])).collect()
}

// ---------------------------------------------------------------- bank

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub force_bins: usize,
    pub speed_bins: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            force_bins: 4,
            speed_bins: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArBank {
    pub material_id: String,
    pub models: Vec<ArModel>,
    pub force_range: (f64, f64),
    pub speed_range: (f64, f64),
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn bin_of(v: f64, range: (f64, f64), bins: usize) -> usize {
    let width = range.1 - range.0;
    if width <= 0.0 {
        return 0;
    }
    (((v - range.0) / width * bins as f64).floor() as usize).min(bins - 1)
}

/// One Burg model per occupied grid cell over the training and validation
/// sections. Sections are cut into 500-sample chunks, each assigned to a
/// cell by its mean force and speed.
pub fn build_bank(rec: &Recording, split: &SplitAssignment, p: usize, grid: Grid) -> Result<ArBank> {
    if grid.force_bins == 0 || grid.speed_bins == 0 {
        return Err(Error::invalid("grid needs at least one bin per axis"));
    }
    let force = &rec.force_n.samples;
    let speed = &rec.speed_mm_s.samples;
    let accel = &rec.accel_ms2.samples;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let chunks: Vec<(std::ops::Range<usize>, f64, f64)> = split
        .sections(&[Subset::Train, Subset::Val])
        .into_iter()
        .flat_map(|sec| {
            let n = sec.len() / CHUNK_LEN;
            (0..n).map(move |i| sec.start + i * CHUNK_LEN..sec.start + (i + 1) * CHUNK_LEN)
        })
        .map(|r| {
            let (f, s) = (mean(&force[r.clone()]), mean(&speed[r.clone()]));
            (r, f, s)
        })
        .collect();
    if chunks.is_empty() {
        return Err(Error::Empty("training chunks"));
    }
    let span = |sel: fn(&(std::ops::Range<usize>, f64, f64)) -> f64| {
        chunks
            .iter()
            .map(sel)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let force_range = span(|c| c.1);
    let speed_range = span(|c| c.2);
    let mut cells: Vec<Vec<&std::ops::Range<usize>>> = vec![Vec::new(); grid.force_bins * grid.speed_bins];
    for (r, f, s) in &chunks {
        let cell = bin_of(*f, force_range, grid.force_bins) * grid.speed_bins + bin_of(*s, speed_range, grid.speed_bins);
        cells[cell].push(r);
    }
    let mut models = Vec::new();
    for ranges in cells.iter().filter(|c| c.len() * CHUNK_LEN >= 10 * p) {
        let segments: Vec<&[f64]> = ranges.iter().map(|r| &accel[(*r).clone()]).collect();
        let (coefficients, noise_std) = fit_ar_segments(&segments, p)?;
        let mut fs: Vec<f64> = ranges.iter().flat_map(|r| force[(*r).clone()].iter().copied()).collect();
        let mut ss: Vec<f64> = ranges.iter().flat_map(|r| speed[(*r).clone()].iter().copied()).collect();
        models.push(ArModel::new(coefficients, noise_std, (median(&mut fs), median(&mut ss)))?);
    }
    if models.is_empty() {
        return Err(Error::Empty("AR bins with enough samples"));
    }
    Ok(ArBank {
        material_id: rec.material_id.clone(),
        models,
        force_range,
        speed_range,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Anchors blended per update.
    pub neighbours: usize,
    /// Samples between coefficient updates; 1 interpolates every sample.
    pub refresh: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            neighbours: 3,
            refresh: 100,
        }
    }
}

impl ArBank {
    fn normalized(&self, force: f64, speed: f64) -> (f64, f64) {
        let scale = |v: f64, r: (f64, f64)| {
            let w = r.1 - r.0;
            if w > 0.0 {
                (v - r.0) / w
            } else {
                v - r.0
            }
        };
        (scale(force, self.force_range), scale(speed, self.speed_range))
    }

    /// Inverse-distance blend of the `k` nearest models, as
    /// (coefficients, noise_std).
    pub fn blend(&self, force: f64, speed: f64, k: usize) -> (Vec<f64>, f64) {
        let q = self.normalized(force, speed);
        let mut dist: Vec<(f64, usize)> = self
            .models
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let a = self.normalized(m.anchor.0, m.anchor.1);
                ((a.0 - q.0).hypot(a.1 - q.1), i)
            })
            .collect();
        dist.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        dist.truncate(k.max(1));
        if dist[0].0 < 1e-12 {
            let m = &self.models[dist[0].1];
            return (m.coefficients.clone(), m.noise_std);
        }
        let weights: Vec<f64> = dist.iter().map(|(d, _)| 1.0 / d).collect();
        let total: f64 = weights.iter().sum();
        let p = self.models[0].order();
        let mut lsf = vec![0.0; p];
        let mut noise = 0.0;
        for ((_, i), w) in dist.iter().zip(&weights) {
            let m = &self.models[*i];
            for (l, v) in lsf.iter_mut().zip(m.lsf()) {
                *l += w / total * v;
            }
            noise += w / total * m.noise_std;
        }
        (from_lsf(&lsf), noise)
    }
}

/// Drives the bank with seeded white noise along an action stream. Filter
/// state carries across coefficient updates.
pub fn synthesize(bank: &ArBank, force: &[f64], speed: &[f64], seed: u64, config: SynthConfig) -> Result<Signal> {
    if bank.models.is_empty() {
        return Err(Error::Empty("AR bank"));
    }
    if force.len() != speed.len() {
        return Err(Error::LengthMismatch {
            what: "speed stream",
            expected: force.len(),
            actual: speed.len(),
        });
    }
    let p = bank.models[0].order();
    if bank.models.iter().any(|m| m.order() != p) {
        return Err(Error::invalid("bank models differ in order"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history = vec![0.0; p];
    let mut head = 0;
    let mut out = Vec::with_capacity(force.len());
    let refresh = config.refresh.max(1);
    let (mut coeffs, mut noise) = (Vec::new(), 0.0);
    for n in 0..force.len() {
        if n % refresh == 0 {
            (coeffs, noise) = bank.blend(force[n], speed[n], config.neighbours);
        }
        let e: f64 = rng.sample(StandardNormal);
        let mut x = noise * e;
        for (k, a) in coeffs.iter().enumerate() {
            x += a * history[(head + p - 1 - k) % p];
        }
        history[head] = x;
        head = (head + 1) % p;
        out.push(x);
    }
    Signal::at_10khz(out)
}

// ---------------------------------------------------------------- files

pub fn banks_to_bytes(banks: &[ArBank]) -> Vec<u8> {
    let mut w = Writer::new(BANK_MAGIC, BANK_VERSION);
    w.u64(banks.len() as u64);
    for b in banks {
        w.str(&b.material_id);
        for v in [b.force_range.0, b.force_range.1, b.speed_range.0, b.speed_range.1] {
            w.f64(v);
        }
        w.u64(b.models.len() as u64);
        for m in &b.models {
            w.u64(m.order() as u64);
            w.f64s(&m.coefficients);
            w.f64(m.noise_std);
            w.f64(m.anchor.0);
            w.f64(m.anchor.1);
        }
    }
    w.finish()
}

pub fn banks_from_bytes(bytes: &[u8], path: &Path) -> Result<Vec<ArBank>> {
    let mut r = Reader::open(bytes, BANK_MAGIC, BANK_VERSION)?;
    let count = r.u64()? as usize;
    let mut banks = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let material_id = r.str()?;
        let force_range = (r.f64()?, r.f64()?);
        let speed_range = (r.f64()?, r.f64()?);
        let n = r.u64()? as usize;
        let mut models = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let order = r.u64()? as usize;
            let coefficients = r.f64s()?;
            if coefficients.len() != order {
                return Err(Error::MalformedHeader {
                    path: path.to_path_buf(),
                    reason: format!("model order {order} with {} coefficients", coefficients.len()),
                });
            }
            let noise_std = r.f64()?;
            let anchor = (r.f64()?, r.f64()?);
            models.push(ArModel::new(coefficients, noise_std, anchor)?);
        }
        banks.push(ArBank {
            material_id,
            models,
            force_range,
            speed_range,
        });
    }
    Ok(banks)
}

pub fn save_banks(banks: &[ArBank], path: &Path) -> Result<()> {
    std::fs::write(path, banks_to_bytes(banks)).map_err(|e| Error::io(path, e))
}

pub fn load_banks(path: &Path) -> Result<Vec<ArBank>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    banks_from_bytes(&bytes, path)
}

/// Samples of an AR process driven by seeded unit-variance white noise.
pub fn simulate_ar(coefficients: &[f64], noise_std: f64, len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<f64> = Vec::with_capacity(len);
    for n in 0..len {
        let mut x = noise_std * rng.sample::<f64, _>(StandardNormal);
        for (k, a) in coefficients.iter().enumerate() {
            if n > k {
                x += a * out[n - 1 - k];
            }
        }
        out.push(x);
    }
    out
}
