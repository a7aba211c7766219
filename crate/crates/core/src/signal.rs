//! Time-domain and time-frequency primitives: convolution, windowing, and an
//! STFT/iSTFT pair with exact-reconstruction framing.
//!
//! Framing policy: the input is zero-padded with `win_len - hop_len` samples at
//! the head and enough at the tail that every original sample is covered by
//! `win_len / hop_len` analysis windows. With a square-root periodic Hann
//! window on both analysis and synthesis, the overlap-add weight is the exact
//! constant `win_len / (2 * hop_len)`, so `istft(stft(w), w.len())` recovers
//! `w` to floating-point precision.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

/// A mono time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Waveform {
        Waveform {
            samples,
            sample_rate,
        }
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Waveform {
        Waveform::new(vec![0.0; len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|x| x.is_finite())
    }

    fn check_finite(&self, what: &str) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::input(format!("{what} contains NaN or Inf")));
        }
        Ok(())
    }
}

/// Population standard deviation of the samples.
pub fn signal_std(w: &Waveform) -> f64 {
    let n = w.samples.len() as f64;
    if w.samples.is_empty() {
        return 0.0;
    }
    let mean = w.samples.iter().sum::<f64>() / n;
    let var = w.samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    var.sqrt()
}

/// Square root of the periodic Hann window of length `n`.
pub fn sqrt_hann(n: usize) -> Result<Vec<f64>> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::input(format!(
            "window length must be even and >= 2, got {n}"
        )));
    }
    Ok((0..n)
        .map(|i| {
            let hann = 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos());
            hann.max(0.0).sqrt()
        })
        .collect())
}

/// STFT framing parameters. `window` is always the square-root periodic Hann.
#[derive(Debug, Clone, PartialEq)]
pub struct StftConfig {
    pub win_len: usize,
    pub hop_len: usize,
    pub fft_len: usize,
    pub window: Vec<f64>,
}

impl StftConfig {
    pub fn new(win_len: usize, hop_len: usize, fft_len: usize) -> Result<StftConfig> {
        if hop_len == 0 || win_len == 0 {
            return Err(Error::config("win_len and hop_len must be positive"));
        }
        if win_len % hop_len != 0 {
            return Err(Error::config(format!(
                "hop_len {hop_len} must divide win_len {win_len}"
            )));
        }
        if win_len / hop_len < 2 {
            return Err(Error::config(format!(
                "need at least 2x overlap: win_len {win_len}, hop_len {hop_len}"
            )));
        }
        if fft_len < win_len {
            return Err(Error::config(format!(
                "fft_len {fft_len} must be >= win_len {win_len}"
            )));
        }
        Ok(StftConfig {
            win_len,
            hop_len,
            fft_len,
            window: sqrt_hann(win_len)?,
        })
    }

    /// 32 ms square-root Hann window with 8 ms hop at 16 kHz.
    pub fn default_16k() -> StftConfig {
        StftConfig::new(512, 128, 512).expect("default config is valid")
    }

    /// Number of non-redundant frequency bins.
    pub fn freq_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Overlap factor `win_len / hop_len`.
    pub fn overlap(&self) -> usize {
        self.win_len / self.hop_len
    }

    fn head_pad(&self) -> usize {
        self.win_len - self.hop_len
    }

    fn num_frames(&self, origin_len: usize) -> usize {
        (self.overlap() - 1) + (origin_len - 1) / self.hop_len + 1
    }

    /// Longest waveform recoverable from `t` frames.
    fn recoverable_len(&self, t: usize) -> usize {
        (t + 1 - self.overlap()) * self.hop_len
    }
}

/// T x F complex STFT frames, row-major, with the framing that produced them.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    pub frames: Vec<Complex64>,
    pub t: usize,
    pub f: usize,
    pub config: StftConfig,
    pub origin_len: usize,
    pub sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn zeros_like(other: &ComplexSpectrogram) -> ComplexSpectrogram {
        ComplexSpectrogram {
            frames: vec![Complex64::new(0.0, 0.0); other.frames.len()],
            t: other.t,
            f: other.f,
            config: other.config.clone(),
            origin_len: other.origin_len,
            sample_rate: other.sample_rate,
        }
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.frames[t * self.f..(t + 1) * self.f]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex64] {
        &mut self.frames[t * self.f..(t + 1) * self.f]
    }

    pub fn is_finite(&self) -> bool {
        self.frames.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Sum of squared real and imaginary parts over all bins.
    pub fn energy(&self) -> f64 {
        self.frames.iter().map(|c| c.norm_sqr()).sum()
    }
}

static PLANNER: Mutex<Option<FftPlanner<f64>>> = Mutex::new(None);

pub(crate) fn fft_plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    let mut guard = PLANNER.lock().expect("fft planner poisoned");
    let planner = guard.get_or_insert_with(FftPlanner::new);
    match direction {
        FftDirection::Forward => planner.plan_fft_forward(len),
        FftDirection::Inverse => planner.plan_fft_inverse(len),
    }
}

/// First `len(a)` samples of the full linear convolution `a * b`.
pub fn convolve_trunc_first(a: &Waveform, b: &Waveform) -> Result<Waveform> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::input("convolution inputs must be non-empty"));
    }
    if a.sample_rate != b.sample_rate {
        return Err(Error::config(format!(
            "sample rate mismatch: {} vs {}",
            a.sample_rate, b.sample_rate
        )));
    }
    a.check_finite("convolution input a")?;
    b.check_finite("convolution input b")?;
    let full = if b.len() <= 128 {
        convolve_direct(&a.samples, &b.samples)
    } else {
        convolve_fft(&a.samples, &b.samples)
    };
    Ok(Waveform::new(full[..a.len()].to_vec(), a.sample_rate))
}

pub(crate) fn convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

pub(crate) fn convolve_fft(a: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut fa: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fa.resize(n, Complex64::new(0.0, 0.0));
    let mut fb: Vec<Complex64> = b.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fb.resize(n, Complex64::new(0.0, 0.0));
    let fwd = fft_plan(n, FftDirection::Forward);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(fb.iter()) {
        *x *= *y;
    }
    let inv = fft_plan(n, FftDirection::Inverse);
    inv.process(&mut fa);
    let scale = 1.0 / n as f64;
    fa[..out_len].iter().map(|c| c.re * scale).collect()
}

/// Short-time Fourier transform with the module's padding policy.
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    if w.is_empty() {
        return Err(Error::input("cannot take the STFT of an empty waveform"));
    }
    w.check_finite("stft input")?;
    let t = cfg.num_frames(w.len());
    let f = cfg.freq_bins();
    let head = cfg.head_pad();
    let padded_len = (t - 1) * cfg.hop_len + cfg.win_len;
    let mut padded = vec![0.0; padded_len];
    padded[head..head + w.len()].copy_from_slice(&w.samples);

    let plan = fft_plan(cfg.fft_len, FftDirection::Forward);
    let mut frames = vec![Complex64::new(0.0, 0.0); t * f];
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_len];
    for ti in 0..t {
        let seg = &padded[ti * cfg.hop_len..ti * cfg.hop_len + cfg.win_len];
        for (i, c) in buf.iter_mut().enumerate() {
            *c = if i < cfg.win_len {
                Complex64::new(seg[i] * cfg.window[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        plan.process(&mut buf);
        frames[ti * f..(ti + 1) * f].copy_from_slice(&buf[..f]);
    }
    Ok(ComplexSpectrogram {
        frames,
        t,
        f,
        config: cfg.clone(),
        origin_len: w.len(),
        sample_rate: w.sample_rate,
    })
}

/// Inverse STFT by windowed overlap-add, returning the first `out_len` samples.
pub fn istft(s: &ComplexSpectrogram, out_len: usize) -> Result<Waveform> {
    if !s.is_finite() {
        return Err(Error::input("istft input contains NaN or Inf"));
    }
    let cfg = &s.config;
    if out_len > cfg.recoverable_len(s.t) {
        return Err(Error::input(format!(
            "out_len {} exceeds the reconstructable span {} of {} frames",
            out_len,
            cfg.recoverable_len(s.t),
            s.t
        )));
    }
    let n = cfg.fft_len;
    let head = cfg.head_pad();
    let padded_len = (s.t - 1) * cfg.hop_len + cfg.win_len;
    let mut acc = vec![0.0; padded_len];

    let plan = fft_plan(n, FftDirection::Inverse);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for ti in 0..s.t {
        let frame = s.frame(ti);
        buf[..s.f].copy_from_slice(frame);
        // Hermitian completion of the non-redundant half.
        for k in 1..n / 2 {
            buf[n - k] = frame[k].conj();
        }
        plan.process(&mut buf);
        let base = ti * cfg.hop_len;
        let scale = 1.0 / n as f64;
        for i in 0..cfg.win_len {
            acc[base + i] += buf[i].re * scale * cfg.window[i];
        }
    }
    let cola = cfg.overlap() as f64 / 2.0;
    let out = acc[head..head + out_len].iter().map(|x| x / cola).collect();
    Ok(Waveform::new(out, s.sample_rate))
}

/// Adjoint of `stft` as a linear map: pushes a spectrogram cotangent back to a
/// time-domain gradient of length `origin_len`.
pub fn stft_adjoint(cot: &ComplexSpectrogram) -> Vec<f64> {
    let cfg = &cot.config;
    let n = cfg.fft_len;
    let head = cfg.head_pad();
    let padded_len = (cot.t - 1) * cfg.hop_len + cfg.win_len;
    let mut acc = vec![0.0; padded_len];

    let plan = fft_plan(n, FftDirection::Inverse);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for ti in 0..cot.t {
        let frame = cot.frame(ti);
        buf[..cot.f].copy_from_slice(frame);
        for c in buf[cot.f..].iter_mut() {
            *c = Complex64::new(0.0, 0.0);
        }
        plan.process(&mut buf);
        let base = ti * cfg.hop_len;
        for i in 0..cfg.win_len {
            acc[base + i] += buf[i].re * cfg.window[i];
        }
    }
    acc[head..head + cot.origin_len].to_vec()
}

/// Adjoint of `istft` as a linear map: pushes a time-domain cotangent of
/// length `out_len` back to a spectrogram cotangent with `t` frames.
pub fn istft_adjoint(
    d_time: &[f64],
    t: usize,
    cfg: &StftConfig,
    origin_len: usize,
    sample_rate: u32,
) -> ComplexSpectrogram {
    let n = cfg.fft_len;
    let f = cfg.freq_bins();
    let head = cfg.head_pad();
    let padded_len = (t - 1) * cfg.hop_len + cfg.win_len;
    let cola = cfg.overlap() as f64 / 2.0;
    let mut padded = vec![0.0; padded_len];
    for (i, &d) in d_time.iter().enumerate() {
        padded[head + i] = d / cola;
    }

    let plan = fft_plan(n, FftDirection::Forward);
    let mut frames = vec![Complex64::new(0.0, 0.0); t * f];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let inv_n = 1.0 / n as f64;
    for ti in 0..t {
        let base = ti * cfg.hop_len;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = if i < cfg.win_len {
                Complex64::new(padded[base + i] * cfg.window[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        plan.process(&mut buf);
        let out = &mut frames[ti * f..(ti + 1) * f];
        for k in 0..f {
            let c = if k == 0 || k == n / 2 { 1.0 } else { 2.0 };
            out[k] = buf[k] * (c * inv_n);
        }
    }
    ComplexSpectrogram {
        frames,
        t,
        f,
        config: cfg.clone(),
        origin_len,
        sample_rate,
    }
}
