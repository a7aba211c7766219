//! A small frame-wise complex-spectral-mapping network with hand-derived
//! backpropagation, an adaptive-moment optimizer, and EMA teacher updates.
//!
//! Per output frame the network sees the real/imaginary features of a
//! (2*context + 1)-frame window, normalized by the utterance-level RMS of the
//! input spectrogram; hidden layers are plain ReLU MLP layers and the linear
//! output is read back as the real/imaginary parts of the mapped frame,
//! denormalized by the same RMS. The mapped frame rides on an identity skip
//! from the center input frame, so the layers learn a correction rather than
//! a full reconstruction; with zero-initialized biases the network starts out
//! as the identity map. The normalization factor depends only on the input,
//! so gradients with respect to the parameters treat it as a constant, and
//! the skip path adds nothing to them.

use rand::Rng;

use crate::error::{Error, Result};
use crate::signal::ComplexSpectrogram;
use rustfft::num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// Context frames on each side of the mapped frame.
    pub context: usize,
    /// Hidden layer width.
    pub hidden: usize,
    /// Number of hidden layers.
    pub n_layers: usize,
    /// Frequency bins (fft_len / 2 + 1 of the analysis).
    pub freq_bins: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            context: 3,
            hidden: 256,
            n_layers: 2,
            freq_bins: 257,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden < 1 || self.n_layers < 1 || self.freq_bins < 1 {
            return Err(Error::config(
                "model needs hidden >= 1, n_layers >= 1, freq_bins >= 1",
            ));
        }
        Ok(())
    }

    /// Input feature width: RI pairs for every context frame.
    pub fn input_dim(&self) -> usize {
        (2 * self.context + 1) * 2 * self.freq_bins
    }

    pub fn output_dim(&self) -> usize {
        2 * self.freq_bins
    }
}

/// A dense 2D tensor; biases are stored as a single row.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Tensor {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Named, ordered parameter tensors plus the optimizer step count.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub tensors: Vec<(String, Tensor)>,
    pub step_count: u64,
    pub config: ModelConfig,
}

impl ParamSet {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.len()).sum()
    }

    /// Flat indexing across all tensors in declaration order; used by
    /// gradient-verification harnesses.
    pub fn get_flat(&self, mut idx: usize) -> f64 {
        for (_, t) in &self.tensors {
            if idx < t.len() {
                return t.data[idx];
            }
            idx -= t.len();
        }
        panic!("flat index out of range");
    }

    pub fn set_flat(&mut self, mut idx: usize, value: f64) {
        for (_, t) in &mut self.tensors {
            if idx < t.len() {
                t.data[idx] = value;
                return;
            }
            idx -= t.len();
        }
        panic!("flat index out of range");
    }

    /// Euclidean distance to another parameter set of the same shape.
    pub fn distance(&self, other: &ParamSet) -> f64 {
        let mut acc = 0.0;
        for ((_, a), (_, b)) in self.tensors.iter().zip(&other.tensors) {
            for (x, y) in a.data.iter().zip(&b.data) {
                acc += (x - y) * (x - y);
            }
        }
        acc.sqrt()
    }

    fn shapes_match(&self, other: &ParamSet) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|((na, ta), (nb, tb))| na == nb && ta.rows == tb.rows && ta.cols == tb.cols)
    }
}

/// Gradients aligned index-for-index with a `ParamSet`.
#[derive(Debug, Clone)]
pub struct GradSet {
    pub tensors: Vec<Tensor>,
}

impl GradSet {
    pub fn zeros_like(params: &ParamSet) -> GradSet {
        GradSet {
            tensors: params
                .tensors
                .iter()
                .map(|(_, t)| Tensor::zeros(t.rows, t.cols))
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &GradSet, scale: f64) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors.iter_mut() {
            for x in t.data.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.is_finite())
    }

    pub fn get_flat(&self, mut idx: usize) -> f64 {
        for t in &self.tensors {
            if idx < t.len() {
                return t.data[idx];
            }
            idx -= t.len();
        }
        panic!("flat index out of range");
    }
}

pub(crate) fn layer_names(cfg: &ModelConfig) -> Vec<(String, usize, usize)> {
    let mut names = Vec::new();
    let mut fan_in = cfg.input_dim();
    for i in 0..cfg.n_layers {
        names.push((format!("layer{i}.weight"), fan_in, cfg.hidden));
        names.push((format!("layer{i}.bias"), 1, cfg.hidden));
        fan_in = cfg.hidden;
    }
    names.push(("out.weight".to_string(), fan_in, cfg.output_dim()));
    names.push(("out.bias".to_string(), 1, cfg.output_dim()));
    names
}

/// Uniform Glorot initialization for the hidden layers: weights in
/// +-sqrt(6 / (fan_in + fan_out)), biases zero. The output projection starts
/// at zero so the network is exactly the identity map before training; the
/// correction then grows from nothing instead of starting as noise riding on
/// the skip path.
pub fn init_params<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Result<ParamSet> {
    cfg.validate()?;
    let mut tensors = Vec::new();
    for (name, rows, cols) in layer_names(cfg) {
        let mut t = Tensor::zeros(rows, cols);
        if !name.ends_with(".bias") && name != "out.weight" {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            for x in t.data.iter_mut() {
                *x = rng.gen_range(-bound..=bound);
            }
        }
        tensors.push((name, t));
    }
    Ok(ParamSet {
        tensors,
        step_count: 0,
        config: *cfg,
    })
}

/// Activation record from a forward pass, consumed by [`backward`].
#[derive(Debug)]
pub struct Tape {
    feats: Vec<f64>,
    hidden: Vec<Vec<f64>>,
    t: usize,
    scale: f64,
    step_count: u64,
}

// Row tiling keeps each weight row resident while a block of frames consumes
// it; without it the weight matrices stream from memory once per frame and
// the multiply becomes bandwidth-bound.
const ROW_TILE: usize = 32;

#[cfg(target_arch = "x86_64")]
mod simd {
    pub fn available() -> bool {
        use std::sync::OnceLock;
        static CACHE: OnceLock<bool> = OnceLock::new();
        *CACHE.get_or_init(|| {
            std::arch::is_x86_feature_detected!("avx2")
                && std::arch::is_x86_feature_detected!("fma")
        })
    }

    #[target_feature(enable = "avx2,fma")]
    pub unsafe fn axpy(out: &mut [f64], row: &[f64], scale: f64) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o = v.mul_add(scale, *o);
        }
    }

    #[target_feature(enable = "avx2,fma")]
    pub unsafe fn dot(a: &[f64], b: &[f64]) -> f64 {
        let mut acc = [0.0f64; 8];
        let chunks = a.len() / 8;
        for c in 0..chunks {
            for (l, acc_l) in acc.iter_mut().enumerate() {
                let i = c * 8 + l;
                *acc_l = a[i].mul_add(b[i], *acc_l);
            }
        }
        let mut s = acc.iter().sum::<f64>();
        for i in chunks * 8..a.len() {
            s += a[i] * b[i];
        }
        s
    }
}

#[inline]
fn axpy(out: &mut [f64], row: &[f64], scale: f64) {
    #[cfg(target_arch = "x86_64")]
    if simd::available() {
        // Sound: the features were verified at runtime.
        unsafe { simd::axpy(out, row, scale) };
        return;
    }
    for (o, &v) in out.iter_mut().zip(row) {
        *o += scale * v;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    if simd::available() {
        return unsafe { simd::dot(a, b) };
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// out[m][j] += sum_k a[m][k] * b[k][j]
fn matmul_acc(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for m0 in (0..m).step_by(ROW_TILE) {
        let m1 = (m0 + ROW_TILE).min(m);
        for ki in 0..k {
            let brow = &b[ki * n..(ki + 1) * n];
            for mi in m0..m1 {
                let av = a[mi * k + ki];
                if av == 0.0 {
                    continue;
                }
                axpy(&mut out[mi * n..(mi + 1) * n], brow, av);
            }
        }
    }
}

/// out[k][j] += sum_m a[m][k] * b[m][j] (a transposed times b)
fn matmul_at_b_acc(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for m0 in (0..m).step_by(ROW_TILE) {
        let m1 = (m0 + ROW_TILE).min(m);
        for ki in 0..k {
            let orow = &mut out[ki * n..(ki + 1) * n];
            for mi in m0..m1 {
                let av = a[mi * k + ki];
                if av == 0.0 {
                    continue;
                }
                axpy(orow, &b[mi * n..(mi + 1) * n], av);
            }
        }
    }
}

/// out[m][k] += sum_j a[m][j] * b[k][j] (a times b transposed)
fn matmul_b_tr_acc(a: &[f64], m: usize, n: usize, b: &[f64], k: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    for m0 in (0..m).step_by(ROW_TILE) {
        let m1 = (m0 + ROW_TILE).min(m);
        for ki in 0..k {
            let brow = &b[ki * n..(ki + 1) * n];
            for mi in m0..m1 {
                out[mi * k + ki] += dot(&a[mi * n..(mi + 1) * n], brow);
            }
        }
    }
}

fn gather_features(input: &ComplexSpectrogram, cfg: &ModelConfig, scale: f64) -> Vec<f64> {
    let t = input.t;
    let f = input.f;
    let ctx = cfg.context as i64;
    let din = cfg.input_dim();
    let inv = 1.0 / scale;
    let mut feats = vec![0.0; t * din];
    for ti in 0..t as i64 {
        let row = &mut feats[(ti as usize) * din..(ti as usize + 1) * din];
        for (ci, c) in (-ctx..=ctx).enumerate() {
            let src = ti + c;
            if src < 0 || src >= t as i64 {
                continue; // zero padding at the edges
            }
            let frame = input.frame(src as usize);
            let base = ci * 2 * f;
            for k in 0..f {
                row[base + k] = frame[k].re * inv;
                row[base + f + k] = frame[k].im * inv;
            }
        }
    }
    feats
}

fn input_rms(input: &ComplexSpectrogram) -> f64 {
    let n = (input.t * input.f) as f64;
    let rms = (input.energy() / n).sqrt();
    if rms.is_normal() {
        rms
    } else {
        1.0
    }
}

fn forward_impl(
    params: &ParamSet,
    input: &ComplexSpectrogram,
    keep_tape: bool,
) -> Result<(ComplexSpectrogram, Option<Tape>)> {
    let cfg = &params.config;
    if input.f != cfg.freq_bins {
        return Err(Error::config(format!(
            "input has {} bins but the model expects {}",
            input.f, cfg.freq_bins
        )));
    }
    let t = input.t;
    let f = input.f;
    let scale = input_rms(input);
    let feats = gather_features(input, cfg, scale);

    let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_layers);
    let mut cur: &[f64] = &feats;
    let mut cur_dim = cfg.input_dim();
    for i in 0..cfg.n_layers {
        let w = params.get(&format!("layer{i}.weight")).expect("layer weight");
        let b = params.get(&format!("layer{i}.bias")).expect("layer bias");
        let mut h = vec![0.0; t * cfg.hidden];
        for ti in 0..t {
            h[ti * cfg.hidden..(ti + 1) * cfg.hidden].copy_from_slice(&b.data);
        }
        matmul_acc(cur, t, cur_dim, &w.data, cfg.hidden, &mut h);
        for x in h.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        hidden.push(h);
        cur = hidden.last().unwrap();
        cur_dim = cfg.hidden;
    }

    let w_out = params.get("out.weight").expect("out weight");
    let b_out = params.get("out.bias").expect("out bias");
    let out_dim = cfg.output_dim();
    let mut out = vec![0.0; t * out_dim];
    for ti in 0..t {
        out[ti * out_dim..(ti + 1) * out_dim].copy_from_slice(&b_out.data);
    }
    matmul_acc(cur, t, cur_dim, &w_out.data, out_dim, &mut out);

    let mut estimate = ComplexSpectrogram::zeros_like(input);
    for ti in 0..t {
        let row = &out[ti * out_dim..(ti + 1) * out_dim];
        let center = input.frame(ti);
        let frame = estimate.frame_mut(ti);
        for k in 0..f {
            frame[k] = Complex64::new(
                row[k] * scale + center[k].re,
                row[f + k] * scale + center[k].im,
            );
        }
    }
    let tape = keep_tape.then_some(Tape {
        feats,
        hidden,
        t,
        scale,
        step_count: params.step_count,
    });
    Ok((estimate, tape))
}

/// Forward pass that records activations for [`backward`].
pub fn forward(
    params: &ParamSet,
    input: &ComplexSpectrogram,
) -> Result<(ComplexSpectrogram, Tape)> {
    let (est, tape) = forward_impl(params, input, true)?;
    Ok((est, tape.expect("tape was requested")))
}

/// Forward pass without an activation record (teacher targets, inference).
pub fn forward_no_tape(
    params: &ParamSet,
    input: &ComplexSpectrogram,
) -> Result<ComplexSpectrogram> {
    let (est, _) = forward_impl(params, input, false)?;
    Ok(est)
}

/// Reverse-mode gradients of the scalar loss whose estimate-cotangent is
/// `d_estimate`, for the parameters that produced `tape`.
pub fn backward(
    params: &ParamSet,
    tape: &Tape,
    d_estimate: &ComplexSpectrogram,
) -> Result<GradSet> {
    let cfg = &params.config;
    if tape.step_count != params.step_count {
        return Err(Error::Usage(
            "stale tape: parameters changed since the forward pass".into(),
        ));
    }
    if d_estimate.t != tape.t || d_estimate.f != cfg.freq_bins {
        return Err(Error::config("cotangent shape mismatch"));
    }
    let t = tape.t;
    let f = cfg.freq_bins;
    let out_dim = cfg.output_dim();

    // Cotangent of the linear output rows, including the denormalization.
    let mut d_out = vec![0.0; t * out_dim];
    for ti in 0..t {
        let frame = d_estimate.frame(ti);
        let row = &mut d_out[ti * out_dim..(ti + 1) * out_dim];
        for k in 0..f {
            row[k] = frame[k].re * tape.scale;
            row[f + k] = frame[k].im * tape.scale;
        }
    }

    let mut grads = GradSet::zeros_like(params);
    let grad_index: std::collections::HashMap<&str, usize> = params
        .tensors
        .iter()
        .enumerate()
        .map(|(i, (n, _))| (n.as_str(), i))
        .collect();

    let last_hidden = tape.hidden.last().expect("at least one hidden layer");
    // Output layer.
    {
        let wi = grad_index["out.weight"];
        matmul_at_b_acc(
            last_hidden,
            t,
            cfg.hidden,
            &d_out,
            out_dim,
            &mut grads.tensors[wi].data,
        );
        let bi = grad_index["out.bias"];
        for ti in 0..t {
            let row = &d_out[ti * out_dim..(ti + 1) * out_dim];
            for (b, &d) in grads.tensors[bi].data.iter_mut().zip(row) {
                *b += d;
            }
        }
    }

    // Propagate into the last hidden activation.
    let w_out = params.get("out.weight").unwrap();
    let mut d_h = vec![0.0; t * cfg.hidden];
    matmul_b_tr_acc(&d_out, t, out_dim, &w_out.data, cfg.hidden, &mut d_h);

    for layer in (0..cfg.n_layers).rev() {
        let h = &tape.hidden[layer];
        // ReLU subgradient on the stored post-activation.
        for (d, &a) in d_h.iter_mut().zip(h.iter()) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        let below: &[f64] = if layer == 0 {
            &tape.feats
        } else {
            &tape.hidden[layer - 1]
        };
        let below_dim = if layer == 0 {
            cfg.input_dim()
        } else {
            cfg.hidden
        };
        let wi = grad_index[format!("layer{layer}.weight").as_str()];
        matmul_at_b_acc(
            below,
            t,
            below_dim,
            &d_h,
            cfg.hidden,
            &mut grads.tensors[wi].data,
        );
        let bi = grad_index[format!("layer{layer}.bias").as_str()];
        for ti in 0..t {
            let row = &d_h[ti * cfg.hidden..(ti + 1) * cfg.hidden];
            for (b, &d) in grads.tensors[bi].data.iter_mut().zip(row) {
                *b += d;
            }
        }
        if layer > 0 {
            // No input gradient needed below layer 0.
            let w = params.get(&format!("layer{layer}.weight")).unwrap();
            let mut d_below = vec![0.0; t * cfg.hidden];
            matmul_b_tr_acc(&d_h, t, cfg.hidden, &w.data, cfg.hidden, &mut d_below);
            d_h = d_below;
        }
    }
    Ok(grads)
}

/// Constants and moment estimates of the adaptive-moment optimizer.
#[derive(Debug, Clone)]
pub struct OptimState {
    pub first: Vec<Tensor>,
    pub second: Vec<Tensor>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimState {
    pub fn new(params: &ParamSet, lr: f64) -> OptimState {
        OptimState {
            first: params
                .tensors
                .iter()
                .map(|(_, t)| Tensor::zeros(t.rows, t.cols))
                .collect(),
            second: params
                .tensors
                .iter()
                .map(|(_, t)| Tensor::zeros(t.rows, t.cols))
                .collect(),
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// Gradients contained NaN or Inf; parameters and moments untouched.
    SkippedNonFinite,
}

/// One adaptive-moment update with bias correction. Non-finite gradients skip
/// the step entirely.
pub fn adam_step(params: &mut ParamSet, grads: &GradSet, opt: &mut OptimState) -> StepOutcome {
    if !grads.is_finite() {
        return StepOutcome::SkippedNonFinite;
    }
    let t = params.step_count + 1;
    let bc1 = 1.0 - opt.beta1.powi(t as i32);
    let bc2 = 1.0 - opt.beta2.powi(t as i32);
    for ((param, grad), (m, v)) in params
        .tensors
        .iter_mut()
        .zip(&grads.tensors)
        .zip(opt.first.iter_mut().zip(opt.second.iter_mut()))
    {
        for i in 0..param.1.data.len() {
            let g = grad.data[i];
            m.data[i] = opt.beta1 * m.data[i] + (1.0 - opt.beta1) * g;
            v.data[i] = opt.beta2 * v.data[i] + (1.0 - opt.beta2) * g * g;
            let m_hat = m.data[i] / bc1;
            let v_hat = v.data[i] / bc2;
            param.1.data[i] -= opt.lr * m_hat / (v_hat.sqrt() + opt.eps);
        }
    }
    params.step_count = t;
    StepOutcome::Applied
}

/// EMA teacher update: `teacher <- alpha * teacher + (1 - alpha) * student`.
pub fn ema_update(teacher: &mut ParamSet, student: &ParamSet, alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::config(format!(
            "EMA momentum must be in [0, 1), got {alpha}"
        )));
    }
    if !teacher.shapes_match(student) {
        return Err(Error::config("EMA parameter shapes do not match"));
    }
    for ((_, t), (_, s)) in teacher.tensors.iter_mut().zip(&student.tensors) {
        for (tv, sv) in t.data.iter_mut().zip(&s.data) {
            *tv = alpha * *tv + (1.0 - alpha) * sv;
        }
    }
    teacher.step_count = student.step_count;
    Ok(())
}

/// Default EMA momentum for the teacher.
pub const DEFAULT_EMA_MOMENTUM: f64 = 0.999;
