//! Room impulse responses: statistical synthesis, image-source simulation,
//! and relative-RIR computation by regularized spectral deconvolution.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftDirection;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::signal::{fft_plan, Waveform};

/// Speed of sound used for room geometry, in m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;

/// Nominal width of the fractional-delay interpolation kernel, in taps.
pub const FRAC_DELAY_TAPS: usize = 81;

const KERNEL_HALF: i64 = (FRAC_DELAY_TAPS as i64 - 1) / 2;
const KERNEL_SPAN: f64 = KERNEL_HALF as f64 + 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RirKind {
    Statistical,
    SimulatedFull,
    SimulatedDirect,
    Relative,
}

#[derive(Debug, Clone)]
pub struct RirMeta {
    pub t60_s: f64,
    pub drr_db: Option<f64>,
    pub source_mic_distance_m: Option<f64>,
    /// Gain applied to the diffuse tail of a statistical RTF.
    pub tail_gain: Option<f64>,
    /// Set when a deconvolution ran close to a spectral null.
    pub numeric_warning: bool,
}

impl RirMeta {
    fn new(t60_s: f64) -> RirMeta {
        RirMeta {
            t60_s,
            drr_db: None,
            source_mic_distance_m: None,
            tail_gain: None,
            numeric_warning: false,
        }
    }
}

/// An impulse response with its acoustic metadata.
#[derive(Debug, Clone)]
pub struct Rir {
    pub taps: Waveform,
    pub kind: RirKind,
    pub meta: RirMeta,
}

impl Rir {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

/// Parameters of the exponentially-decaying statistical RTF.
#[derive(Debug, Clone, Copy)]
pub struct StatisticalRtfParams {
    pub t60_s: f64,
    pub drr_db: f64,
    pub sample_rate: u32,
}

impl StatisticalRtfParams {
    fn validate(&self) -> Result<()> {
        if !(self.t60_s > 0.0) {
            return Err(Error::config(format!("t60_s must be > 0, got {}", self.t60_s)));
        }
        if self.sample_rate == 0 {
            return Err(Error::config("sample_rate must be > 0"));
        }
        Ok(())
    }
}

/// Decay rate per sample giving a 60 dB energy drop over `t60_s`.
pub fn decay_rate(t60_s: f64, sample_rate: u32) -> f64 {
    3.0 * 10f64.ln() / (t60_s * sample_rate as f64)
}

/// Draw a statistical RTF: a unit impulse followed by a Gaussian tail under an
/// exponentially decaying envelope. The tail gain is solved from the realized
/// tail so the measured direct-to-reverberant ratio equals `drr_db` exactly.
pub fn sample_statistical_rtf<R: Rng>(p: &StatisticalRtfParams, rng: &mut R) -> Result<Rir> {
    p.validate()?;
    let fs = p.sample_rate as f64;
    let tail_len = (p.t60_s * fs).round() as usize;
    if tail_len < 1 {
        return Err(Error::input(format!(
            "t60 {} s at {} Hz yields an empty tail",
            p.t60_s, p.sample_rate
        )));
    }
    let lambda = decay_rate(p.t60_s, p.sample_rate);
    let mut taps = vec![0.0; tail_len + 1];
    taps[0] = 1.0;
    let mut tail_energy = 0.0;
    for (n, tap) in taps.iter_mut().enumerate().skip(1) {
        let eta: f64 = rng.sample(StandardNormal);
        let v = eta * (-lambda * n as f64).exp();
        *tap = v;
        tail_energy += v * v;
    }
    let target_tail_energy = 10f64.powf(-p.drr_db / 10.0);
    let gamma = (target_tail_energy / tail_energy).sqrt();
    for tap in taps.iter_mut().skip(1) {
        *tap *= gamma;
    }
    let mut meta = RirMeta::new(p.t60_s);
    meta.drr_db = Some(p.drr_db);
    meta.tail_gain = Some(gamma);
    Ok(Rir {
        taps: Waveform::new(taps, p.sample_rate),
        kind: RirKind::Statistical,
        meta,
    })
}

/// Direct-to-reverberant energy ratio in dB, splitting the taps at
/// `direct_len`. Returns `f64::INFINITY` when the tail carries no energy.
pub fn measure_drr(r: &Rir, direct_len: usize) -> Result<f64> {
    if direct_len < 1 || direct_len > r.len() {
        return Err(Error::input(format!(
            "direct_len {} out of range for {} taps",
            direct_len,
            r.len()
        )));
    }
    let direct: f64 = r.taps.samples[..direct_len].iter().map(|x| x * x).sum();
    let tail: f64 = r.taps.samples[direct_len..].iter().map(|x| x * x).sum();
    if tail == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (direct / tail).log10())
}

/// A shoebox room with one source and one microphone.
#[derive(Debug, Clone, Copy)]
pub struct RoomSpec {
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub src_pos: [f64; 3],
    pub mic_pos: [f64; 3],
    pub t60_s: f64,
    pub sample_rate: u32,
}

/// Minimum clearance between a source/mic and any wall, in meters.
pub const WALL_MARGIN_M: f64 = 0.1;

/// Allowed source-microphone distance range, in meters.
pub const SRC_MIC_DIST_M: (f64, f64) = (0.75, 2.5);

impl RoomSpec {
    pub fn src_mic_distance(&self) -> f64 {
        let d: f64 = self
            .src_pos
            .iter()
            .zip(self.mic_pos.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        d.sqrt()
    }

    pub fn volume(&self) -> f64 {
        self.length_m * self.width_m * self.height_m
    }

    pub fn surface(&self) -> f64 {
        2.0 * (self.length_m * self.width_m
            + self.length_m * self.height_m
            + self.width_m * self.height_m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 || !(self.t60_s > 0.0) {
            return Err(Error::config("room needs a positive t60 and sample rate"));
        }
        let dims = [self.length_m, self.width_m, self.height_m];
        for p in [&self.src_pos, &self.mic_pos] {
            for (axis, (&x, &d)) in p.iter().zip(dims.iter()).enumerate() {
                if x < WALL_MARGIN_M || x > d - WALL_MARGIN_M {
                    return Err(Error::config(format!(
                        "position {x} on axis {axis} violates the {WALL_MARGIN_M} m wall margin"
                    )));
                }
            }
        }
        let dist = self.src_mic_distance();
        if dist < SRC_MIC_DIST_M.0 || dist > SRC_MIC_DIST_M.1 {
            return Err(Error::config(format!(
                "source-mic distance {dist:.3} m outside [{}, {}] m",
                SRC_MIC_DIST_M.0, SRC_MIC_DIST_M.1
            )));
        }
        Ok(())
    }
}

/// Geometry and reverberation ranges for random room sampling.
#[derive(Debug, Clone, Copy)]
pub struct RoomRanges {
    pub length_m: (f64, f64),
    pub width_m: (f64, f64),
    pub height_m: (f64, f64),
    pub t60_s: (f64, f64),
}

impl Default for RoomRanges {
    fn default() -> Self {
        RoomRanges {
            length_m: (5.0, 10.0),
            width_m: (5.0, 10.0),
            height_m: (3.0, 4.0),
            t60_s: (0.2, 1.3),
        }
    }
}

/// Draw a room uniformly from the ranges: the microphone lands anywhere inside
/// the wall margins, the source at a uniform random distance in the allowed
/// ring around it.
pub fn sample_room_spec<R: Rng>(ranges: &RoomRanges, sample_rate: u32, rng: &mut R) -> RoomSpec {
    let length_m = rng.gen_range(ranges.length_m.0..=ranges.length_m.1);
    let width_m = rng.gen_range(ranges.width_m.0..=ranges.width_m.1);
    let height_m = rng.gen_range(ranges.height_m.0..=ranges.height_m.1);
    let t60_s = rng.gen_range(ranges.t60_s.0..=ranges.t60_s.1);
    let dims = [length_m, width_m, height_m];
    loop {
        let mut mic = [0.0; 3];
        for (m, &d) in mic.iter_mut().zip(dims.iter()) {
            *m = rng.gen_range(WALL_MARGIN_M..=d - WALL_MARGIN_M);
        }
        for _ in 0..64 {
            let dist = rng.gen_range(SRC_MIC_DIST_M.0..=SRC_MIC_DIST_M.1);
            let g: [f64; 3] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            if norm < 1e-9 {
                continue;
            }
            let src = [
                mic[0] + dist * g[0] / norm,
                mic[1] + dist * g[1] / norm,
                mic[2] + dist * g[2] / norm,
            ];
            let inside = src
                .iter()
                .zip(dims.iter())
                .all(|(&x, &d)| x >= WALL_MARGIN_M && x <= d - WALL_MARGIN_M);
            if inside {
                return RoomSpec {
                    length_m,
                    width_m,
                    height_m,
                    src_pos: src,
                    mic_pos: mic,
                    t60_s,
                    sample_rate,
                };
            }
        }
    }
}

/// Uniform Sabine absorption for the requested reverberation time.
fn sabine_absorption(spec: &RoomSpec) -> Result<f64> {
    let alpha = 0.161 * spec.volume() / (spec.surface() * spec.t60_s);
    if alpha > 1.0 {
        return Err(Error::config(format!(
            "t60 {} s unreachable in this room: required absorption {alpha:.3} > 1",
            spec.t60_s
        )));
    }
    Ok(alpha)
}

/// Visit every image source within `max_path_m`, including the direct path,
/// in a fixed deterministic order.
fn for_each_image(spec: &RoomSpec, max_path_m: f64, mut visit: impl FnMut(f64, usize)) {
    let dims = [spec.length_m, spec.width_m, spec.height_m];
    let n_blocks: Vec<i64> = dims
        .iter()
        .map(|d| (max_path_m / (2.0 * d)).ceil() as i64)
        .collect();
    for mx in -n_blocks[0]..=n_blocks[0] {
        let rx = 2.0 * mx as f64 * dims[0];
        for my in -n_blocks[1]..=n_blocks[1] {
            let ry = 2.0 * my as f64 * dims[1];
            for mz in -n_blocks[2]..=n_blocks[2] {
                let rz = 2.0 * mz as f64 * dims[2];
                for q in 0..2i64 {
                    let px = (1 - 2 * q) as f64 * spec.src_pos[0] - spec.mic_pos[0] + rx;
                    for j in 0..2i64 {
                        let py = (1 - 2 * j) as f64 * spec.src_pos[1] - spec.mic_pos[1] + ry;
                        for k in 0..2i64 {
                            let pz =
                                (1 - 2 * k) as f64 * spec.src_pos[2] - spec.mic_pos[2] + rz;
                            let dist = (px * px + py * py + pz * pz).sqrt();
                            if dist > max_path_m {
                                continue;
                            }
                            let refl = ((mx - q).abs()
                                + mx.abs()
                                + (my - j).abs()
                                + my.abs()
                                + (mz - k).abs()
                                + mz.abs()) as usize;
                            visit(dist, refl);
                        }
                    }
                }
            }
        }
    }
}

/// Calibrate the uniform wall absorption so the realized broadband decay
/// matches the requested reverberation time.
///
/// The image field with uniform absorption decays slower than the Sabine
/// prediction (grazing axial paths reflect less often than the mean free path
/// suggests), so the Sabine value is only used as a feasibility bound. The
/// actual coefficient is found by bisection against an energy-domain rendering
/// of the image field: a histogram over (arrival-time bin, reflection count)
/// makes each candidate evaluation a cheap polynomial in (1 - alpha).
struct EnergyHistogram {
    bins: Vec<f64>,
    n_bins: usize,
    max_refl: usize,
    bin_s: f64,
}

impl EnergyHistogram {
    fn build(spec: &RoomSpec, max_path_m: f64) -> EnergyHistogram {
        let bin_s = 1e-3;
        let n_bins = (max_path_m / SPEED_OF_SOUND / bin_s).ceil() as usize + 2;
        let dims = [spec.length_m, spec.width_m, spec.height_m];
        let max_refl: usize = dims
            .iter()
            .map(|d| 2 * ((max_path_m / (2.0 * d)).ceil() as usize) + 1)
            .sum::<usize>()
            + 1;
        let mut bins = vec![0.0f64; n_bins * (max_refl + 1)];
        for_each_image(spec, max_path_m, |dist, refl| {
            let b = (dist / SPEED_OF_SOUND / bin_s) as usize;
            let w = 1.0 / (4.0 * PI * dist);
            bins[b * (max_refl + 1) + refl] += w * w;
        });
        EnergyHistogram {
            bins,
            n_bins,
            max_refl,
            bin_s,
        }
    }

    /// Schroeder T60 (-5 dB to -25 dB slope) of the energy envelope for a
    /// candidate absorption.
    fn fit_t60(&self, alpha: f64) -> f64 {
        let x = 1.0 - alpha;
        let mut pow = vec![1.0f64; self.max_refl + 1];
        for i in 1..pow.len() {
            pow[i] = pow[i - 1] * x;
        }
        let stride = self.max_refl + 1;
        let mut energy: Vec<f64> = (0..self.n_bins)
            .map(|b| {
                let row = &self.bins[b * stride..(b + 1) * stride];
                row.iter().zip(pow.iter()).map(|(h, p)| h * p).sum()
            })
            .collect();
        for b in (0..self.n_bins - 1).rev() {
            energy[b] += energy[b + 1];
        }
        let total = energy[0];
        let level = |e: f64| 10.0 * (e / total).log10();
        let n5 = energy.iter().position(|&e| level(e) <= -5.0);
        let n25 = energy.iter().position(|&e| level(e) <= -25.0);
        match (n5, n25) {
            (Some(a), Some(b)) if b > a => 3.0 * (b - a) as f64 * self.bin_s,
            // Decay faster than the histogram resolution: effectively zero.
            _ => 0.0,
        }
    }
}

fn calibrate_absorption(spec: &RoomSpec, max_path_m: f64) -> f64 {
    let hist = EnergyHistogram::build(spec, max_path_m);
    let target = spec.t60_s;
    let mut lo = 1e-6;
    let mut hi = 1.0 - 1e-12;
    if hist.fit_t60(lo) < target {
        return lo; // even near-perfect reflection decays too fast
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if hist.fit_t60(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Scatter a Hann-windowed sinc pulse centered at a fractional `delay` into
/// `out`, scaled by `amp`.
///
/// The half-angle identities sin(pi*(m - frac)) = -(-1)^m sin(pi*frac) and a
/// rotation recurrence for the window cosine keep the inner loop free of
/// transcendental calls.
fn add_windowed_sinc(out: &mut [f64], delay: f64, amp: f64) {
    let f0 = delay.floor();
    let frac = delay - f0;
    let base = f0 as i64;
    let sp = (PI * frac).sin();
    let cf = (PI * frac / KERNEL_SPAN).cos();
    let sf = (PI * frac / KERNEL_SPAN).sin();

    let m_lo = -KERNEL_HALF;
    let m_hi = KERNEL_HALF + 1;
    let mut c = (PI * m_lo as f64 / KERNEL_SPAN).cos();
    let mut s = (PI * m_lo as f64 / KERNEL_SPAN).sin();
    let cstep = (PI / KERNEL_SPAN).cos();
    let sstep = (PI / KERNEL_SPAN).sin();
    for m in m_lo..=m_hi {
        let p = base + m;
        if p >= 0 && (p as usize) < out.len() {
            let u = m as f64 - frac;
            // cos(pi*(m - frac)/span) via the precomputed rotation state.
            let window = 0.5 * (1.0 + c * cf + s * sf);
            let sinc = if u.abs() < 1e-9 {
                1.0
            } else {
                let sin_pi_u = if m % 2 == 0 { -sp } else { sp };
                sin_pi_u / (PI * u)
            };
            out[p as usize] += amp * window.max(0.0) * sinc;
        }
        let (nc, ns) = (c * cstep - s * sstep, s * cstep + c * sstep);
        c = nc;
        s = ns;
    }
}

/// Simulate a shoebox room with the image-source method. Returns the full
/// response and the direct-path-only response rendered with the same
/// fractional-delay kernel, sharing length and sample rate.
///
/// Walls reflect with coefficient `-sqrt(1 - alpha)`: the sign flip per
/// reflection keeps the dense late tail incoherent. With all-positive
/// coefficients the overlapping interpolation pulses add up to a spurious
/// near-DC component that inflates the measured decay time.
pub fn simulate_room(spec: &RoomSpec) -> Result<(Rir, Rir)> {
    spec.validate()?;
    let sabine = sabine_absorption(spec)?;
    let fs = spec.sample_rate as f64;
    let direct_dist = spec.src_mic_distance();
    let direct_delay = direct_dist / SPEED_OF_SOUND * fs;
    let max_path_m = (1.1 * spec.t60_s * SPEED_OF_SOUND).max(direct_dist + 0.1);
    let len = ((1.1 * spec.t60_s * fs).round() as usize)
        .max(direct_delay.ceil() as usize + FRAC_DELAY_TAPS);

    let alpha = if sabine >= 1.0 {
        1.0
    } else {
        calibrate_absorption(spec, max_path_m)
    };
    let beta = -(1.0 - alpha).max(0.0).sqrt();

    let mut full = vec![0.0; len];
    let mut direct = vec![0.0; len];
    add_windowed_sinc(&mut direct, direct_delay, 1.0 / (4.0 * PI * direct_dist));

    let dims = [spec.length_m, spec.width_m, spec.height_m];
    let max_refl: usize = dims
        .iter()
        .map(|d| 2 * ((max_path_m / (2.0 * d)).ceil() as usize) + 1)
        .sum::<usize>()
        + 1;
    let mut beta_pow = vec![1.0f64; max_refl + 1];
    for i in 1..beta_pow.len() {
        beta_pow[i] = beta_pow[i - 1] * beta;
    }

    // Reflection delays are quantized to whole samples relative to the direct
    // arrival. Sub-sample delay differences would need acausal fractional
    // interpolators after the direct path is deconvolved out, which no causal
    // finite relative response can represent; snapping the differences keeps
    // the spectral division exact while each pulse is still rendered with the
    // band-limited kernel.
    for_each_image(spec, max_path_m, |dist, refl| {
        if refl == 0 {
            return; // direct path rendered above
        }
        let amp = beta_pow[refl] / (4.0 * PI * dist);
        let delay = direct_delay + ((dist - direct_dist) / SPEED_OF_SOUND * fs).round();
        add_windowed_sinc(&mut full, delay, amp);
    });
    for (f, d) in full.iter_mut().zip(direct.iter()) {
        *f += d;
    }

    let mut meta = RirMeta::new(spec.t60_s);
    meta.source_mic_distance_m = Some(direct_dist);
    let h_sim = Rir {
        taps: Waveform::new(full, spec.sample_rate),
        kind: RirKind::SimulatedFull,
        meta: meta.clone(),
    };
    let h_dir = Rir {
        taps: Waveform::new(direct, spec.sample_rate),
        kind: RirKind::SimulatedDirect,
        meta,
    };
    Ok((h_sim, h_dir))
}

/// Relative RIR mapping the direct-path signal to the reverberant one:
/// a regularized spectral division of `h_sim` by `h_dir` on an FFT at least
/// twice the response length, truncated back to the input length.
///
/// The division uses the Tikhonov form `H_sim * conj(H_dir) / (|H_dir|^2 +
/// eps^2)` with `eps = 1e-8 * max|H_dir|`, which leaves well-conditioned bins
/// essentially untouched and bounds the gain at spectral nulls.
pub fn relative_rir(h_sim: &Rir, h_dir: &Rir) -> Result<Rir> {
    if h_sim.len() != h_dir.len() {
        return Err(Error::config(format!(
            "length mismatch: h_sim {} vs h_dir {}",
            h_sim.len(),
            h_dir.len()
        )));
    }
    if h_sim.taps.sample_rate != h_dir.taps.sample_rate {
        return Err(Error::config("sample rate mismatch between responses"));
    }
    if h_dir.taps.energy() == 0.0 {
        return Err(Error::input("degenerate direct response: zero energy"));
    }
    let len = h_sim.len();
    let n = (2 * len).next_power_of_two();
    let mut spec_sim: Vec<Complex64> = h_sim
        .taps
        .samples
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .collect();
    spec_sim.resize(n, Complex64::new(0.0, 0.0));
    let mut spec_dir: Vec<Complex64> = h_dir
        .taps
        .samples
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .collect();
    spec_dir.resize(n, Complex64::new(0.0, 0.0));
    let fwd = fft_plan(n, FftDirection::Forward);
    fwd.process(&mut spec_sim);
    fwd.process(&mut spec_dir);

    let max_mag = spec_dir.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    let eps = 1e-8 * max_mag;
    let mut min_denom = f64::INFINITY;
    for (s, d) in spec_sim.iter_mut().zip(spec_dir.iter()) {
        let denom = d.norm_sqr() + eps * eps;
        min_denom = min_denom.min(denom.sqrt());
        *s = *s * d.conj() / denom;
    }
    let inv = fft_plan(n, FftDirection::Inverse);
    inv.process(&mut spec_sim);
    let scale = 1.0 / n as f64;
    let taps: Vec<f64> = spec_sim[..len].iter().map(|c| c.re * scale).collect();

    let mut meta = h_sim.meta.clone();
    meta.drr_db = None;
    meta.numeric_warning = min_denom < 1e-6 * max_mag;
    Ok(Rir {
        taps: Waveform::new(taps, h_sim.taps.sample_rate),
        kind: RirKind::Relative,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::convolve_trunc_first;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn test_room(t60: f64, seed: u64) -> RoomSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ranges = RoomRanges {
            t60_s: (t60, t60),
            ..RoomRanges::default()
        };
        sample_room_spec(&ranges, 16_000, &mut rng)
    }

    #[test]
    fn statistical_rtf_hits_requested_drr_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = StatisticalRtfParams {
            t60_s: 0.5,
            drr_db: -10.0,
            sample_rate: 16_000,
        };
        let rir = sample_statistical_rtf(&p, &mut rng).unwrap();
        assert_eq!(rir.taps.samples[0], 1.0);
        let drr = measure_drr(&rir, 1).unwrap();
        assert!((drr - -10.0).abs() < 1e-6, "drr {drr}");
    }

    #[test]
    fn decay_rate_matches_closed_form() {
        let lambda = decay_rate(1.0, 16_000);
        assert!((lambda - 3.0 * 10f64.ln() / 16_000.0).abs() < 1e-18);
        assert!((lambda - 4.317e-4).abs() / 4.317e-4 < 1e-3);
    }

    #[test]
    fn envelope_reaches_minus_sixty_db_at_t60() {
        let lambda = decay_rate(0.8, 16_000);
        let tail_len = (0.8 * 16_000.0f64).round();
        let envelope = (-lambda * tail_len).exp();
        assert!((envelope - 1e-3).abs() / 1e-3 < 1e-3);
    }

    #[test]
    fn drr_of_pure_impulse_is_infinite() {
        let rir = Rir {
            taps: Waveform::new(vec![1.0, 0.0, 0.0], 16_000),
            kind: RirKind::Statistical,
            meta: RirMeta::new(0.1),
        };
        assert_eq!(measure_drr(&rir, 1).unwrap(), f64::INFINITY);
    }

    #[test]
    fn drr_of_equal_energy_split_is_zero() {
        let rir = Rir {
            taps: Waveform::new(vec![1.0, 1.0], 16_000),
            kind: RirKind::Statistical,
            meta: RirMeta::new(0.1),
        };
        assert!(measure_drr(&rir, 1).unwrap().abs() < 1e-12);
    }

    #[test]
    fn drr_round_trips_through_sampler() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let p = StatisticalRtfParams {
                t60_s: rng.gen_range(0.5..1.2),
                drr_db: rng.gen_range(-16.0..-6.0),
                sample_rate: 16_000,
            };
            let rir = sample_statistical_rtf(&p, &mut rng).unwrap();
            let drr = measure_drr(&rir, 1).unwrap();
            assert!((drr - p.drr_db).abs() < 1e-6);
        }
    }

    #[test]
    fn sampler_is_deterministic_per_seed() {
        let p = StatisticalRtfParams {
            t60_s: 0.7,
            drr_db: -9.0,
            sample_rate: 16_000,
        };
        let a = sample_statistical_rtf(&p, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = sample_statistical_rtf(&p, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a.taps.samples, b.taps.samples);
    }

    #[test]
    fn statistical_tail_is_white() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = StatisticalRtfParams {
            t60_s: 0.6, // 9600 tail taps
            drr_db: -10.0,
            sample_rate: 16_000,
        };
        let rir = sample_statistical_rtf(&p, &mut rng).unwrap();
        let gamma = rir.meta.tail_gain.unwrap();
        let lambda = decay_rate(p.t60_s, p.sample_rate);
        let eta: Vec<f64> = rir.taps.samples[1..]
            .iter()
            .enumerate()
            .map(|(i, &x)| x * (lambda * (i + 1) as f64).exp() / gamma)
            .collect();
        let n = eta.len() as f64;
        assert!(n >= 8000.0);
        let mean = eta.iter().sum::<f64>() / n;
        let var = eta.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn windowed_sinc_matches_direct_evaluation() {
        let mut fast = vec![0.0; 200];
        let delay = 93.37;
        let amp = 0.8;
        add_windowed_sinc(&mut fast, delay, amp);
        let mut slow = vec![0.0; 200];
        for (p, out) in slow.iter_mut().enumerate() {
            let u = p as f64 - delay;
            if u.abs() <= KERNEL_SPAN {
                let window = 0.5 * (1.0 + (PI * u / KERNEL_SPAN).cos());
                let sinc = if u.abs() < 1e-9 { 1.0 } else { (PI * u).sin() / (PI * u) };
                *out = amp * window * sinc;
            }
        }
        for (i, (a, b)) in fast.iter().zip(slow.iter()).enumerate() {
            assert!((a - b).abs() < 1e-12, "tap {i}: {a} vs {b}");
        }
        // Integer delay reduces to a clean unit pulse.
        let mut pulse = vec![0.0; 100];
        add_windowed_sinc(&mut pulse, 50.0, 1.0);
        assert!((pulse[50] - 1.0).abs() < 1e-12);
        let off: f64 = pulse
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 50)
            .map(|(_, x)| x * x)
            .sum();
        assert!(off < 1e-20);
    }

    #[test]
    fn direct_arrival_lands_at_predicted_index() {
        let spec = test_room(0.4, 3);
        let (_, h_dir) = simulate_room(&spec).unwrap();
        let expected = (spec.src_mic_distance() / SPEED_OF_SOUND * 16_000.0).round() as i64;
        let peak = h_dir
            .taps
            .samples
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap()
            .0 as i64;
        assert!(
            (peak - expected).abs() <= KERNEL_HALF,
            "peak {peak} expected {expected}"
        );
    }

    #[test]
    fn anechoic_limit_collapses_to_direct_path() {
        // t60 at the Sabine bound makes the absorption exactly 1.
        let mut spec = test_room(0.4, 5);
        spec.t60_s = 0.161 * spec.volume() / spec.surface();
        let (h_sim, h_dir) = simulate_room(&spec).unwrap();
        let num: f64 = h_sim
            .taps
            .samples
            .iter()
            .zip(h_dir.taps.samples.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let den = h_dir.taps.energy();
        assert!((num / den).sqrt() < 1e-6);
    }

    #[test]
    fn unreachable_t60_is_a_configuration_error() {
        let mut spec = test_room(0.4, 6);
        spec.t60_s = 0.01;
        assert!(matches!(simulate_room(&spec), Err(Error::Config(_))));
    }

    fn schroeder_t60(h: &[f64], fs: f64) -> f64 {
        // Backward energy integration, -5 dB to -25 dB slope.
        let mut edc: Vec<f64> = vec![0.0; h.len()];
        let mut acc = 0.0;
        for (i, &x) in h.iter().enumerate().rev() {
            acc += x * x;
            edc[i] = acc;
        }
        let total = edc[0];
        let db = |e: f64| 10.0 * (e / total).log10();
        let n5 = edc.iter().position(|&e| db(e) <= -5.0).unwrap();
        let n25 = edc.iter().position(|&e| db(e) <= -25.0).unwrap();
        3.0 * (n25 - n5) as f64 / fs
    }

    #[test]
    fn schroeder_t60_within_twenty_percent() {
        for seed in [10u64, 11, 12] {
            let spec = test_room(0.5, seed);
            let (h_sim, _) = simulate_room(&spec).unwrap();
            let t60 = schroeder_t60(&h_sim.taps.samples, 16_000.0);
            assert!(
                (t60 - spec.t60_s).abs() / spec.t60_s < 0.2,
                "seed {seed}: schroeder {t60} vs spec {}",
                spec.t60_s
            );
        }
    }

    #[test]
    fn relative_rir_of_delta_direct_is_identity() {
        let spec = test_room(0.3, 20);
        let (h_sim, _) = simulate_room(&spec).unwrap();
        let mut delta = vec![0.0; h_sim.len()];
        delta[0] = 1.0;
        let h_dir = Rir {
            taps: Waveform::new(delta, 16_000),
            kind: RirKind::SimulatedDirect,
            meta: RirMeta::new(spec.t60_s),
        };
        let h_rel = relative_rir(&h_sim, &h_dir).unwrap();
        let num: f64 = h_rel
            .taps
            .samples
            .iter()
            .zip(h_sim.taps.samples.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!((num / h_sim.taps.energy()).sqrt() < 1e-9);
    }

    #[test]
    fn self_deconvolution_is_a_delta() {
        let spec = test_room(0.3, 21);
        let (_, h_dir) = simulate_room(&spec).unwrap();
        let h_rel = relative_rir(&h_dir, &h_dir).unwrap();
        let peak_idx = h_rel
            .taps
            .samples
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap()
            .0;
        assert!(peak_idx <= 2, "peak at {peak_idx}");
        let peak_e = h_rel.taps.samples[peak_idx].powi(2);
        let off_e: f64 = h_rel
            .taps
            .samples
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != peak_idx)
            .map(|(_, x)| x * x)
            .sum();
        assert!(off_e / peak_e < 1e-6, "off/peak {}", off_e / peak_e);
    }

    #[test]
    fn relative_rir_round_trip_on_random_rooms() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let ranges = RoomRanges {
            t60_s: (0.2, 0.6),
            ..RoomRanges::default()
        };
        for i in 0..8 {
            let spec = sample_room_spec(&ranges, 16_000, &mut rng);
            let (h_sim, h_dir) = simulate_room(&spec).unwrap();
            let h_rel = relative_rir(&h_sim, &h_dir).unwrap();
            let peak_idx = h_rel
                .taps
                .samples
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
                .unwrap()
                .0;
            assert!(peak_idx <= 2, "room {i}: peak at {peak_idx}");

            let x = Waveform::new(
                (0..32_000).map(|_| rng.gen_range(-0.5..0.5)).collect(),
                16_000,
            );
            let via_dir = convolve_trunc_first(&x, &h_dir.taps).unwrap();
            let via_rel = convolve_trunc_first(&via_dir, &h_rel.taps).unwrap();
            let target = convolve_trunc_first(&x, &h_sim.taps).unwrap();
            let num: f64 = via_rel
                .samples
                .iter()
                .zip(target.samples.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let rel = (num / target.energy()).sqrt();
            assert!(rel < 1e-2, "room {i}: relative error {rel}");
        }
    }

    #[test]
    fn simulated_rooms_are_deterministic() {
        let spec = test_room(0.35, 40);
        let (a, _) = simulate_room(&spec).unwrap();
        let (b, _) = simulate_room(&spec).unwrap();
        assert_eq!(a.taps.samples, b.taps.samples);
    }
}
