//! Evaluation metrics against the direct-path reference: SI-SDR with target
//! projection and extended short-time objective intelligibility, plus
//! per-utterance and SNR-bucketed set evaluation.
//!
//! Unlike the training loss, the SI-SDR *metric* projects the estimate onto
//! the reference (the scaled reference is the target); the two conventions
//! are intentionally distinct.

use rustfft::num_complex::Complex64;
use rustfft::FftDirection;

use crate::checkpoint::Checkpoint;
use crate::data::{read_wav, Manifest, Split};
use crate::error::{Error, Result};
use crate::signal::{fft_plan, Waveform};
use crate::train::{enhance, Net};

/// Cap applied to the SI-SDR metric, in dB.
pub const SI_SDR_CAP_DB: f64 = 100.0;

/// Scale-invariant signal-to-distortion ratio with the target-projection
/// convention, capped at +100 dB.
pub fn si_sdr_metric(est: &Waveform, reference: &Waveform) -> Result<f64> {
    if est.len() != reference.len() {
        return Err(Error::input(format!(
            "length mismatch: estimate {} vs reference {}",
            est.len(),
            reference.len()
        )));
    }
    let ref_energy: f64 = reference.samples.iter().map(|x| x * x).sum();
    if ref_energy == 0.0 {
        return Err(Error::input("si-sdr reference must be non-zero"));
    }
    let dot: f64 = est
        .samples
        .iter()
        .zip(&reference.samples)
        .map(|(a, b)| a * b)
        .sum();
    let gain = dot / ref_energy;
    let target_energy = gain * gain * ref_energy;
    let noise_energy: f64 = est
        .samples
        .iter()
        .zip(&reference.samples)
        .map(|(a, b)| {
            let d = a - gain * b;
            d * d
        })
        .sum();
    if noise_energy == 0.0 || target_energy == 0.0 && noise_energy == 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    if target_energy == 0.0 {
        return Ok(f64::NEG_INFINITY.max(-SI_SDR_CAP_DB));
    }
    Ok((10.0 * (target_energy / noise_energy).log10()).min(SI_SDR_CAP_DB))
}

// ---------------------------------------------------------------------------
// Extended short-time objective intelligibility
// ---------------------------------------------------------------------------

const ESTOI_FS: u32 = 10_000;
const ESTOI_FRAME: usize = 256;
const ESTOI_HOP: usize = 128;
const ESTOI_NFFT: usize = 512;
const ESTOI_BANDS: usize = 15;
const ESTOI_MIN_FREQ: f64 = 150.0;
const ESTOI_SEG: usize = 30;
const ESTOI_DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
    }
    sum
}

fn sinc_pi(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Polyphase resampler with the classic Octave anti-aliasing design: a
/// Kaiser-windowed sinc sized from a 60 dB rejection spec, applied as a
/// centered zero-phase interpolator.
pub fn resample(x: &[f64], to_hz: u32, from_hz: u32) -> Vec<f64> {
    if to_hz == from_hz {
        return x.to_vec();
    }
    let g = gcd(to_hz as u64, from_hz as u64);
    let p = (to_hz as u64 / g) as i64;
    let q = (from_hz as u64 / g) as i64;
    let max_pq = p.max(q) as f64;
    let cutoff = 1.0 / (2.0 * max_pq);
    let roll_off = cutoff / 10.0;
    let rejection_db = 60.0;
    let half_len = ((rejection_db - 8.0) / (28.714 * roll_off)).ceil() as i64;
    let beta = 0.1102 * (rejection_db - 8.7);

    let m = (2 * half_len + 1) as usize;
    let i0_beta = bessel_i0(beta);
    let mut filter: Vec<f64> = (0..m)
        .map(|i| {
            let t = i as i64 - half_len;
            let ideal = 2.0 * p as f64 * cutoff * sinc_pi(2.0 * cutoff * t as f64);
            let u = 2.0 * i as f64 / (m - 1) as f64 - 1.0;
            let kaiser = bessel_i0(beta * (1.0 - u * u).max(0.0).sqrt()) / i0_beta;
            ideal * kaiser
        })
        .collect();
    let sum: f64 = filter.iter().sum();
    // Normalized to unit DC gain, then scaled by the upsampling factor.
    for h in filter.iter_mut() {
        *h *= p as f64 / sum;
    }

    let n_in = x.len() as i64;
    let n_out = (n_in * p + q - 1) / q;
    let mut out = Vec::with_capacity(n_out as usize);
    for mi in 0..n_out {
        let center = mi * q;
        let k_lo = ((center - half_len) as f64 / p as f64).ceil() as i64;
        let k_hi = ((center + half_len) as f64 / p as f64).floor() as i64;
        let mut acc = 0.0;
        for k in k_lo.max(0)..=k_hi.min(n_in - 1) {
            let idx = (center - k * p + half_len) as usize;
            acc += x[k as usize] * filter[idx];
        }
        out.push(acc);
    }
    out
}

/// Periodic-equivalent Hann used throughout the intelligibility pipeline.
fn estoi_window() -> Vec<f64> {
    (0..ESTOI_FRAME)
        .map(|j| {
            0.5 - 0.5
                * (2.0 * std::f64::consts::PI * (j + 1) as f64 / (ESTOI_FRAME + 1) as f64).cos()
        })
        .collect()
}

fn frame_starts(len: usize) -> Vec<usize> {
    let mut starts = Vec::new();
    if len > ESTOI_FRAME {
        let mut i = 0;
        while i < len - ESTOI_FRAME {
            starts.push(i);
            i += ESTOI_HOP;
        }
    }
    starts
}

/// Drop frames whose windowed clean-signal energy falls 40 dB below the peak
/// frame, then overlap-add the surviving windowed frames back together.
fn remove_silent_frames(clean: &[f64], processed: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = estoi_window();
    let starts = frame_starts(clean.len());
    if starts.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let energies: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let e: f64 = (0..ESTOI_FRAME)
                .map(|j| (w[j] * clean[s + j]) * (w[j] * clean[s + j]))
                .sum();
            20.0 * (e.sqrt() + EPS).log10()
        })
        .collect();
    let max = energies.iter().cloned().fold(f64::MIN, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, &e)| max - ESTOI_DYN_RANGE_DB - e < 0.0)
        .map(|(&s, _)| s)
        .collect();
    let out_len = if kept.is_empty() {
        0
    } else {
        (kept.len() - 1) * ESTOI_HOP + ESTOI_FRAME
    };
    let mut x_out = vec![0.0; out_len];
    let mut y_out = vec![0.0; out_len];
    for (ki, &s) in kept.iter().enumerate() {
        let base = ki * ESTOI_HOP;
        for j in 0..ESTOI_FRAME {
            x_out[base + j] += w[j] * clean[s + j];
            y_out[base + j] += w[j] * processed[s + j];
        }
    }
    (x_out, y_out)
}

/// Magnitude spectrogram: windowed 256-sample frames zero-padded into a
/// 512-point FFT, non-redundant bins only. Rows are frames.
fn estoi_spectrogram(x: &[f64]) -> Vec<Vec<f64>> {
    let w = estoi_window();
    let starts = frame_starts(x.len());
    let plan = fft_plan(ESTOI_NFFT, FftDirection::Forward);
    let bins = ESTOI_NFFT / 2 + 1;
    let mut frames = Vec::with_capacity(starts.len());
    let mut buf = vec![Complex64::new(0.0, 0.0); ESTOI_NFFT];
    for &s in &starts {
        for (i, c) in buf.iter_mut().enumerate() {
            *c = if i < ESTOI_FRAME {
                Complex64::new(x[s + i] * w[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        plan.process(&mut buf);
        frames.push(buf[..bins].iter().map(|c| c.norm_sqr()).collect());
    }
    frames
}

/// One-third-octave band edges as FFT bin ranges, matched to the nearest bin
/// center like the reference intelligibility tooling does.
fn third_octave_bins() -> Vec<(usize, usize)> {
    let bins = ESTOI_NFFT / 2 + 1;
    let f: Vec<f64> = (0..bins)
        .map(|k| k as f64 * ESTOI_FS as f64 / ESTOI_NFFT as f64)
        .collect();
    let mut bands = Vec::with_capacity(ESTOI_BANDS);
    for k in 0..ESTOI_BANDS {
        let lo = ESTOI_MIN_FREQ * 2f64.powf((2.0 * k as f64 - 1.0) / 6.0);
        let hi = ESTOI_MIN_FREQ * 2f64.powf((2.0 * k as f64 + 1.0) / 6.0);
        let nearest = |target: f64| -> usize {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, &fi) in f.iter().enumerate() {
                let d = (fi - target) * (fi - target);
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            best
        };
        bands.push((nearest(lo), nearest(hi)));
    }
    bands
}

/// Row- then column-wise mean/variance normalization of a bands x frames
/// segment, flattened row-major.
fn row_col_normalize(seg: &mut [f64], rows: usize, cols: usize) {
    for r in 0..rows {
        let row = &mut seg[r * cols..(r + 1) * cols];
        let mean = row.iter().sum::<f64>() / cols as f64;
        for v in row.iter_mut() {
            *v -= mean;
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let inv = 1.0 / (norm + EPS);
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
    for c in 0..cols {
        let mut mean = 0.0;
        for r in 0..rows {
            mean += seg[r * cols + c];
        }
        mean /= rows as f64;
        let mut norm = 0.0;
        for r in 0..rows {
            let v = seg[r * cols + c] - mean;
            seg[r * cols + c] = v;
            norm += v * v;
        }
        let inv = 1.0 / (norm.sqrt() + EPS);
        for r in 0..rows {
            seg[r * cols + c] *= inv;
        }
    }
}

/// Extended short-time objective intelligibility of `est` against the clean
/// reference, in [-1, 1].
pub fn estoi(est: &Waveform, reference: &Waveform) -> Result<f64> {
    if est.len() != reference.len() {
        return Err(Error::input(format!(
            "length mismatch: estimate {} vs reference {}",
            est.len(),
            reference.len()
        )));
    }
    if est.sample_rate != reference.sample_rate {
        return Err(Error::input("sample rate mismatch"));
    }
    let clean = resample(&reference.samples, ESTOI_FS, reference.sample_rate);
    let processed = resample(&est.samples, ESTOI_FS, est.sample_rate);
    let (clean, processed) = remove_silent_frames(&clean, &processed);

    let x_spec = estoi_spectrogram(&clean);
    let y_spec = estoi_spectrogram(&processed);
    let t = x_spec.len();
    if t < ESTOI_SEG {
        return Err(Error::TooShort(format!(
            "only {t} active frames after silence removal, need at least {ESTOI_SEG} \
             (~384 ms of active speech)"
        )));
    }

    let bands = third_octave_bins();
    let band_energy = |spec: &[Vec<f64>]| -> Vec<f64> {
        // bands x frames, row-major
        let mut tob = vec![0.0; ESTOI_BANDS * spec.len()];
        for (ti, frame) in spec.iter().enumerate() {
            for (bi, &(lo, hi)) in bands.iter().enumerate() {
                let e: f64 = frame[lo..hi].iter().sum();
                tob[bi * spec.len() + ti] = e.sqrt();
            }
        }
        tob
    };
    let x_tob = band_energy(&x_spec);
    let y_tob = band_energy(&y_spec);

    let n_segments = t - ESTOI_SEG + 1;
    let mut total = 0.0;
    let mut x_seg = vec![0.0; ESTOI_BANDS * ESTOI_SEG];
    let mut y_seg = vec![0.0; ESTOI_BANDS * ESTOI_SEG];
    for m in 0..n_segments {
        for b in 0..ESTOI_BANDS {
            for n in 0..ESTOI_SEG {
                x_seg[b * ESTOI_SEG + n] = x_tob[b * t + m + n];
                y_seg[b * ESTOI_SEG + n] = y_tob[b * t + m + n];
            }
        }
        row_col_normalize(&mut x_seg, ESTOI_BANDS, ESTOI_SEG);
        row_col_normalize(&mut y_seg, ESTOI_BANDS, ESTOI_SEG);
        let corr: f64 = x_seg.iter().zip(&y_seg).map(|(a, b)| a * b).sum();
        total += corr / ESTOI_SEG as f64;
    }
    Ok(total / n_segments as f64)
}

// ---------------------------------------------------------------------------
// Set evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub utt_id: String,
    pub si_sdr_db: f64,
    pub estoi: f64,
    pub input_snr_db: Option<f64>,
    pub net: String,
}

#[derive(Debug, Clone)]
pub struct BucketStat {
    pub lo_db: f64,
    pub hi_db: f64,
    pub hi_inclusive: bool,
    pub n: usize,
    pub mean_si_sdr_db: f64,
    pub mean_estoi: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EvalSummary {
    pub n: usize,
    pub mean_si_sdr_db: f64,
    pub mean_estoi: f64,
    pub buckets: Option<Vec<BucketStat>>,
    pub skipped: Vec<String>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub by_snr_buckets: bool,
    pub which_net: Net,
}

/// The SNR bucket edges: [5,10), [10,15), [15,20), [20,25].
pub const SNR_BUCKETS_DB: [(f64, f64); 4] =
    [(5.0, 10.0), (10.0, 15.0), (15.0, 20.0), (20.0, 25.0)];

/// Evaluate an arbitrary enhancement function over the test split of a
/// manifest. Rows without a usable reference are skipped and listed.
pub fn evaluate_with<F>(
    enhancer: F,
    manifest: &Manifest,
    by_snr_buckets: bool,
    net_label: &str,
) -> Result<(Vec<EvalRecord>, EvalSummary)>
where
    F: Fn(&Waveform) -> Result<Waveform>,
{
    let rows: Vec<_> = manifest.split(Split::Test).collect();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for row in rows {
        let reference_rel = match &row.reference_path {
            Some(p) => p,
            None => {
                skipped.push(row.utt_id.clone());
                continue;
            }
        };
        let ref_path = manifest.resolve(reference_rel);
        if !ref_path.exists() {
            skipped.push(row.utt_id.clone());
            continue;
        }
        let mixture = read_wav(&manifest.resolve(&row.mixture_path))?;
        let reference = read_wav(&ref_path)?;
        let est = enhancer(&mixture)?;
        let si_sdr_db = si_sdr_metric(&est, &reference)?;
        let estoi_score = estoi(&est, &reference)?;
        records.push(EvalRecord {
            utt_id: row.utt_id.clone(),
            si_sdr_db,
            estoi: estoi_score,
            input_snr_db: row.input_snr_db,
            net: net_label.to_string(),
        });
    }

    let n = records.len();
    let mut summary = EvalSummary {
        n,
        skipped,
        ..EvalSummary::default()
    };
    if n == 0 {
        summary.warning = Some("no test utterances were evaluated".to_string());
        return Ok((records, summary));
    }
    summary.mean_si_sdr_db = records.iter().map(|r| r.si_sdr_db).sum::<f64>() / n as f64;
    summary.mean_estoi = records.iter().map(|r| r.estoi).sum::<f64>() / n as f64;
    if by_snr_buckets {
        let mut buckets = Vec::new();
        for (i, (lo, hi)) in SNR_BUCKETS_DB.iter().enumerate() {
            let hi_inclusive = i == SNR_BUCKETS_DB.len() - 1;
            let members: Vec<&EvalRecord> = records
                .iter()
                .filter(|r| match r.input_snr_db {
                    Some(snr) => snr >= *lo && (snr < *hi || (hi_inclusive && snr <= *hi)),
                    None => false,
                })
                .collect();
            let count = members.len();
            let (mean_si, mean_es) = if count > 0 {
                (
                    members.iter().map(|r| r.si_sdr_db).sum::<f64>() / count as f64,
                    members.iter().map(|r| r.estoi).sum::<f64>() / count as f64,
                )
            } else {
                (f64::NAN, f64::NAN)
            };
            buckets.push(BucketStat {
                lo_db: *lo,
                hi_db: *hi,
                hi_inclusive,
                n: count,
                mean_si_sdr_db: mean_si,
                mean_estoi: mean_es,
            });
        }
        summary.buckets = Some(buckets);
    }
    Ok((records, summary))
}

/// Evaluate a checkpointed network over the test split.
pub fn evaluate_set(
    ckpt: &Checkpoint,
    manifest: &Manifest,
    opts: &EvalOptions,
) -> Result<(Vec<EvalRecord>, EvalSummary)> {
    let label = match opts.which_net {
        Net::Student => "student",
        Net::Teacher => "teacher",
    };
    evaluate_with(
        |y| enhance(ckpt, y, opts.which_net),
        manifest,
        opts.by_snr_buckets,
        label,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_toy_source;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, sr: u32, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.gen_range(-0.5..0.5)).collect(), sr)
    }

    #[test]
    fn si_sdr_identity_hits_the_cap() {
        let w = noise(1000, 16_000, 1);
        assert_eq!(si_sdr_metric(&w, &w).unwrap(), SI_SDR_CAP_DB);
        for c in [2.0, -0.5, 1e4] {
            let scaled = Waveform::new(w.samples.iter().map(|x| c * x).collect(), 16_000);
            assert_eq!(si_sdr_metric(&scaled, &w).unwrap(), SI_SDR_CAP_DB);
        }
    }

    #[test]
    fn si_sdr_orthogonal_equal_energy_is_zero() {
        let n = 1024;
        let reference = Waveform::new(
            (0..n)
                .map(|i| (2.0 * std::f64::consts::PI * 16.0 * i as f64 / n as f64).sin())
                .collect(),
            16_000,
        );
        let perturbed = Waveform::new(
            reference
                .samples
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    s + (2.0 * std::f64::consts::PI * 16.0 * i as f64 / n as f64).cos()
                })
                .collect(),
            16_000,
        );
        let v = si_sdr_metric(&perturbed, &reference).unwrap();
        assert!(v.abs() < 1e-9, "value {v}");
    }

    #[test]
    fn si_sdr_is_scale_invariant_below_the_cap() {
        let reference = noise(800, 16_000, 2);
        let est = noise(800, 16_000, 3);
        let v0 = si_sdr_metric(&est, &reference).unwrap();
        for c in [2.0, -3.0, 1e-3] {
            let scaled = Waveform::new(est.samples.iter().map(|x| c * x).collect(), 16_000);
            let v = si_sdr_metric(&scaled, &reference).unwrap();
            assert!((v - v0).abs() < 1e-9);
        }
    }

    #[test]
    fn si_sdr_rejects_zero_reference() {
        let est = noise(100, 16_000, 4);
        assert!(si_sdr_metric(&est, &Waveform::zeros(100, 16_000)).is_err());
    }

    #[test]
    fn resample_preserves_a_tone() {
        // 400 Hz tone at 16 kHz resampled to 10 kHz stays a 400 Hz tone.
        let fs_in = 16_000;
        let n = 16_000;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 400.0 * i as f64 / fs_in as f64).sin())
            .collect();
        let y = resample(&x, 10_000, fs_in);
        assert_eq!(y.len(), 10_000);
        let expect: Vec<f64> = (0..y.len())
            .map(|i| (2.0 * std::f64::consts::PI * 400.0 * i as f64 / 10_000.0).sin())
            .collect();
        // Compare away from the edges.
        let mut err = 0.0f64;
        for i in 500..y.len() - 500 {
            err = err.max((y[i] - expect[i]).abs());
        }
        assert!(err < 1e-3, "max tone error {err}");
    }

    #[test]
    fn estoi_self_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = generate_toy_source(2.0, 16_000, &mut rng);
        let v = estoi(&w, &w).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "self estoi {v}");
    }

    #[test]
    fn estoi_is_gain_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let reference = generate_toy_source(2.0, 16_000, &mut rng);
        let degraded = Waveform::new(
            reference
                .samples
                .iter()
                .enumerate()
                .map(|(i, &s)| s + 0.01 * ((i % 97) as f64 / 97.0 - 0.5))
                .collect(),
            16_000,
        );
        let v0 = estoi(&degraded, &reference).unwrap();
        for c in [3.0, 0.1] {
            let est = Waveform::new(degraded.samples.iter().map(|x| c * x).collect(), 16_000);
            let v = estoi(&est, &reference).unwrap();
            assert!((v - v0).abs() < 1e-6, "gain {c}: {v} vs {v0}");
            let reference_scaled =
                Waveform::new(reference.samples.iter().map(|x| c * x).collect(), 16_000);
            let v = estoi(&degraded, &reference_scaled).unwrap();
            assert!((v - v0).abs() < 1e-6, "ref gain {c}: {v} vs {v0}");
        }
    }

    #[test]
    fn estoi_of_independent_noise_is_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..10 {
            let reference = generate_toy_source(4.0, 16_000, &mut rng);
            let est = noise(reference.len(), 16_000, 100 + trial);
            let v = estoi(&est, &reference).unwrap();
            assert!(v.abs() < 0.1, "trial {trial}: estoi {v}");
        }
    }

    #[test]
    fn estoi_rejects_too_short_signals() {
        let w = noise(1000, 16_000, 8);
        assert!(matches!(estoi(&w, &w), Err(Error::TooShort(_))));
    }

    #[test]
    fn bucket_means_recombine_to_the_global_mean() {
        // Synthetic records across all buckets.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let records: Vec<EvalRecord> = (0..40)
            .map(|i| EvalRecord {
                utt_id: format!("u{i}"),
                si_sdr_db: rng.gen_range(-10.0..10.0),
                estoi: rng.gen_range(0.0..1.0),
                input_snr_db: Some(rng.gen_range(5.0..=25.0)),
                net: "student".into(),
            })
            .collect();
        let global = records.iter().map(|r| r.si_sdr_db).sum::<f64>() / records.len() as f64;
        let mut weighted = 0.0;
        let mut count = 0usize;
        for (i, (lo, hi)) in SNR_BUCKETS_DB.iter().enumerate() {
            let inclusive = i == SNR_BUCKETS_DB.len() - 1;
            let members: Vec<_> = records
                .iter()
                .filter(|r| {
                    let snr = r.input_snr_db.unwrap();
                    snr >= *lo && (snr < *hi || (inclusive && snr <= *hi))
                })
                .collect();
            if !members.is_empty() {
                let mean = members.iter().map(|r| r.si_sdr_db).sum::<f64>() / members.len() as f64;
                weighted += mean * members.len() as f64;
                count += members.len();
            }
        }
        assert_eq!(count, records.len());
        assert!((weighted / count as f64 - global).abs() < 1e-9);
    }
}
