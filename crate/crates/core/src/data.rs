//! Toy dataset construction: quasi-speech sources, room convolution and noise
//! mixing, WAV I/O, and manifest management.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::rir::{sample_room_spec, simulate_room, RoomRanges, RoomSpec};
use crate::signal::{convolve_trunc_first, Waveform};

/// One noisy-reverberant mixture to synthesize.
#[derive(Debug, Clone)]
pub struct MixtureSpec {
    pub snr_db: f64,
    pub room: RoomSpec,
    pub seed: u64,
}

/// Allowed mixing SNR range, in dB.
pub const SNR_RANGE_DB: (f64, f64) = (5.0, 25.0);

impl MixtureSpec {
    fn validate(&self) -> Result<()> {
        if self.snr_db < SNR_RANGE_DB.0 || self.snr_db > SNR_RANGE_DB.1 {
            return Err(Error::config(format!(
                "snr {} dB outside [{}, {}] dB",
                self.snr_db, SNR_RANGE_DB.0, SNR_RANGE_DB.1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MixtureMeta {
    pub input_snr_db: f64,
    pub t60_s: f64,
    pub norm_gain: f64,
    /// Scaled noise before joint normalization; `y / norm_gain - noise` is
    /// exactly the reverberant component.
    pub noise_prenorm: Waveform,
}

/// Convolve a source with a simulated room and add low-pass-shaped Gaussian
/// noise at exactly the requested SNR; the mixture and its direct-path
/// reference are then jointly peak-normalized to 0.9.
pub fn synthesize_mixture(
    x: &Waveform,
    spec: &MixtureSpec,
) -> Result<(Waveform, Waveform, MixtureMeta)> {
    spec.validate()?;
    if x.energy() == 0.0 {
        return Err(Error::input("silent source"));
    }
    let (h_sim, h_dir) = simulate_room(&spec.room)?;
    let reverberant = convolve_trunc_first(x, &h_sim.taps)?;
    let reference = convolve_trunc_first(x, &h_dir.taps)?;

    let mut rng = ChaCha8Rng::seed_from_u64_stream(spec.seed, 0);
    let fs = x.sample_rate as f64;
    let pole = (-2.0 * PI * 2000.0 / fs).exp();
    let mut state = 0.0;
    let mut noise: Vec<f64> = (0..x.len())
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            state = pole * state + (1.0 - pole) * g;
            state
        })
        .collect();
    let noise_energy: f64 = noise.iter().map(|v| v * v).sum();
    let scale = (reverberant.energy() / (noise_energy * 10f64.powf(spec.snr_db / 10.0))).sqrt();
    for v in noise.iter_mut() {
        *v *= scale;
    }

    let mut y = Waveform::new(
        reverberant
            .samples
            .iter()
            .zip(&noise)
            .map(|(r, n)| r + n)
            .collect(),
        x.sample_rate,
    );
    let gain = 0.9 / y.peak();
    let mut reference = reference;
    for v in y.samples.iter_mut() {
        *v *= gain;
    }
    for v in reference.samples.iter_mut() {
        *v *= gain;
    }
    Ok((
        y,
        reference,
        MixtureMeta {
            input_snr_db: spec.snr_db,
            t60_s: spec.room.t60_s,
            norm_gain: gain,
            noise_prenorm: Waveform::new(noise, x.sample_rate),
        },
    ))
}

trait SeedStream {
    fn seed_from_u64_stream(seed: u64, stream: u64) -> ChaCha8Rng;
}

impl SeedStream for ChaCha8Rng {
    fn seed_from_u64_stream(seed: u64, stream: u64) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng
    }
}

// ---------------------------------------------------------------------------
// Quasi-speech sources
// ---------------------------------------------------------------------------

struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
    z1: f64,
    z2: f64,
}

impl Resonator {
    fn new(center_hz: f64, bandwidth_hz: f64, fs: f64) -> Resonator {
        let r = (-PI * bandwidth_hz / fs).exp();
        let theta = 2.0 * PI * center_hz / fs;
        Resonator {
            a1: 2.0 * r * theta.cos(),
            a2: -r * r,
            gain: 1.0 - r,
            z1: 0.0,
            z2: 0.0,
        }
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.gain * x + self.a1 * self.z1 + self.a2 * self.z2;
        self.z2 = self.z1;
        self.z1 = y;
        y
    }
}

fn raised_cosine_edges(seg: &mut [f64], edge: usize) {
    let edge = edge.min(seg.len() / 2);
    for i in 0..edge {
        let w = 0.5 * (1.0 - (PI * i as f64 / edge as f64).cos());
        seg[i] *= w;
        let j = seg.len() - 1 - i;
        seg[j] *= w;
    }
}

/// Generate one quasi-speech source: voiced harmonic-stack segments through
/// drifting formant resonators, alternating with unvoiced noise bursts and
/// silences, peak-normalized to 0.5.
pub fn generate_toy_source<R: Rng>(dur_s: f64, sample_rate: u32, rng: &mut R) -> Waveform {
    let fs = sample_rate as f64;
    let total = (dur_s * fs).round() as usize;
    let mut out = vec![0.0; total];
    let mut pos = 0usize;
    let sec = |s: f64| (s * fs) as usize;

    while pos < total {
        // Voiced segment.
        let vlen = rng.gen_range(sec(0.15)..=sec(0.40)).min(total - pos);
        if vlen > sec(0.02) {
            let mut f0 = rng.gen_range(80.0..300.0);
            let f0_drift = rng.gen_range(-40.0..40.0) / vlen as f64;
            let n_harm = 10usize;
            let mut phase = vec![0.0f64; n_harm];
            let formants: Vec<(f64, f64, f64)> = [
                (300.0, 900.0),
                (900.0, 2200.0),
                (2200.0, 3500.0),
            ]
            .iter()
            .map(|&(lo, hi)| {
                let c0 = rng.gen_range(lo..hi);
                let c1 = rng.gen_range(lo..hi);
                let bw = rng.gen_range(80.0..250.0);
                (c0, c1, bw)
            })
            .collect();
            let mut segment = vec![0.0; vlen];
            // Excitation: harmonic stack with 1/k amplitudes below 4 kHz.
            for (i, s) in segment.iter_mut().enumerate() {
                f0 = (f0 + f0_drift).clamp(80.0, 300.0);
                let mut v = 0.0;
                for (k, ph) in phase.iter_mut().enumerate() {
                    let freq = f0 * (k + 1) as f64;
                    if freq > 4000.0 {
                        break;
                    }
                    *ph += 2.0 * PI * freq / fs;
                    v += ph.sin() / (k + 1) as f64;
                }
                let _ = i;
                *s = v;
            }
            // Drifting formant resonators in series.
            for &(c0, c1, bw) in &formants {
                let mut res = Resonator::new(c0, bw, fs);
                let steps = 8usize;
                let chunk = segment.len().div_ceil(steps);
                for (si, ch) in segment.chunks_mut(chunk).enumerate() {
                    let frac = si as f64 / steps as f64;
                    res = Resonator {
                        z1: res.z1,
                        z2: res.z2,
                        ..Resonator::new(c0 + (c1 - c0) * frac, bw, fs)
                    };
                    for s in ch.iter_mut() {
                        *s = res.tick(*s);
                    }
                }
            }
            let peak = segment.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            let target = rng.gen_range(0.4..0.9);
            if peak > 0.0 {
                for s in segment.iter_mut() {
                    *s *= target / peak;
                }
            }
            raised_cosine_edges(&mut segment, sec(0.01));
            out[pos..pos + vlen].copy_from_slice(&segment);
        }
        pos += vlen;
        if pos >= total {
            break;
        }

        // Optional unvoiced burst.
        if rng.gen_bool(0.5) {
            let ulen = rng.gen_range(sec(0.06)..=sec(0.20)).min(total - pos);
            let mut seg: Vec<f64> = (0..ulen)
                .map(|_| {
                    let g: f64 = rng.sample(StandardNormal);
                    g
                })
                .collect();
            // Mild high tilt, quiet relative to voiced content.
            let mut prev = 0.0;
            for s in seg.iter_mut() {
                let d = *s - 0.7 * prev;
                prev = *s;
                *s = d;
            }
            let peak = seg.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            let target = rng.gen_range(0.08..0.18);
            if peak > 0.0 {
                for s in seg.iter_mut() {
                    *s *= target / peak;
                }
            }
            raised_cosine_edges(&mut seg, sec(0.005));
            out[pos..pos + ulen].copy_from_slice(&seg);
            pos += ulen;
        }
        if pos >= total {
            break;
        }

        // Silence.
        pos += rng.gen_range(sec(0.10)..=sec(0.30)).min(total - pos);
    }

    let peak = out.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if peak > 0.0 {
        for s in out.iter_mut() {
            *s *= 0.5 / peak;
        }
    }
    Waveform::new(out, sample_rate)
}

/// Generate `n` independent quasi-speech sources from one stream.
pub fn generate_toy_sources<R: Rng>(
    n: usize,
    dur_s: f64,
    sample_rate: u32,
    rng: &mut R,
) -> Vec<Waveform> {
    (0..n)
        .map(|_| generate_toy_source(dur_s, sample_rate, rng))
        .collect()
}

// ---------------------------------------------------------------------------
// WAV I/O
// ---------------------------------------------------------------------------

/// Read a WAV file: PCM16 or IEEE float32; the first channel of multichannel
/// files is taken. Returns the waveform and the source channel count.
pub fn read_wav_info(path: &Path) -> Result<(Waveform, u16)> {
    let reader = hound::WavReader::open(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let spec = reader.spec();
    let channels = spec.channels;
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .step_by(channels as usize)
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?,
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .step_by(channels as usize)
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?,
        (fmt, bits) => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("unsupported codec: {bits}-bit {fmt:?}"),
            })
        }
    };
    Ok((Waveform::new(samples, spec.sample_rate), channels))
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    read_wav_info(path).map(|(w, _)| w)
}

/// Write a mono IEEE float32 WAV file.
pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    for &s in &w.samples {
        writer.write_sample(s as f32).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    }
    writer.finalize().map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn dir_name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRow {
    pub utt_id: String,
    pub mixture_path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_snr_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t60_s: Option<f64>,
    pub split: Split,
}

/// Rows of the dataset plus the directory their paths are relative to.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    /// One JSON object per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for row in &self.rows {
            let line = serde_json::to_string(row).expect("manifest row serializes");
            writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base_dir = path
            .parent()
            .map(|p| p.to_path_buf())
            .unwrap_or_else(|| PathBuf::from("."));
        let mut rows = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: ManifestRow = serde_json::from_str(line).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: format!("line {}: {e}", i + 1),
            })?;
            if !seen.insert(row.utt_id.clone()) {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    reason: format!("duplicate utt_id {}", row.utt_id),
                });
            }
            if !base_dir.join(&row.mixture_path).exists() {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    reason: format!("unresolvable mixture path {}", row.mixture_path),
                });
            }
            rows.push(row);
        }
        Ok(Manifest { rows, base_dir })
    }
}

// ---------------------------------------------------------------------------
// Dataset construction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct DatasetCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct DatasetRanges {
    pub room: RoomRanges,
    pub snr_db: (f64, f64),
    pub dur_s: f64,
    pub sample_rate: u32,
}

impl Default for DatasetRanges {
    fn default() -> Self {
        DatasetRanges {
            room: RoomRanges::default(),
            snr_db: SNR_RANGE_DB,
            dur_s: 4.0,
            sample_rate: 16_000,
        }
    }
}

/// Generate sources, rooms, and mixtures for all splits; write WAVs and a
/// manifest under `out_dir/{train,val,test}/{mix,ref}/`.
pub fn build_dataset(
    out_dir: &Path,
    counts: DatasetCounts,
    ranges: &DatasetRanges,
    seed: u64,
) -> Result<Manifest> {
    let mut rows = Vec::new();
    let splits = [
        (Split::Train, counts.train),
        (Split::Val, counts.val),
        (Split::Test, counts.test),
    ];
    for (split_idx, (split, count)) in splits.iter().enumerate() {
        let mix_dir = out_dir.join(split.dir_name()).join("mix");
        let ref_dir = out_dir.join(split.dir_name()).join("ref");
        std::fs::create_dir_all(&mix_dir).map_err(|e| Error::io(&mix_dir, e))?;
        std::fs::create_dir_all(&ref_dir).map_err(|e| Error::io(&ref_dir, e))?;
        for i in 0..*count {
            let stream = (split_idx as u64) << 32 | i as u64;
            let mut rng = ChaCha8Rng::seed_from_u64_stream(seed, stream);
            let source = generate_toy_source(ranges.dur_s, ranges.sample_rate, &mut rng);
            let room = sample_room_spec(&ranges.room, ranges.sample_rate, &mut rng);
            let snr_db = rng.gen_range(ranges.snr_db.0..=ranges.snr_db.1);
            let noise_seed = rng.gen::<u64>();
            let (y, reference, meta) = synthesize_mixture(
                &source,
                &MixtureSpec {
                    snr_db,
                    room,
                    seed: noise_seed,
                },
            )?;
            let utt_id = format!("{}_{i:04}", split.dir_name());
            let mix_rel = format!("{}/mix/{utt_id}.wav", split.dir_name());
            let ref_rel = format!("{}/ref/{utt_id}.wav", split.dir_name());
            write_wav(&out_dir.join(&mix_rel), &y)?;
            write_wav(&out_dir.join(&ref_rel), &reference)?;
            rows.push(ManifestRow {
                utt_id,
                mixture_path: mix_rel,
                reference_path: Some(ref_rel),
                input_snr_db: Some(meta.input_snr_db),
                t60_s: Some(meta.t60_s),
                split: *split,
            });
        }
    }
    let manifest = Manifest {
        rows,
        base_dir: out_dir.to_path_buf(),
    };
    manifest.save(&out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rir::RoomRanges;
    use rand::SeedableRng;

    fn frame_silence_fraction(w: &Waveform) -> f64 {
        let frame = (0.032 * w.sample_rate as f64) as usize;
        let hop = frame / 2;
        let energies: Vec<f64> = w
            .samples
            .windows(frame)
            .step_by(hop)
            .map(|f| f.iter().map(|x| x * x).sum())
            .collect();
        let max = energies.iter().cloned().fold(f64::MIN, f64::max);
        let silent = energies
            .iter()
            .filter(|&&e| 10.0 * (e / max).log10() < -40.0)
            .count();
        silent as f64 / energies.len() as f64
    }

    #[test]
    fn sources_are_deterministic_per_seed() {
        let a = generate_toy_source(1.0, 16_000, &mut ChaCha8Rng::seed_from_u64(1));
        let b = generate_toy_source(1.0, 16_000, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn sources_have_plausible_silence_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for w in generate_toy_sources(5, 4.0, 16_000, &mut rng) {
            let frac = frame_silence_fraction(&w);
            assert!((0.15..=0.5).contains(&frac), "silence fraction {frac}");
            assert!((w.peak() - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn sources_are_low_pass_tilted() {
        // Band-energy measurement over a generated batch via plain DFT sums.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch = generate_toy_sources(4, 2.0, 16_000, &mut rng);
        let mut low = 0.0;
        let mut high = 0.0;
        for w in &batch {
            let spec = crate::signal::stft(&w, &crate::signal::StftConfig::default_16k()).unwrap();
            let bin_hz = 16_000.0 / 512.0;
            for ti in 0..spec.t {
                for (k, c) in spec.frame(ti).iter().enumerate() {
                    let f = k as f64 * bin_hz;
                    if f < 1000.0 {
                        low += c.norm_sqr();
                    } else if f > 4000.0 {
                        high += c.norm_sqr();
                    }
                }
            }
        }
        assert!(low > high, "low {low} high {high}");
    }

    fn small_room(seed: u64) -> RoomSpec {
        let ranges = RoomRanges {
            t60_s: (0.3, 0.3),
            ..RoomRanges::default()
        };
        sample_room_spec(&ranges, 16_000, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn mixture_snr_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = generate_toy_source(1.0, 16_000, &mut rng);
        let spec = MixtureSpec {
            snr_db: 25.0,
            room: small_room(5),
            seed: 6,
        };
        let (y, _, meta) = synthesize_mixture(&x, &spec).unwrap();
        // Reconstruct the reverberant part and measure the realized SNR.
        let reverberant: Vec<f64> = y
            .samples
            .iter()
            .zip(&meta.noise_prenorm.samples)
            .map(|(yv, nv)| yv / meta.norm_gain - nv)
            .collect();
        let rev_e: f64 = reverberant.iter().map(|v| v * v).sum();
        let noise_e = meta.noise_prenorm.energy();
        let snr = 10.0 * (rev_e / noise_e).log10();
        assert!((snr - 25.0).abs() < 1e-6, "snr {snr}");
    }

    #[test]
    fn mixture_decomposes_before_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = generate_toy_source(1.0, 16_000, &mut rng);
        let room = small_room(8);
        let spec = MixtureSpec {
            snr_db: 10.0,
            room,
            seed: 9,
        };
        let (y, _, meta) = synthesize_mixture(&x, &spec).unwrap();
        let (h_sim, _) = simulate_room(&room).unwrap();
        let reverberant = convolve_trunc_first(&x, &h_sim.taps).unwrap();
        for i in 0..y.len() {
            let lhs = y.samples[i] / meta.norm_gain - meta.noise_prenorm.samples[i];
            assert!((lhs - reverberant.samples[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn anechoic_room_mixture_is_reference_plus_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = generate_toy_source(1.0, 16_000, &mut rng);
        let mut room = small_room(11);
        room.t60_s = 0.161 * room.volume() / room.surface();
        let spec = MixtureSpec {
            snr_db: 20.0,
            room,
            seed: 12,
        };
        let (y, reference, meta) = synthesize_mixture(&x, &spec).unwrap();
        for i in 0..y.len() {
            let expect = reference.samples[i] + meta.noise_prenorm.samples[i] * meta.norm_gain;
            assert!((y.samples[i] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn silent_source_is_rejected() {
        let spec = MixtureSpec {
            snr_db: 10.0,
            room: small_room(13),
            seed: 14,
        };
        assert!(synthesize_mixture(&Waveform::zeros(1000, 16_000), &spec).is_err());
    }

    #[test]
    fn wav_float_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        // f32-representable samples round-trip exactly
        let w = Waveform::new(
            (0..1000).map(|_| rng.gen_range(-1.0f32..1.0) as f64).collect(),
            16_000,
        );
        write_wav(&p, &w).unwrap();
        let r = read_wav(&p).unwrap();
        assert_eq!(w.samples, r.samples);
        assert_eq!(r.sample_rate, 16_000);
    }

    #[test]
    fn wav_pcm16_round_trip_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let samples: Vec<f64> = (0..500).map(|_| rng.gen_range(-0.99..0.99)).collect();
        let mut writer = hound::WavWriter::create(&p, spec).unwrap();
        for &s in &samples {
            writer.write_sample((s * 32768.0).round() as i16).unwrap();
        }
        writer.finalize().unwrap();
        let r = read_wav(&p).unwrap();
        for (a, b) in samples.iter().zip(&r.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn multichannel_takes_first_channel() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mc.wav");
        let spec = hound::WavSpec {
            channels: 8,
            sample_rate: 16_000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut writer = hound::WavWriter::create(&p, spec).unwrap();
        for frame in 0..100 {
            for ch in 0..8 {
                writer
                    .write_sample(if ch == 0 { frame as f32 / 100.0 } else { -1.0f32 })
                    .unwrap();
            }
        }
        writer.finalize().unwrap();
        let (w, channels) = read_wav_info(&p).unwrap();
        assert_eq!(channels, 8);
        assert_eq!(w.len(), 100);
        assert!((w.samples[50] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn malformed_wav_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.wav");
        std::fs::write(&p, b"definitely not a riff file").unwrap();
        assert!(matches!(read_wav(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn build_dataset_writes_unique_rows_and_reproduces() {
        let dir = tempfile::tempdir().unwrap();
        let counts = DatasetCounts {
            train: 3,
            val: 1,
            test: 2,
        };
        let ranges = DatasetRanges {
            room: RoomRanges {
                t60_s: (0.2, 0.4),
                ..RoomRanges::default()
            },
            dur_s: 1.0,
            ..DatasetRanges::default()
        };
        let out_a = dir.path().join("a");
        let manifest = build_dataset(&out_a, counts, &ranges, 7).unwrap();
        assert_eq!(manifest.rows.len(), 6);
        let ids: std::collections::HashSet<_> =
            manifest.rows.iter().map(|r| r.utt_id.clone()).collect();
        assert_eq!(ids.len(), 6);
        for row in &manifest.rows {
            let snr = row.input_snr_db.unwrap();
            assert!((5.0..=25.0).contains(&snr));
            assert!(manifest.resolve(&row.mixture_path).exists());
        }

        let out_b = dir.path().join("b");
        build_dataset(&out_b, counts, &ranges, 7).unwrap();
        for row in &manifest.rows {
            let a = std::fs::read(out_a.join(&row.mixture_path)).unwrap();
            let b = std::fs::read(out_b.join(&row.mixture_path)).unwrap();
            assert_eq!(a, b, "wav bytes differ for {}", row.utt_id);
        }

        // Manifest round trip preserves all fields.
        let loaded = Manifest::load(&out_a.join("manifest.jsonl")).unwrap();
        assert_eq!(loaded.rows.len(), manifest.rows.len());
        for (a, b) in loaded.rows.iter().zip(&manifest.rows) {
            assert_eq!(serde_json::to_string(a).unwrap(), serde_json::to_string(b).unwrap());
        }
    }
}
