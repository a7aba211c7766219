//! Training orchestration for both stages: per-step augmentation sampling,
//! forward/backward, optimizer and EMA stepping, checkpointing, and loss
//! logging.
//!
//! Every stochastic decision draws from its own counter-derived RNG stream
//! (seed, step, batch item, decision slot), so toggling one augmentation never
//! shifts the samples another one sees. Runs with the same seed, config, and
//! manifest are bit-reproducible.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::checkpoint::Checkpoint;
use crate::data::{read_wav, Manifest, Split};
use crate::error::{Error, Result};
use crate::loss::{rec_loss, stage1_loss, stage2_loss, LossReport, DEFAULT_AUX_WEIGHT};
use crate::model::{
    adam_step, backward, ema_update, forward, forward_no_tape, init_params, GradSet, ModelConfig,
    OptimState, StepOutcome, DEFAULT_EMA_MOMENTUM,
};
use crate::rir::{
    relative_rir, sample_room_spec, sample_statistical_rtf, simulate_room, RoomRanges,
    StatisticalRtfParams,
};
use crate::signal::{istft, istft_adjoint, signal_std, stft, StftConfig, Waveform};

const SLOT_CROP: u64 = 0;
const SLOT_RIR: u64 = 1;
const SLOT_NOISE_TEACHER: u64 = 2;
const SLOT_NOISE_STUDENT: u64 = 3;
const SLOT_INIT: u64 = 4;

fn substream(seed: u64, step: u64, item: u64, slot: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step * 1024 + item * 8 + slot);
    rng
}

#[derive(Debug, Clone)]
pub struct Stage1Config {
    pub t60_range_s: (f64, f64),
    pub drr_range_db: (f64, f64),
    pub batch_size: usize,
    pub crop_len_s: f64,
    pub steps: u64,
    pub lr: f64,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub stft: StftConfig,
    pub model: ModelConfig,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config {
            t60_range_s: (0.5, 1.2),
            drr_range_db: (-16.0, -6.0),
            batch_size: 2,
            crop_len_s: 4.0,
            steps: 5000,
            lr: 1e-3,
            seed: 0,
            checkpoint_every: 500,
            stft: StftConfig::default_16k(),
            model: ModelConfig::default(),
        }
    }
}

impl Stage1Config {
    pub fn validate(&self) -> Result<()> {
        if self.t60_range_s.0 > self.t60_range_s.1 || self.drr_range_db.0 > self.drr_range_db.1 {
            return Err(Error::config("stage 1 sampling ranges must be ordered"));
        }
        if self.steps < 1 || self.batch_size < 1 {
            return Err(Error::config("need steps >= 1 and batch_size >= 1"));
        }
        if !(self.crop_len_s > 0.0) || !(self.lr > 0.0) {
            return Err(Error::config("crop_len_s and lr must be positive"));
        }
        self.model.validate()?;
        if self.model.freq_bins != self.stft.freq_bins() {
            return Err(Error::config(format!(
                "model expects {} bins but the analysis yields {}",
                self.model.freq_bins,
                self.stft.freq_bins()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Stage2Config {
    pub room: RoomRanges,
    pub aux_weight: f64,
    pub ema_momentum: f64,
    /// Noise level as a multiple of the per-crop standard deviation of the
    /// observation; used for both the teacher and student perturbations.
    pub noise_factor: f64,
    /// Ablation switch: draw and add the teacher/student noise.
    pub inject_noise: bool,
    /// Ablation switch: include the auxiliary reference term.
    pub use_aux: bool,
    pub batch_size: usize,
    pub crop_len_s: f64,
    pub steps: u64,
    pub lr: f64,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub stft: StftConfig,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Stage2Config {
            room: RoomRanges::default(),
            aux_weight: DEFAULT_AUX_WEIGHT,
            ema_momentum: DEFAULT_EMA_MOMENTUM,
            noise_factor: 0.02,
            inject_noise: true,
            use_aux: true,
            batch_size: 2,
            crop_len_s: 4.0,
            steps: 5000,
            lr: 1e-3,
            seed: 0,
            checkpoint_every: 500,
            stft: StftConfig::default_16k(),
        }
    }
}

impl Stage2Config {
    pub fn validate(&self) -> Result<()> {
        let r = &self.room;
        for (lo, hi) in [r.length_m, r.width_m, r.height_m, r.t60_s] {
            if lo > hi {
                return Err(Error::config("stage 2 room ranges must be ordered"));
            }
        }
        if !(0.0..1.0).contains(&self.ema_momentum) {
            return Err(Error::config("EMA momentum must be in [0, 1)"));
        }
        if !(self.aux_weight > 0.0) {
            return Err(Error::config("aux weight must be positive"));
        }
        if self.noise_factor < 0.0 {
            return Err(Error::config("noise_factor must be >= 0"));
        }
        if self.steps < 1 || self.batch_size < 1 {
            return Err(Error::config("need steps >= 1 and batch_size >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainStats {
    pub steps_run: u64,
    pub skipped_nonfinite: u64,
    pub padded_crops: u64,
    pub degenerate_rooms: u64,
    /// T60 of every room accepted during stage 2, in sampling order.
    pub room_t60s: Vec<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub stats: TrainStats,
}

struct LoadedSet {
    mixtures: Vec<Waveform>,
    sample_rate: u32,
}

fn load_training_set(manifest: &Manifest) -> Result<LoadedSet> {
    let rows: Vec<_> = manifest.split(Split::Train).collect();
    if rows.is_empty() {
        return Err(Error::config("manifest has no training mixtures"));
    }
    let mut mixtures = Vec::with_capacity(rows.len());
    for row in rows {
        let w = read_wav(&manifest.resolve(&row.mixture_path))?;
        if !w.is_finite() || w.is_empty() {
            return Err(Error::input(format!("bad mixture {}", row.utt_id)));
        }
        mixtures.push(w);
    }
    let sample_rate = mixtures[0].sample_rate;
    if mixtures.iter().any(|w| w.sample_rate != sample_rate) {
        return Err(Error::config("mixtures have inconsistent sample rates"));
    }
    Ok(LoadedSet {
        mixtures,
        sample_rate,
    })
}

fn crop_utterance(
    set: &LoadedSet,
    crop_len: usize,
    rng: &mut ChaCha8Rng,
    stats: &mut TrainStats,
) -> Waveform {
    let idx = rng.gen_range(0..set.mixtures.len());
    let utt = &set.mixtures[idx];
    if utt.len() >= crop_len {
        let start = rng.gen_range(0..=utt.len() - crop_len);
        Waveform::new(utt.samples[start..start + crop_len].to_vec(), set.sample_rate)
    } else {
        // Shorter than the crop window: zero-pad the tail.
        stats.padded_crops += 1;
        let mut samples = utt.samples.clone();
        samples.resize(crop_len, 0.0);
        Waveform::new(samples, set.sample_rate)
    }
}

struct LossLog {
    file: std::fs::File,
}

impl LossLog {
    fn create(path: &Path, stage2: bool) -> Result<LossLog> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let header = if stage2 {
            "step,loss_total,loss_sisdr,loss_mag,loss_distill,loss_aux"
        } else {
            "step,loss_total,loss_sisdr,loss_mag"
        };
        writeln!(file, "{header}").map_err(|e| Error::io(path, e))?;
        Ok(LossLog { file })
    }

    fn log(&mut self, step: u64, report: &LossReport, stage2: bool) {
        let line = if stage2 {
            format!(
                "{step},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                report.total,
                report.si_sdr_se,
                report.mag,
                report.distill.unwrap_or(report.total),
                report.aux.unwrap_or(0.0),
            )
        } else {
            format!(
                "{step},{:.9e},{:.9e},{:.9e}",
                report.total, report.si_sdr_se, report.mag
            )
        };
        let _ = writeln!(self.file, "{line}");
    }
}

fn mean_report(reports: &[LossReport]) -> LossReport {
    let n = reports.len() as f64;
    let sum_opt = |f: fn(&LossReport) -> Option<f64>| -> Option<f64> {
        if reports.iter().all(|r| f(r).is_some()) {
            Some(reports.iter().map(|r| f(r).unwrap()).sum::<f64>() / n)
        } else {
            None
        }
    };
    LossReport {
        total: reports.iter().map(|r| r.total).sum::<f64>() / n,
        si_sdr_se: reports.iter().map(|r| r.si_sdr_se).sum::<f64>() / n,
        mag: reports.iter().map(|r| r.mag).sum::<f64>() / n,
        distill: sum_opt(|r| r.distill),
        aux: sum_opt(|r| r.aux),
    }
}

fn checkpoint_path(out_dir: &Path, step: u64, last: bool) -> PathBuf {
    if last {
        out_dir.join("ckpt_final.ckpt")
    } else {
        out_dir.join(format!("ckpt_step{step:06}.ckpt"))
    }
}

/// Stage one: re-reverberate each crop with a freshly sampled statistical RTF
/// and train the network to reconstruct the original crop.
pub fn train_stage1(
    manifest: &Manifest,
    cfg: &Stage1Config,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let set = load_training_set(manifest)?;
    let crop_len = (cfg.crop_len_s * set.sample_rate as f64).round() as usize;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut log = LossLog::create(&out_dir.join("train_log.csv"), false)?;

    let mut params = init_params(&cfg.model, &mut substream(cfg.seed, 0, 0, SLOT_INIT))?;
    let mut opt = OptimState::new(&params, cfg.lr);
    let mut stats = TrainStats::default();

    let mut final_path = checkpoint_path(out_dir, 0, true);
    for step in 0..cfg.steps {
        let mut grads = GradSet::zeros_like(&params);
        let mut reports = Vec::with_capacity(cfg.batch_size);
        for item in 0..cfg.batch_size as u64 {
            let mut crop_rng = substream(cfg.seed, step, item, SLOT_CROP);
            let target = crop_utterance(&set, crop_len, &mut crop_rng, &mut stats);

            let mut rir_rng = substream(cfg.seed, step, item, SLOT_RIR);
            let rtf = sample_statistical_rtf(
                &StatisticalRtfParams {
                    t60_s: rir_rng.gen_range(cfg.t60_range_s.0..=cfg.t60_range_s.1),
                    drr_db: rir_rng.gen_range(cfg.drr_range_db.0..=cfg.drr_range_db.1),
                    sample_rate: set.sample_rate,
                },
                &mut rir_rng,
            )?;
            let reverberated = crate::signal::convolve_trunc_first(&target, &rtf.taps)?;

            let input_spec = stft(&reverberated, &cfg.stft)?;
            let (est_spec, tape) = forward(&params, &input_spec)?;
            let est = istft(&est_spec, crop_len)?;
            let (report, lgrad) = stage1_loss(&est, &target, &cfg.stft)?;
            let cot = istft_adjoint(
                &lgrad.d_estimate,
                est_spec.t,
                &cfg.stft,
                est_spec.origin_len,
                set.sample_rate,
            );
            let g = backward(&params, &tape, &cot)?;
            grads.add_scaled(&g, 1.0 / cfg.batch_size as f64);
            reports.push(report);
        }
        let report = mean_report(&reports);
        log.log(step, &report, false);
        if adam_step(&mut params, &grads, &mut opt) == StepOutcome::SkippedNonFinite {
            stats.skipped_nonfinite += 1;
        }
        stats.steps_run += 1;

        let last = step + 1 == cfg.steps;
        if last || (step + 1) % cfg.checkpoint_every == 0 {
            let ck = Checkpoint {
                stage: 1,
                step: params.step_count,
                model: cfg.model,
                stft: cfg.stft.clone(),
                sample_rate: set.sample_rate,
                student: params.clone(),
                teacher: None,
                opt: opt.clone(),
            };
            let path = checkpoint_path(out_dir, step + 1, last);
            ck.save(&path)?;
            if last {
                final_path = path;
            }
        }
    }
    Ok(TrainOutcome {
        final_checkpoint: final_path,
        stats,
    })
}

struct Stage2Item {
    target: Waveform,
    teacher_input: Waveform,
    student_input: Waveform,
}

/// Build the per-item augmented pair: the teacher sees the crop plus light
/// noise, the student sees it re-reverberated through a simulated relative
/// response plus independent noise.
fn stage2_augment(
    set: &LoadedSet,
    cfg: &Stage2Config,
    crop_len: usize,
    step: u64,
    item: u64,
    stats: &mut TrainStats,
) -> Result<Stage2Item> {
    let mut crop_rng = substream(cfg.seed, step, item, SLOT_CROP);
    let target = crop_utterance(set, crop_len, &mut crop_rng, stats);

    let mut rir_rng = substream(cfg.seed, step, item, SLOT_RIR);
    let h_rel = loop {
        let room = sample_room_spec(&cfg.room, set.sample_rate, &mut rir_rng);
        let (h_sim, h_dir) = simulate_room(&room)?;
        let h_rel = relative_rir(&h_sim, &h_dir)?;
        if !h_rel.meta.numeric_warning {
            stats.room_t60s.push(room.t60_s);
            break h_rel;
        }
        stats.degenerate_rooms += 1;
    };
    let reverberated = crate::signal::convolve_trunc_first(&target, &h_rel.taps)?;

    let sigma = cfg.noise_factor * signal_std(&target);
    let mut teacher_input = target.clone();
    let mut student_input = reverberated;
    if cfg.inject_noise && sigma > 0.0 {
        let mut t_rng = substream(cfg.seed, step, item, SLOT_NOISE_TEACHER);
        for v in teacher_input.samples.iter_mut() {
            let g: f64 = t_rng.sample(StandardNormal);
            *v += sigma * g;
        }
        let mut s_rng = substream(cfg.seed, step, item, SLOT_NOISE_STUDENT);
        for v in student_input.samples.iter_mut() {
            let g: f64 = s_rng.sample(StandardNormal);
            *v += sigma * g;
        }
    }
    Ok(Stage2Item {
        target,
        teacher_input,
        student_input,
    })
}

/// Stage two: online self-distillation from an EMA teacher on asymmetric
/// inputs, anchored by the auxiliary reconstruction of the observed mixture.
pub fn train_stage2(
    manifest: &Manifest,
    cfg: &Stage2Config,
    init_checkpoint: &Path,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let init = Checkpoint::load(init_checkpoint)?;
    let set = load_training_set(manifest)?;
    if set.sample_rate != init.sample_rate {
        return Err(Error::config(format!(
            "checkpoint was trained at {} Hz but the manifest is {} Hz",
            init.sample_rate, set.sample_rate
        )));
    }
    let crop_len = (cfg.crop_len_s * set.sample_rate as f64).round() as usize;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut log = LossLog::create(&out_dir.join("train_log.csv"), true)?;

    let mut student = init.student.clone();
    student.step_count = 0;
    let mut teacher = init.teacher.clone().unwrap_or_else(|| student.clone());
    teacher.step_count = 0;
    let mut opt = OptimState::new(&student, cfg.lr);
    let mut stats = TrainStats::default();

    let mut final_path = checkpoint_path(out_dir, 0, true);
    for step in 0..cfg.steps {
        let mut grads = GradSet::zeros_like(&student);
        let mut reports = Vec::with_capacity(cfg.batch_size);
        for item in 0..cfg.batch_size as u64 {
            let aug = stage2_augment(&set, cfg, crop_len, step, item, &mut stats)?;

            // Teacher target, computed without gradient tracking.
            let teacher_spec = stft(&aug.teacher_input, &cfg.stft)?;
            let target_est = forward_no_tape(&teacher, &teacher_spec)?;
            let teacher_target = istft(&target_est, crop_len)?;

            let student_spec = stft(&aug.student_input, &cfg.stft)?;
            let (est_spec, tape) = forward(&student, &student_spec)?;
            let est = istft(&est_spec, crop_len)?;

            let (report, lgrad) = if cfg.use_aux {
                stage2_loss(&est, &teacher_target, &aug.target, cfg.aux_weight, &cfg.stft)?
            } else {
                let (r, g) = rec_loss(&est, &teacher_target, &cfg.stft)?;
                (
                    LossReport {
                        distill: Some(r.total),
                        aux: Some(0.0),
                        ..r
                    },
                    g,
                )
            };
            let cot = istft_adjoint(
                &lgrad.d_estimate,
                est_spec.t,
                &cfg.stft,
                est_spec.origin_len,
                set.sample_rate,
            );
            let g = backward(&student, &tape, &cot)?;
            grads.add_scaled(&g, 1.0 / cfg.batch_size as f64);
            reports.push(report);
        }
        let report = mean_report(&reports);
        log.log(step, &report, true);
        if adam_step(&mut student, &grads, &mut opt) == StepOutcome::SkippedNonFinite {
            stats.skipped_nonfinite += 1;
        }
        ema_update(&mut teacher, &student, cfg.ema_momentum)?;
        stats.steps_run += 1;

        let last = step + 1 == cfg.steps;
        if last || (step + 1) % cfg.checkpoint_every == 0 {
            let ck = Checkpoint {
                stage: 2,
                step: student.step_count,
                model: student.config,
                stft: cfg.stft.clone(),
                sample_rate: set.sample_rate,
                student: student.clone(),
                teacher: Some(teacher.clone()),
                opt: opt.clone(),
            };
            let path = checkpoint_path(out_dir, step + 1, last);
            ck.save(&path)?;
            if last {
                final_path = path;
            }
        }
    }
    Ok(TrainOutcome {
        final_checkpoint: final_path,
        stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Net {
    Student,
    Teacher,
}

impl std::str::FromStr for Net {
    type Err = Error;
    fn from_str(s: &str) -> Result<Net> {
        match s {
            "student" => Ok(Net::Student),
            "teacher" => Ok(Net::Teacher),
            other => Err(Error::input(format!(
                "unknown net {other:?}, expected student or teacher"
            ))),
        }
    }
}

/// Run the checkpointed network on a full utterance; the output has exactly
/// the input length.
pub fn enhance(ckpt: &Checkpoint, y: &Waveform, which: Net) -> Result<Waveform> {
    if y.sample_rate != ckpt.sample_rate {
        return Err(Error::input(format!(
            "sample rate mismatch: input {} Hz, checkpoint {} Hz",
            y.sample_rate, ckpt.sample_rate
        )));
    }
    let params = match which {
        Net::Student => &ckpt.student,
        Net::Teacher => ckpt
            .teacher
            .as_ref()
            .ok_or_else(|| Error::input("checkpoint carries no teacher parameters"))?,
    };
    let spec = stft(y, &ckpt.stft)?;
    let est = forward_no_tape(params, &spec)?;
    istft(&est, y.len())
}
