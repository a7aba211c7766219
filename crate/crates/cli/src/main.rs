//! Operator entry point: dataset synthesis, RIR inspection, two-stage
//! training, enhancement, evaluation, and spectrogram export.
//!
//! Exit codes: 0 success, 1 usage error, 2 configuration error, 3 runtime or
//! numeric failure.

mod config;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use config::RunConfig;
use dereverb_core::checkpoint::Checkpoint;
use dereverb_core::data::{
    build_dataset, read_wav, read_wav_info, write_wav, DatasetCounts, DatasetRanges, Manifest,
};
use dereverb_core::metrics::{evaluate_set, EvalOptions, EvalSummary};
use dereverb_core::rir::{
    measure_drr, sample_room_spec, sample_statistical_rtf, simulate_room, RoomRanges,
    StatisticalRtfParams,
};
use dereverb_core::signal::{stft, StftConfig};
use dereverb_core::train::{enhance, train_stage1, train_stage2, Net, TrainOutcome};

#[derive(Parser)]
#[command(
    name = "dereverb",
    about = "Unsupervised monaural dereverberation at desk scale",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum RirMode {
    Statistical,
    Room,
}

#[derive(Clone, Copy, ValueEnum)]
enum NetArg {
    Student,
    Teacher,
}

impl From<NetArg> for Net {
    fn from(v: NetArg) -> Net {
        match v {
            NetArg::Student => Net::Student,
            NetArg::Teacher => Net::Teacher,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a toy dataset of noisy-reverberant mixtures with direct-path
    /// references and a manifest.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        train: usize,
        #[arg(long)]
        val: usize,
        #[arg(long)]
        test: usize,
        #[arg(long)]
        seed: u64,
        /// Utterance duration in seconds.
        #[arg(long, default_value_t = 4.0)]
        dur_s: f64,
        #[arg(long, default_value_t = 16_000)]
        sample_rate: u32,
    },
    /// Export a synthetic or simulated room impulse response as WAV.
    Rir {
        #[arg(long, value_enum)]
        mode: RirMode,
        #[arg(long)]
        t60: f64,
        /// Direct-to-reverberant ratio in dB (statistical mode only).
        #[arg(long, allow_negative_numbers = true)]
        drr: Option<f64>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16_000)]
        sample_rate: u32,
    },
    /// Train stage 1 (reverberant-target) or stage 2 (self-distillation).
    Train {
        #[arg(long)]
        stage: u8,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Initial checkpoint (required for stage 2).
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a trained network over one WAV file.
    Enhance {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "student")]
        net: NetArg,
    },
    /// Evaluate a checkpoint over the test split of a manifest.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Also aggregate per input-SNR bucket.
        #[arg(long)]
        by_snr: bool,
        #[arg(long, value_enum, default_value = "student")]
        net: NetArg,
    },
    /// Export a log-magnitude spectrogram as a plain-text PGM image.
    Spectrogram {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Clipping floor in dB relative to the peak magnitude.
        #[arg(long, default_value_t = -80.0, allow_negative_numbers = true)]
        db_floor: f64,
    },
}

/// Marker attached to configuration problems so they map to exit code 2.
#[derive(Debug)]
struct ConfigProblem;

impl fmt::Display for ConfigProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error")
    }
}

impl std::error::Error for ConfigProblem {}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigProblem>().is_some() {
        return 2;
    }
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<dereverb_core::Error>() {
            return match core {
                dereverb_core::Error::Config(_) => 2,
                _ => 3,
            };
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes, not usage errors.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::SynthData {
            out,
            train,
            val,
            test,
            seed,
            dur_s,
            sample_rate,
        } => cmd_synth_data(&out, train, val, test, seed, dur_s, sample_rate),
        Command::Rir {
            mode,
            t60,
            drr,
            seed,
            out,
            sample_rate,
        } => cmd_rir(mode, t60, drr, seed, &out, sample_rate),
        Command::Train {
            stage,
            config,
            manifest,
            init,
            out,
        } => cmd_train(stage, &config, &manifest, init.as_deref(), &out),
        Command::Enhance {
            ckpt,
            input,
            out,
            net,
        } => cmd_enhance(&ckpt, &input, &out, net.into()),
        Command::Eval {
            ckpt,
            manifest,
            report,
            by_snr,
            net,
        } => cmd_eval(&ckpt, &manifest, &report, by_snr, net.into()),
        Command::Spectrogram {
            input,
            out,
            db_floor,
        } => cmd_spectrogram(&input, &out, db_floor),
    }
}

fn cmd_synth_data(
    out: &Path,
    train: usize,
    val: usize,
    test: usize,
    seed: u64,
    dur_s: f64,
    sample_rate: u32,
) -> Result<()> {
    let ranges = DatasetRanges {
        dur_s,
        sample_rate,
        ..DatasetRanges::default()
    };
    let counts = DatasetCounts { train, val, test };
    let manifest = build_dataset(out, counts, &ranges, seed)?;
    let echo = format!(
        "command = synth-data\nseed = {seed}\ntrain = {train}\nval = {val}\ntest = {test}\n\
         dur_s = {dur_s}\nsample_rate = {sample_rate}\n"
    );
    std::fs::write(out.join("generation_config.txt"), echo)
        .with_context(|| "writing generation_config.txt")?;
    println!(
        "wrote {} mixtures and manifest to {}",
        manifest.rows.len(),
        out.display()
    );
    Ok(())
}

fn cmd_rir(
    mode: RirMode,
    t60: f64,
    drr: Option<f64>,
    seed: u64,
    out: &Path,
    sample_rate: u32,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match mode {
        RirMode::Statistical => {
            let drr = drr
                .ok_or_else(|| anyhow!("--drr is required in statistical mode"))
                .context(ConfigProblem)?;
            let rir = sample_statistical_rtf(
                &StatisticalRtfParams {
                    t60_s: t60,
                    drr_db: drr,
                    sample_rate,
                },
                &mut rng,
            )?;
            write_wav(out, &rir.taps)?;
            let measured = measure_drr(&rir, 1)?;
            println!(
                "statistical rtf: t60 {t60} s, {} taps, measured drr {measured:.6} dB -> {}",
                rir.len(),
                out.display()
            );
        }
        RirMode::Room => {
            let ranges = RoomRanges {
                t60_s: (t60, t60),
                ..RoomRanges::default()
            };
            let spec = sample_room_spec(&ranges, sample_rate, &mut rng);
            let (h_sim, _) = simulate_room(&spec)?;
            write_wav(out, &h_sim.taps)?;
            println!(
                "simulated room {:.2}x{:.2}x{:.2} m, src-mic {:.2} m, t60 {t60} s, {} taps -> {}",
                spec.length_m,
                spec.width_m,
                spec.height_m,
                spec.src_mic_distance(),
                h_sim.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn cmd_train(
    stage: u8,
    config_path: &Path,
    manifest_path: &Path,
    init: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let cfg = RunConfig::parse_file(config_path).context(ConfigProblem)?;
    let manifest = Manifest::load(manifest_path)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("effective_config.txt"), cfg.to_config_text())
        .context("writing effective_config.txt")?;

    let outcome: TrainOutcome = match stage {
        1 => {
            let s1 = cfg.stage1().context(ConfigProblem)?;
            train_stage1(&manifest, &s1, out)?
        }
        2 => {
            let init = init
                .ok_or_else(|| anyhow!("--init checkpoint is required for stage 2"))
                .context(ConfigProblem)?;
            let s2 = cfg.stage2().context(ConfigProblem)?;
            train_stage2(&manifest, &s2, init, out)?
        }
        other => {
            return Err(anyhow!("stage must be 1 or 2, got {other}")).context(ConfigProblem)
        }
    };
    let stats = &outcome.stats;
    println!(
        "stage {stage} done: {} steps, {} skipped, {} padded crops, {} degenerate rooms",
        stats.steps_run, stats.skipped_nonfinite, stats.padded_crops, stats.degenerate_rooms
    );
    println!("final checkpoint: {}", outcome.final_checkpoint.display());
    Ok(())
}

fn cmd_enhance(ckpt: &Path, input: &Path, out: &Path, net: Net) -> Result<()> {
    let ck = Checkpoint::load(ckpt)?;
    let (wave, channels) = read_wav_info(input)?;
    if channels > 1 {
        eprintln!("note: {} channels in {}, using the first", channels, input.display());
    }
    let enhanced = enhance(&ck, &wave, net)?;
    write_wav(out, &enhanced)?;
    println!("enhanced {} -> {}", input.display(), out.display());
    Ok(())
}

fn bucket_label(lo: f64, hi: f64, inclusive: bool) -> String {
    format!("[{lo:.0},{hi:.0}{}", if inclusive { "]" } else { ")" })
}

fn summary_json(summary: &EvalSummary) -> String {
    let mut root = serde_json::Map::new();
    root.insert("n".into(), summary.n.into());
    root.insert("mean_si_sdr_db".into(), summary.mean_si_sdr_db.into());
    root.insert("mean_estoi".into(), summary.mean_estoi.into());
    if let Some(buckets) = &summary.buckets {
        let arr: Vec<serde_json::Value> = buckets
            .iter()
            .map(|b| {
                let mut m = serde_json::Map::new();
                m.insert(
                    "range_db".into(),
                    bucket_label(b.lo_db, b.hi_db, b.hi_inclusive).into(),
                );
                m.insert("n".into(), b.n.into());
                m.insert("mean_si_sdr_db".into(), b.mean_si_sdr_db.into());
                m.insert("mean_estoi".into(), b.mean_estoi.into());
                serde_json::Value::Object(m)
            })
            .collect();
        root.insert("buckets".into(), arr.into());
    }
    if !summary.skipped.is_empty() {
        root.insert(
            "skipped".into(),
            summary
                .skipped
                .iter()
                .map(|s| serde_json::Value::from(s.as_str()))
                .collect::<Vec<_>>()
                .into(),
        );
    }
    serde_json::to_string_pretty(&serde_json::Value::Object(root)).expect("summary serializes")
}

fn cmd_eval(ckpt: &Path, manifest_path: &Path, report: &Path, by_snr: bool, net: Net) -> Result<()> {
    let ck = Checkpoint::load(ckpt)?;
    let manifest = Manifest::load(manifest_path)?;
    let (records, summary) = evaluate_set(
        &ck,
        &manifest,
        &EvalOptions {
            by_snr_buckets: by_snr,
            which_net: net,
        },
    )?;

    let mut file = std::fs::File::create(report)
        .with_context(|| format!("creating report {}", report.display()))?;
    writeln!(file, "utt_id,si_sdr_db,estoi,input_snr_db,net")?;
    for r in &records {
        let snr = r
            .input_snr_db
            .map(|v| format!("{v:.6}"))
            .unwrap_or_default();
        writeln!(
            file,
            "{},{:.6},{:.6},{},{}",
            r.utt_id, r.si_sdr_db, r.estoi, snr, r.net
        )?;
    }
    println!("{}", summary_json(&summary));
    if let Some(warning) = &summary.warning {
        eprintln!("warning: {warning}");
    }
    if !summary.skipped.is_empty() {
        bail!(
            "partial evaluation: {} utterances skipped ({})",
            summary.skipped.len(),
            summary.skipped.join(", ")
        );
    }
    Ok(())
}

fn cmd_spectrogram(input: &Path, out: &Path, db_floor: f64) -> Result<()> {
    if db_floor >= 0.0 {
        return Err(anyhow!("--db-floor must be negative, got {db_floor}")).context(ConfigProblem);
    }
    let wave = read_wav(input)?;
    let cfg = StftConfig::new(512, 128, 512)?;
    let spec = stft(&wave, &cfg)?;
    let peak = spec
        .frames
        .iter()
        .map(|c| c.norm())
        .fold(f64::MIN_POSITIVE, f64::max);

    // Plain PGM: one row per frequency bin, highest frequency on top.
    let mut text = String::new();
    text.push_str(&format!("P2\n{} {}\n255\n", spec.t, spec.f));
    for k in (0..spec.f).rev() {
        let mut row = Vec::with_capacity(spec.t);
        for t in 0..spec.t {
            let mag = spec.frame(t)[k].norm();
            let db = 20.0 * (mag / peak).max(1e-300).log10();
            let clipped = db.clamp(db_floor, 0.0);
            let pixel = ((clipped - db_floor) / -db_floor * 255.0).round() as u32;
            row.push(pixel.to_string());
        }
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "spectrogram {} frames x {} bins -> {}",
        spec.t,
        spec.f,
        out.display()
    );
    Ok(())
}
