use dereverb_core::checkpoint::Checkpoint;
use dereverb_core::data::*;
use dereverb_core::metrics::*;
use dereverb_core::model::ModelConfig;
use dereverb_core::rir::RoomRanges;
use dereverb_core::signal::StftConfig;
use dereverb_core::train::*;
use std::time::Instant;

fn eval_ck(ck_path: &std::path::Path, manifest: &Manifest, net: Net) -> (f64, f64, Vec<f64>) {
    let ck = Checkpoint::load(ck_path).unwrap();
    let (_, s) = evaluate_set(&ck, manifest, &EvalOptions { by_snr_buckets: true, which_net: net }).unwrap();
    let buckets = s.buckets.unwrap().iter().map(|b| b.mean_si_sdr_db).collect();
    (s.mean_si_sdr_db, s.mean_estoi, buckets)
}

fn main() {
    let out = std::path::PathBuf::from("/tmp/toyset");
    let manifest = Manifest::load(&out.join("manifest.jsonl")).unwrap();
    let args: Vec<String> = std::env::args().collect();
    let s1_steps: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(600);
    let s2_steps: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(500);
    let hop: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(128);

    let stft = StftConfig::new(512, hop, 512).unwrap();
    let model = ModelConfig { context: 2, hidden: 128, n_layers: 2, freq_bins: stft.freq_bins() };
    let s1_cfg = Stage1Config {
        batch_size: 2,
        steps: s1_steps,
        lr: 1e-3,
        seed: 11,
        checkpoint_every: 1_000_000,
        model,
        stft: stft.clone(),
        ..Stage1Config::default()
    };
    let s1_dir = std::path::PathBuf::from(format!("/tmp/s1_{s1_steps}_{hop}"));
    if !s1_dir.join("ckpt_final.ckpt").exists() {
        let t0 = Instant::now();
        let outcome = train_stage1(&manifest, &s1_cfg, &s1_dir).unwrap();
        println!("stage1 {s1_steps} steps in {:?} ({:?})", t0.elapsed(), outcome.stats.skipped_nonfinite);
    }
    let (si1, es1, b1) = eval_ck(&s1_dir.join("ckpt_final.ckpt"), &manifest, Net::Student);
    println!("stage1: si_sdr {si1:.2} dB estoi {es1:.3} buckets {b1:?}");

    let mk_s2 = |inject: bool, aux: bool| Stage2Config {
        room: RoomRanges { t60_s: (0.2, 0.5), ..RoomRanges::default() },
        inject_noise: inject,
        use_aux: aux,
        batch_size: 2,
        steps: s2_steps,
        lr: 5e-4,
        seed: 13,
        checkpoint_every: 1_000_000,
        stft: stft.clone(),
        ..Stage2Config::default()
    };
    for (name, inject, aux) in [("full", true, true), ("no-aux", true, false), ("no-noise", false, true)] {
        let dir = std::path::PathBuf::from(format!("/tmp/s2_{name}_{s1_steps}_{s2_steps}_{hop}"));
        if !dir.join("ckpt_final.ckpt").exists() {
            let t0 = Instant::now();
            train_stage2(&manifest, &mk_s2(inject, aux), &s1_dir.join("ckpt_final.ckpt"), &dir).unwrap();
            println!("stage2[{name}] {s2_steps} steps in {:?}", t0.elapsed());
        }
        let (si, es, b) = eval_ck(&dir.join("ckpt_final.ckpt"), &manifest, Net::Student);
        println!("stage2[{name}]: si_sdr {si:.2} dB estoi {es:.3} buckets {b:?}");
    }
}
