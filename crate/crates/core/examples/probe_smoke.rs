use dereverb_core::data::{build_dataset, DatasetCounts, DatasetRanges};
use dereverb_core::rir::RoomRanges;
use dereverb_core::signal::StftConfig;
use dereverb_core::train::{train_stage1, Stage1Config};
use dereverb_core::model::ModelConfig;

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let ranges = DatasetRanges {
        room: RoomRanges { t60_s: (0.2, 0.35), ..RoomRanges::default() },
        dur_s: 2.0,
        sample_rate: 8_000,
        ..DatasetRanges::default()
    };
    let manifest = build_dataset(dir.path(), DatasetCounts { train: 20, val: 0, test: 2 }, &ranges, 40).unwrap();
    for (batch, lr) in [(4usize, 2e-4f64), (4, 1e-4), (6, 2e-4)] {
        for seed in [7u64, 1, 2, 3] {
            let out = tempfile::tempdir().unwrap();
            let stft = StftConfig::new(128, 32, 128).unwrap();
            let cfg = Stage1Config {
                batch_size: batch,
                crop_len_s: 1.0,
                steps: 500,
                lr,
                seed,
                checkpoint_every: 100_000,
                model: ModelConfig { context: 1, hidden: 16, n_layers: 1, freq_bins: stft.freq_bins() },
                stft,
                ..Stage1Config::default()
            };
            train_stage1(&manifest, &cfg, out.path()).unwrap();
            let log = std::fs::read_to_string(out.path().join("train_log.csv")).unwrap();
            let losses: Vec<f64> = log.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
            let means: Vec<f64> = losses.chunks(50).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
            let monotone = means.windows(2).all(|p| p[1] < p[0]);
            println!("batch {batch} lr {lr} seed {seed}: monotone {monotone} means {:?}", means.iter().map(|m| (m*100.0).round()/100.0).collect::<Vec<_>>());
        }
    }
}
