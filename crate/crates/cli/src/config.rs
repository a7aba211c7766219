//! Flat `key = value` run configuration shared by both training stages.
//!
//! Lines starting with `#` are comments; unknown keys are rejected. Every key
//! has a documented default, and each training run echoes the fully resolved
//! configuration into its output directory so the run can be reproduced from
//! that file alone.

use anyhow::{bail, Context, Result};
use std::path::Path;

use dereverb_core::model::ModelConfig;
use dereverb_core::rir::RoomRanges;
use dereverb_core::signal::StftConfig;
use dereverb_core::train::{Stage1Config, Stage2Config};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub steps: u64,
    pub batch_size: usize,
    pub crop_len_s: f64,
    pub lr: f64,
    pub checkpoint_every: u64,
    pub stft_win_len: usize,
    pub stft_hop_len: usize,
    pub stft_fft_len: usize,
    pub model_context: usize,
    pub model_hidden: usize,
    pub model_layers: usize,
    pub t60_min: f64,
    pub t60_max: f64,
    pub drr_min: f64,
    pub drr_max: f64,
    pub room_length_min: f64,
    pub room_length_max: f64,
    pub room_width_min: f64,
    pub room_width_max: f64,
    pub room_height_min: f64,
    pub room_height_max: f64,
    pub room_t60_min: f64,
    pub room_t60_max: f64,
    pub omega: f64,
    pub alpha: f64,
    pub noise_factor: f64,
    pub inject_noise: bool,
    pub use_aux: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            steps: 5000,
            batch_size: 2,
            crop_len_s: 4.0,
            lr: 1e-3,
            checkpoint_every: 500,
            stft_win_len: 512,
            stft_hop_len: 128,
            stft_fft_len: 512,
            model_context: 3,
            model_hidden: 256,
            model_layers: 2,
            t60_min: 0.5,
            t60_max: 1.2,
            drr_min: -16.0,
            drr_max: -6.0,
            room_length_min: 5.0,
            room_length_max: 10.0,
            room_width_min: 5.0,
            room_width_max: 10.0,
            room_height_min: 3.0,
            room_height_max: 4.0,
            room_t60_min: 0.2,
            room_t60_max: 1.3,
            omega: 1.2,
            alpha: 0.999,
            noise_factor: 0.02,
            inject_noise: true,
            use_aux: true,
        }
    }
}

macro_rules! config_keys {
    ($cfg:expr, $action:ident) => {{
        let c = $cfg;
        [
            $action!(c, seed),
            $action!(c, steps),
            $action!(c, batch_size),
            $action!(c, crop_len_s),
            $action!(c, lr),
            $action!(c, checkpoint_every),
            $action!(c, stft_win_len),
            $action!(c, stft_hop_len),
            $action!(c, stft_fft_len),
            $action!(c, model_context),
            $action!(c, model_hidden),
            $action!(c, model_layers),
            $action!(c, t60_min),
            $action!(c, t60_max),
            $action!(c, drr_min),
            $action!(c, drr_max),
            $action!(c, room_length_min),
            $action!(c, room_length_max),
            $action!(c, room_width_min),
            $action!(c, room_width_max),
            $action!(c, room_height_min),
            $action!(c, room_height_max),
            $action!(c, room_t60_min),
            $action!(c, room_t60_max),
            $action!(c, omega),
            $action!(c, alpha),
            $action!(c, noise_factor),
            $action!(c, inject_noise),
            $action!(c, use_aux),
        ]
    }};
}

impl RunConfig {
    pub fn parse_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Self::parse_str(&text).with_context(|| format!("in config file {}", path.display()))
    }

    pub fn parse_str(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected key = value, got {raw:?}", lineno + 1);
            };
            let key = key.trim();
            let value = value.trim();
            let parse = |what: &str| -> String { format!("line {}: bad {what}", lineno + 1) };
            match key {
                "seed" => cfg.seed = value.parse().with_context(|| parse("integer"))?,
                "steps" => cfg.steps = value.parse().with_context(|| parse("integer"))?,
                "batch_size" => cfg.batch_size = value.parse().with_context(|| parse("integer"))?,
                "crop_len_s" => cfg.crop_len_s = value.parse().with_context(|| parse("float"))?,
                "lr" => cfg.lr = value.parse().with_context(|| parse("float"))?,
                "checkpoint_every" => {
                    cfg.checkpoint_every = value.parse().with_context(|| parse("integer"))?
                }
                "stft_win_len" => {
                    cfg.stft_win_len = value.parse().with_context(|| parse("integer"))?
                }
                "stft_hop_len" => {
                    cfg.stft_hop_len = value.parse().with_context(|| parse("integer"))?
                }
                "stft_fft_len" => {
                    cfg.stft_fft_len = value.parse().with_context(|| parse("integer"))?
                }
                "model_context" => {
                    cfg.model_context = value.parse().with_context(|| parse("integer"))?
                }
                "model_hidden" => {
                    cfg.model_hidden = value.parse().with_context(|| parse("integer"))?
                }
                "model_layers" => {
                    cfg.model_layers = value.parse().with_context(|| parse("integer"))?
                }
                "t60_min" => cfg.t60_min = value.parse().with_context(|| parse("float"))?,
                "t60_max" => cfg.t60_max = value.parse().with_context(|| parse("float"))?,
                "drr_min" => cfg.drr_min = value.parse().with_context(|| parse("float"))?,
                "drr_max" => cfg.drr_max = value.parse().with_context(|| parse("float"))?,
                "room_length_min" => {
                    cfg.room_length_min = value.parse().with_context(|| parse("float"))?
                }
                "room_length_max" => {
                    cfg.room_length_max = value.parse().with_context(|| parse("float"))?
                }
                "room_width_min" => {
                    cfg.room_width_min = value.parse().with_context(|| parse("float"))?
                }
                "room_width_max" => {
                    cfg.room_width_max = value.parse().with_context(|| parse("float"))?
                }
                "room_height_min" => {
                    cfg.room_height_min = value.parse().with_context(|| parse("float"))?
                }
                "room_height_max" => {
                    cfg.room_height_max = value.parse().with_context(|| parse("float"))?
                }
                "room_t60_min" => {
                    cfg.room_t60_min = value.parse().with_context(|| parse("float"))?
                }
                "room_t60_max" => {
                    cfg.room_t60_max = value.parse().with_context(|| parse("float"))?
                }
                "omega" => cfg.omega = value.parse().with_context(|| parse("float"))?,
                "alpha" => cfg.alpha = value.parse().with_context(|| parse("float"))?,
                "noise_factor" => {
                    cfg.noise_factor = value.parse().with_context(|| parse("float"))?
                }
                "inject_noise" => {
                    cfg.inject_noise = value.parse().with_context(|| parse("bool"))?
                }
                "use_aux" => cfg.use_aux = value.parse().with_context(|| parse("bool"))?,
                other => bail!("line {}: unknown key {other:?}", lineno + 1),
            }
        }
        Ok(cfg)
    }

    /// The fully resolved configuration as a reparseable file.
    pub fn to_config_text(&self) -> String {
        macro_rules! fmt_key {
            ($c:expr, $field:ident) => {
                format!("{} = {}", stringify!($field), $c.$field)
            };
        }
        let mut lines: Vec<String> = config_keys!(self, fmt_key).to_vec();
        lines.sort();
        lines.join("\n") + "\n"
    }

    pub fn stft(&self) -> Result<StftConfig> {
        Ok(StftConfig::new(
            self.stft_win_len,
            self.stft_hop_len,
            self.stft_fft_len,
        )?)
    }

    pub fn model(&self) -> Result<ModelConfig> {
        Ok(ModelConfig {
            context: self.model_context,
            hidden: self.model_hidden,
            n_layers: self.model_layers,
            freq_bins: self.stft()?.freq_bins(),
        })
    }

    pub fn stage1(&self) -> Result<Stage1Config> {
        let cfg = Stage1Config {
            t60_range_s: (self.t60_min, self.t60_max),
            drr_range_db: (self.drr_min, self.drr_max),
            batch_size: self.batch_size,
            crop_len_s: self.crop_len_s,
            steps: self.steps,
            lr: self.lr,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
            stft: self.stft()?,
            model: self.model()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn stage2(&self) -> Result<Stage2Config> {
        let cfg = Stage2Config {
            room: RoomRanges {
                length_m: (self.room_length_min, self.room_length_max),
                width_m: (self.room_width_min, self.room_width_max),
                height_m: (self.room_height_min, self.room_height_max),
                t60_s: (self.room_t60_min, self.room_t60_max),
            },
            aux_weight: self.omega,
            ema_momentum: self.alpha,
            noise_factor: self.noise_factor,
            inject_noise: self.inject_noise,
            use_aux: self.use_aux,
            batch_size: self.batch_size,
            crop_len_s: self.crop_len_s,
            steps: self.steps,
            lr: self.lr,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
            stft: self.stft()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
