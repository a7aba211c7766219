//! Versioned checkpoint files.
//!
//! Layout: the magic bytes `ARTT1`, a little-endian u32 header length, a
//! UTF-8 `key=value` header describing the version, model and analysis
//! configuration, training stage and step, and a tensor table (name, shape,
//! byte offset), followed by the tensor payloads as little-endian f64 in
//! table order. Saving a loaded checkpoint reproduces the file byte for byte.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{layer_names, ModelConfig, OptimState, ParamSet, Tensor};
use crate::signal::StftConfig;

pub const MAGIC: &[u8; 5] = b"ARTT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub stage: u8,
    pub step: u64,
    pub model: ModelConfig,
    pub stft: StftConfig,
    pub sample_rate: u32,
    pub student: ParamSet,
    pub teacher: Option<ParamSet>,
    pub opt: OptimState,
}

fn ck_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

struct TableEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut header = String::new();
        let mut payload: Vec<u8> = Vec::new();
        writeln!(header, "format_version={FORMAT_VERSION}").unwrap();
        writeln!(header, "stage={}", self.stage).unwrap();
        writeln!(header, "step={}", self.step).unwrap();
        writeln!(header, "model.context={}", self.model.context).unwrap();
        writeln!(header, "model.hidden={}", self.model.hidden).unwrap();
        writeln!(header, "model.n_layers={}", self.model.n_layers).unwrap();
        writeln!(header, "model.freq_bins={}", self.model.freq_bins).unwrap();
        writeln!(header, "stft.win_len={}", self.stft.win_len).unwrap();
        writeln!(header, "stft.hop_len={}", self.stft.hop_len).unwrap();
        writeln!(header, "stft.fft_len={}", self.stft.fft_len).unwrap();
        writeln!(header, "sample_rate={}", self.sample_rate).unwrap();
        writeln!(header, "opt.lr={}", self.opt.lr).unwrap();
        writeln!(header, "opt.beta1={}", self.opt.beta1).unwrap();
        writeln!(header, "opt.beta2={}", self.opt.beta2).unwrap();
        writeln!(header, "opt.eps={}", self.opt.eps).unwrap();

        let mut push = |prefix: &str, name: &str, t: &Tensor, header: &mut String| {
            writeln!(
                header,
                "tensor={prefix}{name} shape={}x{} offset={}",
                t.rows,
                t.cols,
                payload.len()
            )
            .unwrap();
            for v in &t.data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        };
        for (name, t) in &self.student.tensors {
            push("student.", name, t, &mut header);
        }
        if let Some(teacher) = &self.teacher {
            for (name, t) in &teacher.tensors {
                push("teacher.", name, t, &mut header);
            }
        }
        for ((name, _), t) in self.student.tensors.iter().zip(&self.opt.first) {
            push("opt.m.", name, t, &mut header);
        }
        for ((name, _), t) in self.student.tensors.iter().zip(&self.opt.second) {
            push("opt.v.", name, t, &mut header);
        }

        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(MAGIC).map_err(|e| Error::io(path, e))?;
        file.write_all(&(header.len() as u32).to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
        file.write_all(header.as_bytes())
            .map_err(|e| Error::io(path, e))?;
        file.write_all(&payload).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    fn from_bytes(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
        if bytes.len() < MAGIC.len() + 4 {
            return Err(ck_err(path, "truncated: missing header"));
        }
        if &bytes[..5] != MAGIC {
            return Err(ck_err(path, "magic mismatch: not a checkpoint file"));
        }
        let header_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        if bytes.len() < 9 + header_len {
            return Err(ck_err(path, "truncated header"));
        }
        let header = std::str::from_utf8(&bytes[9..9 + header_len])
            .map_err(|_| ck_err(path, "header is not valid UTF-8"))?;
        let payload = &bytes[9 + header_len..];

        let mut fields: std::collections::HashMap<&str, &str> = std::collections::HashMap::new();
        let mut table: Vec<TableEntry> = Vec::new();
        for line in header.lines() {
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ck_err(path, format!("malformed header line: {line}")))?;
            if key == "tensor" {
                table.push(parse_table_entry(value, path)?);
            } else {
                fields.insert(key, value);
            }
        }
        let get = |key: &str| -> Result<&str> {
            fields
                .get(key)
                .copied()
                .ok_or_else(|| ck_err(path, format!("missing header field {key}")))
        };
        let parse_u = |key: &str| -> Result<u64> {
            get(key)?
                .parse()
                .map_err(|_| ck_err(path, format!("bad integer for {key}")))
        };
        let parse_f = |key: &str| -> Result<f64> {
            get(key)?
                .parse()
                .map_err(|_| ck_err(path, format!("bad float for {key}")))
        };

        let version = parse_u("format_version")? as u32;
        if version != FORMAT_VERSION {
            return Err(ck_err(
                path,
                format!("unsupported format version {version}, expected {FORMAT_VERSION}"),
            ));
        }
        let stage = parse_u("stage")? as u8;
        let step = parse_u("step")?;
        let model = ModelConfig {
            context: parse_u("model.context")? as usize,
            hidden: parse_u("model.hidden")? as usize,
            n_layers: parse_u("model.n_layers")? as usize,
            freq_bins: parse_u("model.freq_bins")? as usize,
        };
        let stft = StftConfig::new(
            parse_u("stft.win_len")? as usize,
            parse_u("stft.hop_len")? as usize,
            parse_u("stft.fft_len")? as usize,
        )?;
        let sample_rate = parse_u("sample_rate")? as u32;

        let expected = layer_names(&model);
        let read_set = |prefix: &str| -> Result<Vec<(String, Tensor)>> {
            let mut tensors = Vec::new();
            for (name, rows, cols) in &expected {
                let full = format!("{prefix}{name}");
                let entry = table
                    .iter()
                    .find(|e| e.name == full)
                    .ok_or_else(|| ck_err(path, format!("missing tensor {full}")))?;
                if entry.rows != *rows || entry.cols != *cols {
                    return Err(ck_err(
                        path,
                        format!(
                            "shape mismatch for {full}: file {}x{}, model {}x{}",
                            entry.rows, entry.cols, rows, cols
                        ),
                    ));
                }
                let n = rows * cols;
                let end = entry.offset + 8 * n;
                if end > payload.len() {
                    return Err(ck_err(path, format!("truncated payload for {full}")));
                }
                let data: Vec<f64> = payload[entry.offset..end]
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                tensors.push((
                    name.clone(),
                    Tensor {
                        data,
                        rows: *rows,
                        cols: *cols,
                    },
                ));
            }
            Ok(tensors)
        };

        let student = ParamSet {
            tensors: read_set("student.")?,
            step_count: step,
            config: model,
        };
        let teacher = if table.iter().any(|e| e.name.starts_with("teacher.")) {
            Some(ParamSet {
                tensors: read_set("teacher.")?,
                step_count: step,
                config: model,
            })
        } else {
            None
        };
        let opt = OptimState {
            first: read_set("opt.m.")?.into_iter().map(|(_, t)| t).collect(),
            second: read_set("opt.v.")?.into_iter().map(|(_, t)| t).collect(),
            lr: parse_f("opt.lr")?,
            beta1: parse_f("opt.beta1")?,
            beta2: parse_f("opt.beta2")?,
            eps: parse_f("opt.eps")?,
        };
        Ok(Checkpoint {
            stage,
            step,
            model,
            stft,
            sample_rate,
            student,
            teacher,
            opt,
        })
    }
}

fn parse_table_entry(value: &str, path: &Path) -> Result<TableEntry> {
    // name shape=RxC offset=N
    let mut parts = value.split(' ');
    let name = parts
        .next()
        .ok_or_else(|| ck_err(path, "empty tensor entry"))?
        .to_string();
    let mut rows = None;
    let mut cols = None;
    let mut offset = None;
    for part in parts {
        if let Some(shape) = part.strip_prefix("shape=") {
            let (r, c) = shape
                .split_once('x')
                .ok_or_else(|| ck_err(path, format!("bad shape for {name}")))?;
            rows = r.parse().ok();
            cols = c.parse().ok();
        } else if let Some(off) = part.strip_prefix("offset=") {
            offset = off.parse().ok();
        }
    }
    match (rows, cols, offset) {
        (Some(rows), Some(cols), Some(offset)) => Ok(TableEntry {
            name,
            rows,
            cols,
            offset,
        }),
        _ => Err(ck_err(path, format!("malformed tensor entry for {name}"))),
    }
}

/// Convenience: the path is interpreted relative to the current directory.
pub fn load_checkpoint(path: impl Into<PathBuf>) -> Result<Checkpoint> {
    Checkpoint::load(&path.into())
}
