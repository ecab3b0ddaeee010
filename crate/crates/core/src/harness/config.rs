//! Line-oriented `key = value` configuration files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::training::TrainConfig;

/// First 16 hex digits of the SHA-256 of `data`.
pub fn short_hash(data: &[u8]) -> String {
    Sha256::digest(data).iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Settings in file order. Blank lines and lines starting with `#` are
/// ignored; a repeated key keeps its last value when applied.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    pub entries: Vec<(String, String)>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{line}'", n + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(ConfigFile { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value.parse().map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

/// Parses `lo-hi` or a single quality.
pub fn parse_quality_range(value: &str) -> Result<(u32, u32)> {
    match value.split_once('-') {
        Some((lo, hi)) => Ok((parse("quality_range", lo.trim())?, parse("quality_range", hi.trim())?)),
        None => {
            let q = parse("quality", value)?;
            Ok((q, q))
        }
    }
}

/// Sets one training option by its config-file key. Returns `false` for keys
/// that are not training options.
pub fn apply_train_setting(cfg: &mut TrainConfig, key: &str, value: &str) -> Result<bool> {
    match key {
        "kind" => cfg.estimator.kind = parse(key, value)?,
        "hidden" | "h" => cfg.estimator.hidden = parse(key, value)?,
        "d" => cfg.estimator.d = parse(key, value)?,
        "neighbors" => {
            let n: usize = parse(key, value)?;
            cfg.estimator.slots = n + 1;
        }
        "tied" => cfg.estimator.tied = parse(key, value)?,
        "input_divisor" => cfg.estimator.input_divisor = parse(key, value)?,
        "k" => cfg.k = parse(key, value)?,
        "lambda" => cfg.lambda = parse(key, value)?,
        "normalize_mae_by_batch" => cfg.normalize_mae_by_batch = parse(key, value)?,
        "schedule" => cfg.schedule = parse(key, value)?,
        "eta0" => cfg.eta0 = parse(key, value)?,
        "gamma" => cfg.gamma = parse(key, value)?,
        "lr_noise_is_std" => cfg.lr_noise_is_std = parse(key, value)?,
        "lr_period" => cfg.lr_period = parse(key, value)?,
        "epochs" => cfg.epochs = parse(key, value)?,
        "batch" => cfg.batch = parse(key, value)?,
        "quality" | "quality_range" => (cfg.quality_min, cfg.quality_max) = parse_quality_range(value)?,
        "quality_min" => cfg.quality_min = parse(key, value)?,
        "quality_max" => cfg.quality_max = parse(key, value)?,
        "seed" => cfg.seed = parse(key, value)?,
        "val_fraction" => cfg.val_fraction = parse(key, value)?,
        "clip_norm" => cfg.clip_norm = parse(key, value)?,
        "rmsprop_decay" => cfg.rmsprop_decay = parse(key, value)?,
        "rmsprop_epsilon" => cfg.rmsprop_epsilon = parse(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Applies every training key from `file`; unknown keys are errors.
pub fn train_config_from_file(file: &ConfigFile, mut base: TrainConfig) -> Result<TrainConfig> {
    for (k, v) in &file.entries {
        if !apply_train_setting(&mut base, k, v)? {
            return Err(Error::Config(format!("unknown training option '{k}'")));
        }
    }
    Ok(base)
}
