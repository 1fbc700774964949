//! `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use vispflow::flowinone::{ModelConfig, TrainConfig};

use crate::error::CliError;

/// Every recognised key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "seed for initialisation, batching, noise and rendering"),
    ("image_side", "64", "canvas side in pixels"),
    ("patch", "8", "codec patch side; tokens = (image_side/patch)^2"),
    ("enc_patch", "8", "visual encoder patch side"),
    ("enc_dim", "96", "visual encoder width"),
    ("width", "64", "latent width D"),
    ("layers", "2", "number of dual-path blocks"),
    ("heads", "4", "self-attention heads"),
    ("time_dim", "128", "sinusoidal time feature size"),
    ("sigma_min", "0.001", "path smoothing constant"),
    ("beta1", "0.01", "KL weight"),
    ("beta2", "1", "contrastive weight"),
    ("p_drop", "0.1", "condition dropout probability"),
    ("tau_init", "0.07", "initial contrastive temperature"),
    ("learn_tau", "true", "train the contrastive temperature"),
    ("codec_seed", "0", "seed of the frozen codec projection"),
    ("cfg_scale", "7", "guidance scale"),
    ("sample_steps", "50", "Euler steps when sampling"),
    ("steps", "2000", "training steps"),
    ("batch_size", "64", "examples per step"),
    ("lr", "0.0001", "peak learning rate"),
    ("warmup", "100", "linear warmup steps"),
    ("min_lr", "0", "learning rate at the end of cosine decay"),
    ("weight_decay", "0", "AdamW decoupled weight decay"),
    ("checkpoint_every", "0", "checkpoint interval in steps (0: final only)"),
    ("tau_ocr", "0.05", "maximum character error rate"),
    ("tau_div", "0.95", "near-duplicate cosine threshold"),
    ("tau_split", "0.92", "train/bench leakage cosine threshold"),
    ("bench_fraction", "0.1", "share of roots sent to the bench split"),
    ("score_threshold", "1", "minimum judge confidence score"),
    ("data", "", "input shard path"),
    ("out", "", "output directory"),
];

pub const MODEL_KEYS: &[&str] = &[
    "seed", "image_side", "patch", "enc_patch", "enc_dim", "width", "layers", "heads", "time_dim", "sigma_min", "beta1",
    "beta2", "p_drop", "tau_init", "learn_tau", "codec_seed",
];
pub const TRAIN_KEYS: &[&str] =
    &["steps", "batch_size", "lr", "warmup", "min_lr", "weight_decay", "checkpoint_every", "data", "out"];
pub const SAMPLE_KEYS: &[&str] = &["seed", "cfg_scale", "sample_steps"];
pub const DATASET_KEYS: &[&str] = &["seed", "image_side", "tau_split", "bench_fraction", "tau_div", "data", "out"];
pub const QC_KEYS: &[&str] = &["tau_ocr", "tau_div", "score_threshold", "data", "out"];
pub const RENDER_KEYS: &[&str] = &["seed"];
pub const EVAL_KEYS: &[&str] = &["out"];

/// Help text listing the given keys with their defaults.
pub fn keys_help(groups: &[&[&str]]) -> String {
    let mut s = String::from("Config keys (--config FILE or --set KEY=VALUE):\n");
    for group in groups {
        for key in *group {
            if let Some((k, d, h)) = KEYS.iter().find(|(k, _, _)| k == key) {
                if !s.contains(&format!("  {k} ")) {
                    let _ = writeln!(s, "  {k:<17} {h} [default: {}]", if d.is_empty() { "none" } else { d });
                }
            }
        }
    }
    s
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key)
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Usage(format!("config line {}: expected key = value", i + 1)));
            };
            let k = k.trim();
            if cfg.values.contains_key(k) {
                return Err(CliError::Usage(format!("config line {}: duplicate key `{k}`", i + 1)));
            }
            cfg.set(k, v.trim()).map_err(|e| CliError::Usage(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if !known(key) {
            return Err(CliError::Usage(format!("unknown config key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies `KEY=VALUE` overrides.
    pub fn apply(&mut self, overrides: &[String]) -> Result<(), CliError> {
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{o}`")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> &str {
        debug_assert!(known(key), "unregistered key {key}");
        match self.values.get(key) {
            Some(v) => v,
            None => KEYS.iter().find(|(k, _, _)| *k == key).map_or("", |(_, d, _)| d),
        }
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        let v = self.raw(key);
        v.parse().map_err(|_| CliError::Usage(format!("config key `{key}`: cannot parse `{v}`")))
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        self.parsed(key)
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        self.parsed(key)
    }

    pub fn u32(&self, key: &str) -> Result<u32, CliError> {
        self.parsed(key)
    }

    pub fn u64(&self, key: &str) -> Result<u64, CliError> {
        self.parsed(key)
    }

    pub fn bool(&self, key: &str) -> Result<bool, CliError> {
        self.parsed(key)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.raw(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf, CliError> {
        self.path(key).ok_or_else(|| CliError::Usage(format!("config key `{key}` is required")))
    }

    pub fn model_config(&self) -> Result<ModelConfig, CliError> {
        let c = ModelConfig {
            image_side: self.u32("image_side")?,
            patch: self.u32("patch")?,
            enc_patch: self.u32("enc_patch")?,
            enc_dim: self.usize("enc_dim")?,
            width: self.usize("width")?,
            layers: self.usize("layers")?,
            heads: self.usize("heads")?,
            time_dim: self.usize("time_dim")?,
            sigma_min: self.f64("sigma_min")?,
            beta1: self.f64("beta1")?,
            beta2: self.f64("beta2")?,
            p_drop: self.f64("p_drop")?,
            cfg_scale: self.f64("cfg_scale")?,
            sample_steps: self.usize("sample_steps")?,
            tau_init: self.f64("tau_init")?,
            learn_tau: self.bool("learn_tau")?,
            codec_seed: self.u64("codec_seed")?,
            init_seed: self.u64("seed")?,
        };
        c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(c)
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        Ok(TrainConfig {
            steps: self.usize("steps")?,
            batch_size: self.usize("batch_size")?,
            lr: self.f64("lr")?,
            warmup: self.usize("warmup")?,
            min_lr: self.f64("min_lr")?,
            weight_decay: self.f64("weight_decay")?,
            checkpoint_every: self.usize("checkpoint_every")?,
            seed: self.u64("seed")?,
            ..TrainConfig::default()
        })
    }

    /// Every key with its effective value, in registry order.
    pub fn snapshot(&self) -> String {
        KEYS.iter().map(|(k, _, _)| format!("{k} = {}\n", self.raw(k))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_reject() {
        let c = RunConfig::parse("# toy\nsteps = 10\nlr=0.002  # peak\n\n").unwrap();
        assert_eq!(c.usize("steps").unwrap(), 10);
        assert_eq!(c.f64("lr").unwrap(), 0.002);
        assert_eq!(c.f64("beta1").unwrap(), 0.01);
        assert!(matches!(RunConfig::parse("stpes = 3"), Err(CliError::Usage(m)) if m.contains("stpes")));
        assert!(RunConfig::parse("steps = 1\nsteps = 2").is_err());
        assert!(RunConfig::parse("steps").is_err());
        assert!(RunConfig::parse("steps = many").unwrap().usize("steps").is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut c = RunConfig::parse("width = 32\nheads = 2").unwrap();
        c.apply(&["seed=7".into()]).unwrap();
        let again = RunConfig::parse(&c.snapshot()).unwrap();
        assert_eq!(again.snapshot(), c.snapshot());
        assert_eq!(again.model_config().unwrap(), c.model_config().unwrap());
        assert_eq!(again.model_config().unwrap().init_seed, 7);
        assert_eq!(c.snapshot().lines().count(), KEYS.len());
    }

    #[test]
    fn defaults_match_library() {
        let c = RunConfig::default();
        assert_eq!(c.model_config().unwrap(), ModelConfig::default());
        assert_eq!(c.train_config().unwrap(), TrainConfig::default());
        assert_eq!(c.f64("tau_ocr").unwrap(), vispflow::qc::DEFAULT_TAU_OCR);
        assert_eq!(c.f64("tau_div").unwrap(), vispflow::qc::DEFAULT_TAU_DIV);
        assert_eq!(c.f64("tau_split").unwrap(), vispflow::dataset::DEFAULT_TAU_SPLIT);
        assert_eq!(c.f64("score_threshold").unwrap(), vispflow::qc::DEFAULT_SCORE_THRESHOLD);
    }
}
