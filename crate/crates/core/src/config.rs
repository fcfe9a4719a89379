//! Flat `key = value` run configuration.
//!
//! Lines starting with `#` are comments. Unknown or repeated keys are errors.
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::features::YearSplit;
use crate::model::{ModelConfig, PromptMode};
use crate::train::TrainConfig;

pub const SEED_ENV: &str = "TYFO_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line_no}: {reason}")]
    Syntax { line_no: usize, reason: String },
    #[error("line {line_no}: unknown key {key:?}")]
    UnknownKey { line_no: usize, key: String },
    #[error("line {line_no}: key {key:?} given twice")]
    DuplicateKey { line_no: usize, key: String },
    #[error("bad value for {key}: {reason}")]
    Value { key: String, reason: String },
    #[error("required key {0} is missing")]
    Missing(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const KEYS: &[&str] = &[
    "data",
    "output_dir",
    "prompts_import",
    "embeddings_import",
    "train_years",
    "test_years",
    "history",
    "horizons",
    "d_txt",
    "d_model",
    "n_layers",
    "n_heads",
    "d_ff",
    "layer_norm_eps",
    "prompt_mode",
    "positional_encoding",
    "use_prompt",
    "lr",
    "beta1",
    "beta2",
    "adam_eps",
    "batch_size",
    "epochs",
    "seed",
    "grad_clip_norm",
    "checkpoint_every",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: PathBuf,
    pub output_dir: PathBuf,
    pub prompts_import: Option<PathBuf>,
    pub embeddings_import: Option<PathBuf>,
    pub split: YearSplit,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Write an intermediate checkpoint every N epochs; 0 disables.
    pub checkpoint_every: usize,
}

impl RunConfig {
    pub fn checkpoint_path(&self) -> PathBuf {
        self.output_dir.join("checkpoint.tyfo")
    }

    pub fn report_path(&self) -> PathBuf {
        self.output_dir.join("train_report.csv")
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        reason: e.to_string(),
    })
}

fn parse_years(key: &str, v: &str) -> Result<std::ops::RangeInclusive<i32>, ConfigError> {
    let bad = || ConfigError::Value {
        key: key.into(),
        reason: format!("expected YYYY-YYYY, got {v:?}"),
    };
    let (a, b) = v.split_once('-').ok_or_else(bad)?;
    let (a, b): (i32, i32) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a > b {
        return Err(bad());
    }
    Ok(a..=b)
}

pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig, ConfigError> {
    let mut entries: BTreeMap<String, String> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line_no,
            reason: "expected key = value".into(),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(ConfigError::UnknownKey {
                line_no,
                key: k.into(),
            });
        }
        if entries.insert(k.to_string(), v.to_string()).is_some() {
            return Err(ConfigError::DuplicateKey {
                line_no,
                key: k.into(),
            });
        }
    }

    let path = |v: &String| {
        let p = PathBuf::from(v);
        if p.is_absolute() {
            p
        } else {
            base_dir.join(p)
        }
    };
    let mut model = ModelConfig::default();
    let mut train = TrainConfig::default();
    let mut split = YearSplit::default();
    let mut checkpoint_every = 0;

    for (k, v) in &entries {
        let k = k.as_str();
        match k {
            "data" | "output_dir" | "prompts_import" | "embeddings_import" => {}
            "train_years" => split.train = parse_years(k, v)?,
            "test_years" => split.test = parse_years(k, v)?,
            "history" => model.history = parse_value(k, v)?,
            "horizons" => model.horizons = parse_value(k, v)?,
            "d_txt" => model.d_txt = parse_value(k, v)?,
            "d_model" => model.d_model = parse_value(k, v)?,
            "n_layers" => model.n_layers = parse_value(k, v)?,
            "n_heads" => model.n_heads = parse_value(k, v)?,
            "d_ff" => model.d_ff = parse_value(k, v)?,
            "layer_norm_eps" => model.layer_norm_eps = parse_value(k, v)?,
            "prompt_mode" => model.prompt_mode = parse_value::<PromptMode>(k, v)?,
            "positional_encoding" => model.positional_encoding = parse_value(k, v)?,
            "use_prompt" => model.use_prompt = parse_value(k, v)?,
            "lr" => train.lr = parse_value(k, v)?,
            "beta1" => train.betas.0 = parse_value(k, v)?,
            "beta2" => train.betas.1 = parse_value(k, v)?,
            "adam_eps" => train.adam_eps = parse_value(k, v)?,
            "batch_size" => train.batch_size = parse_value(k, v)?,
            "epochs" => train.epochs = parse_value(k, v)?,
            "seed" => train.seed = parse_value(k, v)?,
            "grad_clip_norm" => train.grad_clip_norm = parse_value(k, v)?,
            "checkpoint_every" => checkpoint_every = parse_value(k, v)?,
            _ => unreachable!("key list and match arms disagree on {k}"),
        }
    }

    if let Ok(seed) = std::env::var(SEED_ENV) {
        train.seed = parse_value(SEED_ENV, seed.trim())?;
    }

    model.validate().map_err(|e| ConfigError::Value {
        key: "model".into(),
        reason: e.to_string(),
    })?;
    train.validate().map_err(|e| ConfigError::Value {
        key: "train".into(),
        reason: e.to_string(),
    })?;

    Ok(RunConfig {
        data: entries.get("data").map(path).ok_or(ConfigError::Missing("data"))?,
        output_dir: entries
            .get("output_dir")
            .map(path)
            .unwrap_or_else(|| base_dir.to_path_buf()),
        prompts_import: entries.get("prompts_import").map(path),
        embeddings_import: entries.get("embeddings_import").map(path),
        split,
        model,
        train,
        checkpoint_every,
    })
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config(&text, base)
}
