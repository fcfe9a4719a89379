//! Named-tensor checkpoint files.
//!
//! ```text
//! TYFO1
//! name|d0xd1|v,v,v,...
//! ```
//!
//! Values are written in Rust's shortest round-trip decimal form, so a
//! save/load cycle is bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::autodiff::Tensor;
use crate::features::{NormalizationStats, FEATURE_DIM};
use crate::model::ModelParams;

pub const MAGIC: &str = "TYFO1";

const NORM_MEAN: &str = "norm.mean";
const NORM_STD: &str = "norm.std";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("missing {MAGIC} header")]
    BadHeader,
    #[error("line {line_no}: {reason}")]
    Malformed { line_no: usize, reason: String },
    #[error("checkpoint has no tensor named {0}")]
    Missing(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn render(tensors: &BTreeMap<String, Tensor>) -> String {
    let mut out = format!("{MAGIC}\n");
    for (name, t) in tensors {
        let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        let _ = write!(out, "{name}|{}|", shape.join("x"));
        for (i, v) in t.data().iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn parse(text: &str) -> Result<BTreeMap<String, Tensor>, CheckpointError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(CheckpointError::BadHeader),
    }
    let mut out = BTreeMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| CheckpointError::Malformed { line_no, reason };
        let mut parts = line.splitn(3, '|');
        let (Some(name), Some(shape), Some(values)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(bad("expected name|shape|values".into()));
        };
        let shape: Vec<usize> = shape
            .split('x')
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("bad shape {shape:?}: {e}")))?;
        let data: Vec<f64> = values
            .split(',')
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("bad value: {e}")))?;
        let t = Tensor::new(shape, data).map_err(|e| bad(e.to_string()))?;
        if out.insert(name.to_string(), t).is_some() {
            return Err(bad(format!("duplicate tensor {name}")));
        }
    }
    Ok(out)
}

/// Parameters plus the feature statistics they were trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub params: ModelParams,
    pub stats: NormalizationStats,
}

impl ModelCheckpoint {
    pub fn render(&self) -> String {
        let mut all: BTreeMap<String, Tensor> = self
            .params
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect();
        all.insert(NORM_MEAN.into(), Tensor::vector(self.stats.mean.to_vec()));
        all.insert(NORM_STD.into(), Tensor::vector(self.stats.std.to_vec()));
        render(&all)
    }

    pub fn parse(text: &str) -> Result<Self, CheckpointError> {
        let mut all = parse(text)?;
        let mut take = |name: &str| -> Result<[f64; FEATURE_DIM], CheckpointError> {
            let t = all
                .remove(name)
                .ok_or_else(|| CheckpointError::Missing(name.into()))?;
            t.data().try_into().map_err(|_| CheckpointError::Malformed {
                line_no: 0,
                reason: format!("{name} must hold {FEATURE_DIM} values"),
            })
        };
        let stats = NormalizationStats {
            mean: take(NORM_MEAN)?,
            std: take(NORM_STD)?,
        };
        Ok(Self {
            params: ModelParams::from_tensors(all),
            stats,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
