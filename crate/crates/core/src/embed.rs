//! Text embedding for prompts.
//!
//! [`HashedEmbedder`] stands in for a pretrained language encoder: each token
//! is hashed with FNV-1a and the hash seeds a splitmix64 stream that fills a
//! unit vector. The output is bit-identical across platforms and runs.
//! Anything implementing [`TextEmbedder`] can replace it; precomputed vectors
//! can also be imported from a file via [`load_embeddings`].

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::prompt::{parse_prompt_key, PromptKey};

pub const DEFAULT_TEXT_DIM: usize = 64;
pub const MIN_TEXT_DIM: usize = 8;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("text has no tokens")]
    EmptyText,
    #[error("embedding dimension {0} is below the minimum of {MIN_TEXT_DIM}")]
    DimensionTooSmall(usize),
    #[error("line {line_no}: {reason}")]
    MalformedEmbeddingFile { line_no: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token vectors and their arithmetic mean.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptEmbedding {
    pub tokens: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

impl PromptEmbedding {
    pub fn from_tokens(tokens: Vec<Vec<f64>>) -> Self {
        let d = tokens[0].len();
        let mut mean = vec![0.0; d];
        for t in &tokens {
            for (m, v) in mean.iter_mut().zip(t) {
                *m += v;
            }
        }
        let m = tokens.len() as f64;
        mean.iter_mut().for_each(|v| *v /= m);
        Self { tokens, mean }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub trait TextEmbedder {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<PromptEmbedding, EmbedError>;
}

/// Lowercases and splits on whitespace and punctuation. A `.` between two
/// digits stays inside its number, so `27.4` is one token.
pub fn tokenize(text: &str) -> Result<Vec<String>, EmbedError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let decimal_point = c == '.'
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit())
            && cur.chars().all(|d| d.is_ascii_digit() || d == '.');
        if c.is_alphanumeric() || decimal_point {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    if tokens.is_empty() {
        return Err(EmbedError::EmptyText);
    }
    Ok(tokens)
}

/// FNV-1a, 64-bit.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in the open interval (-1, 1).
    pub fn next_signed(&mut self) -> f64 {
        let u = ((self.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
        2.0 * u - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedEmbedder {
    dim: usize,
}

impl HashedEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim < MIN_TEXT_DIM {
            return Err(EmbedError::DimensionTooSmall(dim));
        }
        Ok(Self { dim })
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut rng = SplitMix64::new(fnv1a64(token.as_bytes()));
        let mut v: Vec<f64> = (0..self.dim).map(|_| rng.next_signed()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        v
    }
}

impl TextEmbedder for HashedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<PromptEmbedding, EmbedError> {
        let tokens = tokenize(text)?;
        Ok(PromptEmbedding::from_tokens(
            tokens.iter().map(|t| self.token_vector(t)).collect(),
        ))
    }
}

pub fn embed(text: &str, dim: usize) -> Result<PromptEmbedding, EmbedError> {
    HashedEmbedder::new(dim)?.embed(text)
}

/// Parses `key|d_txt|v1,v2,...` lines. The key is everything before the last
/// two `|` separators and must be a prompt-cache key
/// (`BBNNYYYY_NAME|YYYYMMDDHHMM`). Each vector becomes a one-token embedding.
pub fn parse_embeddings(text: &str) -> Result<HashMap<PromptKey, PromptEmbedding>, EmbedError> {
    let mut out = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| EmbedError::MalformedEmbeddingFile { line_no, reason };
        let mut parts = line.rsplitn(3, '|');
        let (Some(values), Some(dim), Some(key)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(bad("expected key|d_txt|values".into()));
        };
        let (storm, ts) = key
            .split_once('|')
            .ok_or_else(|| bad(format!("key {key:?} is not BBNNYYYY_NAME|YYYYMMDDHHMM")))?;
        let key = parse_prompt_key(storm.trim(), ts.trim()).map_err(bad)?;
        let dim: usize = dim
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad dimension {dim:?}")))?;
        let vec: Vec<f64> = values
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("bad value: {e}")))?;
        if vec.len() != dim || dim == 0 {
            return Err(bad(format!("declared {dim} values, found {}", vec.len())));
        }
        if vec.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite value".into()));
        }
        if out.insert(key, PromptEmbedding::from_tokens(vec![vec])).is_some() {
            return Err(bad("duplicate key".into()));
        }
    }
    Ok(out)
}

/// Inverse of [`parse_embeddings`] for the pooled vector of one prompt.
pub fn render_embedding_line(key: &PromptKey, e: &PromptEmbedding) -> String {
    let values: Vec<String> = e.mean.iter().map(|v| format!("{v:?}")).collect();
    format!(
        "{}|{}|{}|{}",
        key.0.key(),
        key.1.format("%Y%m%d%H%M"),
        e.dim(),
        values.join(",")
    )
}

pub fn load_embeddings(
    path: impl AsRef<Path>,
) -> Result<HashMap<PromptKey, PromptEmbedding>, EmbedError> {
    parse_embeddings(&std::fs::read_to_string(path)?)
}
