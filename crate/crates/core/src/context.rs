//! Resolves the prompt embedding of each record: imported vectors first,
//! then imported prompt text, then the template generator, all embedded
//! with the hashed embedder.

use std::collections::HashMap;

use thiserror::Error;

use crate::autodiff::Tensor;
use crate::embed::{EmbedError, HashedEmbedder, PromptEmbedding, TextEmbedder};
use crate::features::{NormalizationStats, Window};
use crate::hurdat2::{StormId, StormRecord};
use crate::model::{PromptMode, Sample};
use crate::prompt::{PromptBook, PromptKey, PromptText};

#[derive(Debug, Error)]
pub enum ContextError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("imported embedding for {key} has dimension {found}, model expects {expected}")]
    DimensionMismatch {
        key: String,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone)]
pub struct PromptContext {
    book: PromptBook,
    embeddings: HashMap<PromptKey, PromptEmbedding>,
    embedder: HashedEmbedder,
}

impl PromptContext {
    pub fn new(d_txt: usize) -> Result<Self, ContextError> {
        Ok(Self {
            book: PromptBook::default(),
            embeddings: HashMap::new(),
            embedder: HashedEmbedder::new(d_txt)?,
        })
    }

    pub fn with_prompts(mut self, prompts: HashMap<PromptKey, PromptText>) -> Self {
        self.book = PromptBook::new(prompts);
        self
    }

    pub fn with_embeddings(
        mut self,
        embeddings: HashMap<PromptKey, PromptEmbedding>,
    ) -> Result<Self, ContextError> {
        let expected = self.embedder.dim();
        if let Some(((id, ts), e)) = embeddings.iter().find(|(_, e)| e.dim() != expected) {
            return Err(ContextError::DimensionMismatch {
                key: format!("{}|{}", id.key(), ts.format("%Y%m%d%H%M")),
                expected,
                found: e.dim(),
            });
        }
        self.embeddings = embeddings;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.embedder.dim()
    }

    pub fn prompt(&self, id: &StormId, record: &StormRecord) -> PromptText {
        self.book.prompt(id, record)
    }

    pub fn embedding(&self, id: &StormId, record: &StormRecord) -> Result<PromptEmbedding, ContextError> {
        if let Some(e) = self.embeddings.get(&(id.clone(), record.timestamp)) {
            return Ok(e.clone());
        }
        Ok(self.embedder.embed(&self.prompt(id, record).text)?)
    }

    /// `[1, d_txt]` for [`PromptMode::Last`], `[T, d_txt]` for per-step.
    pub fn prompt_tensor(&self, window: &Window, mode: PromptMode) -> Result<Tensor, ContextError> {
        let records: &[StormRecord] = match mode {
            PromptMode::Last => std::slice::from_ref(window.last_record()),
            PromptMode::PerStep => &window.input_records,
        };
        let rows = records
            .iter()
            .map(|r| self.embedding(&window.storm, r).map(|e| e.mean))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Tensor::from_rows(&rows))
    }

    pub fn sample(
        &self,
        window: &Window,
        mode: PromptMode,
        stats: &NormalizationStats,
    ) -> Result<Sample, ContextError> {
        Ok(Sample::new(window, self.prompt_tensor(window, mode)?, stats))
    }
}
