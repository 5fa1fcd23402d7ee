//! Response groups: one query plus the candidate responses sampled for it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulas::{extract_formulas, FormulaSet};
use crate::text::{tokenize, TokenSequence};

#[derive(Debug, Error, PartialEq)]
pub enum GroupError {
    #[error("a response group needs at least 2 responses, got {0}")]
    TooSmall(usize),
}

/// One candidate response with its derived views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub raw_text: String,
    pub tokens: TokenSequence,
    pub formulas: FormulaSet,
    pub correct: bool,
}

impl ResponseRecord {
    /// Tokenizes and extracts formulas from raw text.
    pub fn from_text(raw_text: &str, correct: bool) -> Self {
        Self {
            raw_text: raw_text.to_string(),
            tokens: tokenize(raw_text),
            formulas: extract_formulas(raw_text),
            correct,
        }
    }
}

/// A query and its G candidate responses; the unit all diversity metrics
/// are defined over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseGroup {
    pub query_id: String,
    pub query_text: String,
    pub responses: Vec<ResponseRecord>,
}

impl ResponseGroup {
    pub fn new(
        query_id: impl Into<String>,
        query_text: impl Into<String>,
        responses: Vec<ResponseRecord>,
    ) -> Result<Self, GroupError> {
        if responses.len() < 2 {
            return Err(GroupError::TooSmall(responses.len()));
        }
        Ok(Self { query_id: query_id.into(), query_text: query_text.into(), responses })
    }

    pub fn from_texts(
        query_id: impl Into<String>,
        query_text: impl Into<String>,
        texts: &[(&str, bool)],
    ) -> Result<Self, GroupError> {
        Self::new(
            query_id,
            query_text,
            texts.iter().map(|(t, c)| ResponseRecord::from_text(t, *c)).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn token_lengths(&self) -> Vec<usize> {
        self.responses.iter().map(|r| r.tokens.len()).collect()
    }

    pub fn correctness(&self) -> Vec<bool> {
        self.responses.iter().map(|r| r.correct).collect()
    }
}
