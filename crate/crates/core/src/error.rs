use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, BbmError>;

#[derive(Debug, Error)]
pub enum BbmError {
    #[error("empty corpus: every document was removed by preprocessing")]
    EmptyCorpus,

    #[error("no evaluable documents (all test documents have 4 or fewer tokens)")]
    NoEvaluableDocuments,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("non-finite value in {stage}{}", .document.map(|d| format!(" (document {d})")).unwrap_or_default())]
    NonFinite {
        stage: &'static str,
        document: Option<usize>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl BbmError {
    /// Attaches a document index to a numerical error; other variants pass through.
    pub fn with_document(self, doc: usize) -> Self {
        match self {
            BbmError::NonFinite { stage, document: None } => BbmError::NonFinite {
                stage,
                document: Some(doc),
            },
            other => other,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        BbmError::InvalidParameter(msg.into())
    }
}
