//! ROUGE-1, embedding similarity between predictions and targets, and the
//! human grading protocol.

mod human;
mod rouge;
mod similarity;

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::jsonl::{read_jsonl, JsonlError};
use crate::semgate::EmbedError;

pub use human::{
    human_eval_aggregate, human_eval_session, parse_grades, read_log, reference_human_eval, render_human_table,
    select_items, EvalItem, HumanEvalRecord, HumanEvalSummary, SessionOutcome, DEFAULT_SESSION_SIZE,
};
pub use rouge::{
    corpus_rouge, reference_rouge_row, render_rouge_table, rouge1, rouge1_tokens, unigram_overlap, RougeRow,
    RougeScore,
};
pub use similarity::{bin_index, similarity_report, SimilarityReport, BIN_WIDTH, HISTOGRAM_BINS};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    Empty,
    #[error("no target for prediction {0}")]
    MissingTarget(String),
    #[error("{0}")]
    Schema(String),
    #[error("embedding failed: {0}")]
    Embedding(String),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<EmbedError> for EvalError {
    fn from(e: EmbedError) -> Self {
        EvalError::Embedding(e.to_string())
    }
}

/// A prediction line: `summary` from summarize output, or `target_summary`
/// when a corpus file is passed as predictions.
#[derive(Debug, Clone, Deserialize)]
struct PredictionLine {
    cve_id: String,
    summary: Option<String>,
    target_summary: Option<String>,
}

/// `(cve_id, summary)` pairs from a summarize output or corpus file.
pub fn read_predictions(path: &Path) -> Result<Vec<(String, String)>, EvalError> {
    let lines: Vec<PredictionLine> = read_jsonl(path)?;
    lines
        .into_iter()
        .enumerate()
        .map(|(i, l)| match l.summary.or(l.target_summary) {
            Some(s) => Ok((l.cve_id, s)),
            None => Err(EvalError::Schema(format!(
                "{}: record {} ({}) has neither `summary` nor `target_summary`",
                path.display(),
                i + 1,
                l.cve_id
            ))),
        })
        .collect()
}

/// Join predictions to targets by CVE id, keeping prediction order.
pub fn pair_by_id<'a>(
    predictions: &'a [(String, String)],
    targets: &'a BTreeMap<String, String>,
) -> Result<Vec<(&'a str, &'a str)>, EvalError> {
    predictions
        .iter()
        .map(|(id, p)| match targets.get(id) {
            Some(t) => Ok((p.as_str(), t.as_str())),
            None => Err(EvalError::MissingTarget(id.clone())),
        })
        .collect()
}
