//! Summaries for augmented inputs, from a remote model server or the
//! built-in lead-k baseline.

mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpusbuild::AugmentedSample;
use crate::textkit::{sentence_spans, truncate_tokens};

pub use remote::RemoteSummarizer;

/// Sentences taken by the baseline when no `k` is given.
pub const DEFAULT_LEAD_K: usize = 3;

/// Decoding parameters forwarded verbatim to the backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeParams {
    pub max_input_tokens: usize,
    pub max_summary_tokens: usize,
    pub num_beams: usize,
    pub length_penalty: f64,
    pub repetition_penalty: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            max_input_tokens: 500,
            max_summary_tokens: 250,
            num_beams: 2,
            length_penalty: 8.0,
            repetition_penalty: 2.0,
        }
    }
}

impl DecodeParams {
    pub fn validate(&self) -> Result<(), SummarizeError> {
        let bad = |field: &'static str, reason: &str| {
            Err(SummarizeError::InvalidParams { field, reason: reason.to_string() })
        };
        if self.max_input_tokens == 0 {
            return bad("max_input_tokens", "must be positive");
        }
        if self.max_summary_tokens == 0 {
            return bad("max_summary_tokens", "must be positive");
        }
        if self.num_beams == 0 {
            return bad("num_beams", "must be at least 1");
        }
        if !(self.length_penalty.is_finite() && self.length_penalty > 0.0) {
            return bad("length_penalty", "must be a positive number");
        }
        if !(self.repetition_penalty.is_finite() && self.repetition_penalty > 0.0) {
            return bad("repetition_penalty", "must be a positive number");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryResult {
    pub cve_id: String,
    pub summary: String,
    pub backend_id: String,
    pub params: DecodeParams,
}

#[derive(Debug, Error)]
pub enum SummarizeError {
    #[error("invalid decode parameter {field}: {reason}")]
    InvalidParams { field: &'static str, reason: String },
    #[error("empty input text")]
    EmptyInput,
    #[error("summarization backend unavailable after {attempts} attempt(s): {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("summarization backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("summarization protocol violation: {0}")]
    Protocol(String),
}

/// First `k` sentences of `text`, then capped at `max_tokens`
/// statistics-space tokens. Always a prefix of `text`.
pub fn lead_k(text: &str, k: usize, max_tokens: usize) -> &str {
    let spans = sentence_spans(text);
    let end = match spans.get(k.min(spans.len()).wrapping_sub(1)) {
        Some(&(_, end)) => end,
        None => return "",
    };
    truncate_tokens(&text[..end], max_tokens)
}

pub enum Engine {
    Baseline { k: usize },
    Remote(RemoteSummarizer),
}

impl Engine {
    pub fn backend_id(&self) -> String {
        match self {
            Engine::Baseline { k } => format!("lead-{k}"),
            Engine::Remote(r) => r.endpoint().to_string(),
        }
    }

    fn summarize(&self, sample: &AugmentedSample, params: &DecodeParams) -> Result<SummaryResult, SummarizeError> {
        match self {
            Engine::Baseline { k } => {
                let summary = lead_k(&sample.input_text, *k, params.max_summary_tokens);
                if summary.is_empty() {
                    return Err(SummarizeError::EmptyInput);
                }
                Ok(SummaryResult {
                    cve_id: sample.cve_id.clone(),
                    summary: summary.to_string(),
                    backend_id: self.backend_id(),
                    params: *params,
                })
            }
            Engine::Remote(r) => r.summarize(&sample.cve_id, &sample.input_text, params),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFailure {
    pub index: usize,
    pub cve_id: String,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct BatchOutcome {
    /// Successful results in input order.
    pub results: Vec<SummaryResult>,
    pub failures: Vec<SummaryFailure>,
}

/// Summarize every sample. A failing sample is recorded and skipped.
/// At most `max_concurrent` samples are in flight at once.
pub fn batch_summarize(
    samples: &[AugmentedSample],
    engine: &Engine,
    params: &DecodeParams,
    max_concurrent: usize,
) -> Result<BatchOutcome, SummarizeError> {
    params.validate()?;
    let mut outcomes: Vec<Result<SummaryResult, SummarizeError>> = Vec::with_capacity(samples.len());
    match engine {
        Engine::Baseline { .. } => outcomes.extend(samples.iter().map(|s| engine.summarize(s, params))),
        Engine::Remote(_) => {
            for wave in samples.chunks(max_concurrent.max(1)) {
                std::thread::scope(|scope| {
                    let handles: Vec<_> =
                        wave.iter().map(|s| scope.spawn(move || engine.summarize(s, params))).collect();
                    outcomes.extend(handles.into_iter().map(|h| h.join().expect("summarize worker panicked")));
                });
            }
        }
    }
    let mut out = BatchOutcome::default();
    for (index, (sample, res)) in samples.iter().zip(outcomes).enumerate() {
        match res {
            Ok(r) => out.results.push(r),
            Err(e) => {
                log::warn!("{}: {e}", sample.cve_id);
                out.failures.push(SummaryFailure { index, cve_id: sample.cve_id.clone(), error: e.to_string() })
            }
        }
    }
    Ok(out)
}
