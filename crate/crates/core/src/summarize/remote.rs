use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{DecodeParams, SummarizeError, SummaryResult};
use crate::http::{blocking_client, RetryPolicy};
use crate::textkit::truncate_tokens;

#[derive(Serialize)]
struct SummarizeRequest<'a> {
    text: &'a str,
    max_input_tokens: usize,
    max_summary_tokens: usize,
    num_beams: usize,
    length_penalty: f64,
    repetition_penalty: f64,
}

#[derive(Deserialize)]
struct SummarizeResponse {
    summary: String,
    model_id: String,
}

enum Attempt {
    Transport(reqwest::Error),
    Status(u16, String),
}

/// Client for a model server speaking the `/summarize` protocol.
#[derive(Debug)]
pub struct RemoteSummarizer {
    endpoint: String,
    client: reqwest::blocking::Client,
    retry: RetryPolicy,
}

impl RemoteSummarizer {
    pub fn new(base_url: &str) -> Self {
        Self {
            endpoint: format!("{}/summarize", base_url.trim_end_matches('/')),
            client: blocking_client(Duration::from_secs(300)),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.client = blocking_client(timeout);
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Summarize one text. 503 and transport failures are retried; other
    /// non-200 statuses fail at once. A summary longer than
    /// `max_summary_tokens` is cut back client-side.
    pub fn summarize(
        &self,
        cve_id: &str,
        text: &str,
        params: &DecodeParams,
    ) -> Result<SummaryResult, SummarizeError> {
        params.validate()?;
        if text.trim().is_empty() {
            return Err(SummarizeError::EmptyInput);
        }
        let body = SummarizeRequest {
            text,
            max_input_tokens: params.max_input_tokens,
            max_summary_tokens: params.max_summary_tokens,
            num_beams: params.num_beams,
            length_penalty: params.length_penalty,
            repetition_penalty: params.repetition_penalty,
        };
        let mut attempts = 0;
        let text = self
            .retry
            .run(
                |n| {
                    attempts = n;
                    let resp = self.client.post(&self.endpoint).json(&body).send().map_err(Attempt::Transport)?;
                    let status = resp.status().as_u16();
                    let text = resp.text().map_err(Attempt::Transport)?;
                    if status == 200 {
                        Ok(text)
                    } else {
                        Err(Attempt::Status(status, text))
                    }
                },
                |e| match e {
                    Attempt::Transport(e) => e.is_timeout() || e.is_connect() || e.is_request(),
                    Attempt::Status(s, _) => *s == 503,
                },
            )
            .map_err(|e| match e {
                Attempt::Transport(e) => SummarizeError::Unavailable { attempts, message: e.to_string() },
                Attempt::Status(503, body) => SummarizeError::Unavailable {
                    attempts,
                    message: format!("HTTP 503: {body}"),
                },
                Attempt::Status(status, body) => SummarizeError::Status { status, body },
            })?;
        let parsed: SummarizeResponse =
            serde_json::from_str(&text).map_err(|e| SummarizeError::Protocol(e.to_string()))?;
        let summary = truncate_tokens(parsed.summary.trim(), params.max_summary_tokens);
        if summary.is_empty() {
            return Err(SummarizeError::Protocol("empty summary".into()));
        }
        Ok(SummaryResult {
            cve_id: cve_id.to_string(),
            summary: summary.to_string(),
            backend_id: parsed.model_id,
            params: *params,
        })
    }
}
