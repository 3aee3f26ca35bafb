//! CVE record listing and reference-page scraping.

mod fetch;
mod nvd;
mod reference;

use std::sync::LazyLock;
use std::time::Duration;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::http::RetryPolicy;

pub use fetch::{
    url_digest, Fetcher, FixtureEntry, FixtureError, FixtureFetcher, FixtureWriter, LiveFetcher,
    RawResponse, RecordingFetcher, TransportError, FIXTURE_INDEX,
};
pub use nvd::{date_windows, list_cves, page_url, HarvestCheckpoint, HarvestError, NVD_API_BASE};
pub use reference::{decode_body, extract_paragraphs, fetch_reference, scrape_records, ScrapedRecord};

static CVE_ID_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^CVE-\d{4}-\d{4,}$").unwrap());

pub fn is_valid_cve_id(id: &str) -> bool {
    CVE_ID_RE.is_match(id)
}

/// One published CVE.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnRecord {
    pub cve_id: String,
    pub description: String,
    pub references: Vec<String>,
    pub published: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FetchStatus {
    Ok,
    TlsInvalid,
    HttpError,
    Timeout,
    NonHtml,
}

/// Paragraph text scraped from one reference link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceDoc {
    pub source_url: String,
    pub fetch_status: FetchStatus,
    pub paragraphs: Vec<String>,
}

impl ReferenceDoc {
    pub fn failed(source_url: &str, fetch_status: FetchStatus) -> Self {
        Self { source_url: source_url.to_string(), fetch_status, paragraphs: Vec::new() }
    }

    /// Paragraphs usable downstream; empty unless the fetch succeeded.
    pub fn usable_paragraphs(&self) -> &[String] {
        if self.fetch_status == FetchStatus::Ok {
            &self.paragraphs
        } else {
            &[]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarvestConfig {
    pub date_start: NaiveDate,
    pub date_end: NaiveDate,
    pub paragraph_limit: usize,
    pub request_timeout_secs: u64,
    pub max_parallel_fetches: usize,
    /// Database API requests per second.
    pub rate_limit: f64,
    pub results_per_page: usize,
    pub api_base: String,
    /// Pages whose final URL is not HTTPS are treated like certificate
    /// failures.
    pub require_https: bool,
    pub retry_attempts: u32,
    pub retry_base_delay_ms: u64,
}

impl Default for HarvestConfig {
    fn default() -> Self {
        Self {
            date_start: NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(),
            date_end: NaiveDate::from_ymd_opt(2021, 12, 31).unwrap(),
            paragraph_limit: 100,
            request_timeout_secs: 30,
            max_parallel_fetches: 8,
            // public quota without a key: 5 requests per rolling 30 s
            rate_limit: 5.0 / 30.0,
            results_per_page: 2000,
            api_base: NVD_API_BASE.to_string(),
            require_https: true,
            retry_attempts: 3,
            retry_base_delay_ms: 500,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("invalid harvest configuration: {0}")]
pub struct ConfigError(pub String);

impl HarvestConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.date_start > self.date_end {
            return Err(ConfigError(format!("date_start {} is after date_end {}", self.date_start, self.date_end)));
        }
        if self.paragraph_limit == 0 {
            return Err(ConfigError("paragraph_limit must be at least 1".into()));
        }
        if self.max_parallel_fetches == 0 {
            return Err(ConfigError("max_parallel_fetches must be at least 1".into()));
        }
        if self.results_per_page == 0 {
            return Err(ConfigError("results_per_page must be at least 1".into()));
        }
        if !(self.rate_limit > 0.0) {
            return Err(ConfigError("rate_limit must be positive".into()));
        }
        Ok(())
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs(self.request_timeout_secs)
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            attempts: self.retry_attempts,
            base_delay: Duration::from_millis(self.retry_base_delay_ms),
        }
    }
}
