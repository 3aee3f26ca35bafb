//! Paginated listing against the NVD CVE 2.0 JSON API.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{is_valid_cve_id, ConfigError, Fetcher, HarvestConfig, TransportError, VulnRecord};
use crate::http::RetryPolicy;

pub const NVD_API_BASE: &str = "https://services.nvd.nist.gov/rest/json/cves/2.0";

/// The API rejects publication ranges longer than this.
const MAX_WINDOW_DAYS: u64 = 120;

/// Where an aborted listing stopped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestCheckpoint {
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub start_index: usize,
    pub records_collected: usize,
}

#[derive(Debug, Error)]
pub enum HarvestError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("listing aborted at {url}: {cause}")]
    Aborted {
        url: String,
        cause: String,
        partial: Vec<VulnRecord>,
        checkpoint: HarvestCheckpoint,
    },
}

/// Split an inclusive date range into API-sized inclusive windows.
pub fn date_windows(start: NaiveDate, end: NaiveDate) -> Vec<(NaiveDate, NaiveDate)> {
    let mut windows = Vec::new();
    let mut from = start;
    while from <= end {
        let to = from
            .checked_add_days(Days::new(MAX_WINDOW_DAYS - 1))
            .map_or(end, |d| d.min(end));
        windows.push((from, to));
        match to.checked_add_days(Days::new(1)) {
            Some(next) => from = next,
            None => break,
        }
    }
    windows
}

pub fn page_url(base: &str, window: (NaiveDate, NaiveDate), start_index: usize, per_page: usize) -> String {
    let params = [
        ("pubStartDate", format!("{}T00:00:00.000", window.0)),
        ("pubEndDate", format!("{}T23:59:59.999", window.1)),
        ("resultsPerPage", per_page.to_string()),
        ("startIndex", start_index.to_string()),
    ];
    url::Url::parse_with_params(base, &params)
        .map(|u| u.to_string())
        .unwrap_or_else(|_| format!("{base}?invalid"))
}

struct RateLimiter {
    interval: Duration,
    last: Option<Instant>,
    enabled: bool,
}

impl RateLimiter {
    fn wait(&mut self) {
        if !self.enabled {
            return;
        }
        if let Some(last) = self.last {
            let elapsed = last.elapsed();
            if elapsed < self.interval {
                std::thread::sleep(self.interval - elapsed);
            }
        }
        self.last = Some(Instant::now());
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Page {
    total_results: usize,
    #[serde(default)]
    vulnerabilities: Vec<Value>,
}

enum PageError {
    Transport(TransportError),
    Status(u16),
}

impl PageError {
    fn retryable(&self) -> bool {
        match self {
            PageError::Transport(e) => e.is_retryable(),
            // the API signals throttling with 403 as well as 429
            PageError::Status(s) => *s >= 500 || *s == 429 || *s == 403,
        }
    }

    fn describe(&self) -> String {
        match self {
            PageError::Transport(e) => e.to_string(),
            PageError::Status(s) => format!("HTTP {s}"),
        }
    }
}

/// Every CVE published in `[date_start, date_end]`, deduplicated by id and
/// ordered by publication date (API order within a day).
///
/// Records that cannot be parsed are skipped with a warning. A page that
/// still fails after retries aborts the listing; the error carries the
/// records gathered so far and a checkpoint.
pub fn list_cves(
    cfg: &HarvestConfig,
    fetcher: &dyn Fetcher,
    api_key: Option<&str>,
) -> Result<Vec<VulnRecord>, HarvestError> {
    cfg.validate()?;
    let headers: Vec<(String, String)> =
        api_key.map(|k| vec![("apiKey".to_string(), k.to_string())]).unwrap_or_default();
    let retry = if fetcher.is_offline() {
        RetryPolicy::immediate(cfg.retry_attempts)
    } else {
        cfg.retry_policy()
    };
    let mut limiter = RateLimiter {
        interval: Duration::from_secs_f64(1.0 / cfg.rate_limit),
        last: None,
        enabled: !fetcher.is_offline(),
    };

    let mut seen = HashSet::new();
    let mut records: Vec<VulnRecord> = Vec::new();
    for window in date_windows(cfg.date_start, cfg.date_end) {
        let mut start_index = 0;
        loop {
            let url = page_url(&cfg.api_base, window, start_index, cfg.results_per_page);
            let abort = |cause: String, records: Vec<VulnRecord>| HarvestError::Aborted {
                url: url.clone(),
                cause,
                checkpoint: HarvestCheckpoint {
                    window_start: window.0,
                    window_end: window.1,
                    start_index,
                    records_collected: records.len(),
                },
                partial: records,
            };
            let body = retry.run(
                |_| {
                    limiter.wait();
                    let resp = fetcher.get(&url, &headers).map_err(PageError::Transport)?;
                    if resp.status >= 400 {
                        return Err(PageError::Status(resp.status));
                    }
                    Ok(resp.body)
                },
                PageError::retryable,
            );
            let body = match body {
                Ok(b) => b,
                Err(e) => return Err(abort(e.describe(), records)),
            };
            let page: Page = match serde_json::from_slice(&body) {
                Ok(p) => p,
                Err(e) => return Err(abort(format!("malformed page: {e}"), records)),
            };
            let page_len = page.vulnerabilities.len();
            for item in &page.vulnerabilities {
                match parse_record(item) {
                    Ok(rec) if rec.published < cfg.date_start || rec.published > cfg.date_end => {
                        log::debug!("{} published {} outside range", rec.cve_id, rec.published);
                    }
                    Ok(rec) => {
                        if seen.insert(rec.cve_id.clone()) {
                            records.push(rec);
                        }
                    }
                    Err(why) => log::warn!("skipping malformed record: {why}"),
                }
            }
            start_index += page_len;
            if page_len == 0 || start_index >= page.total_results {
                break;
            }
        }
    }
    records.sort_by_key(|r| r.published);
    Ok(records)
}

fn parse_record(item: &Value) -> Result<VulnRecord, String> {
    let cve = item.get("cve").ok_or("missing cve object")?;
    let id = cve.get("id").and_then(Value::as_str).ok_or("missing id")?;
    if !is_valid_cve_id(id) {
        return Err(format!("bad id {id:?}"));
    }
    let published = cve
        .get("published")
        .and_then(Value::as_str)
        .and_then(|s| s.get(..10))
        .and_then(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok())
        .ok_or_else(|| format!("{id}: missing or bad published date"))?;
    let description = cve
        .get("descriptions")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
        .find(|d| d.get("lang").and_then(Value::as_str) == Some("en"))
        .and_then(|d| d.get("value").and_then(Value::as_str))
        .map(str::trim)
        .filter(|d| !d.is_empty())
        .ok_or_else(|| format!("{id}: no English description"))?;
    let references = cve
        .get("references")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
        .filter_map(|r| r.get("url").and_then(Value::as_str))
        .map(str::to_string)
        .collect();
    Ok(VulnRecord {
        cve_id: id.to_string(),
        description: description.to_string(),
        references,
        published,
    })
}
