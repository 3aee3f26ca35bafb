use std::sync::LazyLock;

use rayon::prelude::*;
use regex::bytes::Regex;
use scraper::{Html, Selector};
use serde::{Deserialize, Serialize};

use super::{FetchStatus, Fetcher, HarvestConfig, ReferenceDoc, TransportError, VulnRecord};
use crate::http::RetryPolicy;

static P_SELECTOR: LazyLock<Selector> = LazyLock::new(|| Selector::parse("p").unwrap());

static META_CHARSET: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?i)<meta[^>]*charset\s*=\s*["']?([A-Za-z0-9_\-:.]+)"#).unwrap());

/// Text of the first `limit` `<p>` elements in document order, nested markup
/// flattened and whitespace collapsed. Parsing is lenient: broken markup is
/// repaired the way a browser would, never rejected.
pub fn extract_paragraphs(html: &str, limit: usize) -> Vec<String> {
    let doc = Html::parse_document(html);
    doc.select(&P_SELECTOR)
        .take(limit)
        .map(|p| {
            let text: String = p.text().collect();
            text.split_whitespace().collect::<Vec<_>>().join(" ")
        })
        .collect()
}

fn charset_param(content_type: &str) -> Option<&str> {
    content_type
        .split(';')
        .skip(1)
        .filter_map(|p| p.split_once('='))
        .find(|(k, _)| k.trim().eq_ignore_ascii_case("charset"))
        .map(|(_, v)| v.trim().trim_matches('"'))
}

/// Decode with the declared charset (header first, then `<meta>`), falling
/// back to lossy UTF-8.
pub fn decode_body(body: &[u8], content_type: Option<&str>) -> String {
    let head = &body[..body.len().min(2048)];
    let label = content_type
        .and_then(charset_param)
        .map(|s| s.as_bytes().to_vec())
        .or_else(|| META_CHARSET.captures(head).map(|c| c[1].to_vec()));
    match label.and_then(|l| encoding_rs::Encoding::for_label(&l)) {
        Some(enc) => enc.decode(body).0.into_owned(),
        None => String::from_utf8_lossy(body).into_owned(),
    }
}

fn is_html(content_type: Option<&str>, body: &[u8]) -> bool {
    match content_type {
        Some(ct) => {
            let mime = ct.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
            mime == "text/html" || mime == "application/xhtml+xml"
        }
        None => body.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'<'),
    }
}

enum RefError {
    Transport(TransportError),
    Status(u16),
}

/// Fetch one reference page and pull out its paragraphs.
///
/// Failures never propagate: they become the document's `fetch_status` and
/// the paragraph list stays empty.
pub fn fetch_reference(url: &str, cfg: &HarvestConfig, fetcher: &dyn Fetcher) -> ReferenceDoc {
    match url::Url::parse(url) {
        Ok(u) if matches!(u.scheme(), "http" | "https") => {}
        _ => {
            log::warn!("not an http(s) URL: {url}");
            return ReferenceDoc::failed(url, FetchStatus::HttpError);
        }
    }
    let retry = if fetcher.is_offline() {
        RetryPolicy::immediate(cfg.retry_attempts)
    } else {
        cfg.retry_policy()
    };
    let outcome = retry.run(
        |_| {
            let resp = fetcher.get(url, &[]).map_err(RefError::Transport)?;
            if resp.status >= 400 {
                return Err(RefError::Status(resp.status));
            }
            Ok(resp)
        },
        |e| match e {
            RefError::Transport(t) => t.is_retryable(),
            RefError::Status(s) => *s >= 500 || *s == 429,
        },
    );
    let resp = match outcome {
        Ok(r) => r,
        Err(RefError::Transport(TransportError::Tls(why))) => {
            log::info!("{url}: certificate rejected ({why})");
            return ReferenceDoc::failed(url, FetchStatus::TlsInvalid);
        }
        Err(RefError::Transport(TransportError::Timeout)) => {
            return ReferenceDoc::failed(url, FetchStatus::Timeout);
        }
        Err(RefError::Transport(e)) => {
            log::info!("{url}: {e}");
            return ReferenceDoc::failed(url, FetchStatus::HttpError);
        }
        Err(RefError::Status(s)) => {
            log::info!("{url}: HTTP {s}");
            return ReferenceDoc::failed(url, FetchStatus::HttpError);
        }
    };
    if cfg.require_https && !resp.final_url.starts_with("https://") {
        return ReferenceDoc::failed(url, FetchStatus::TlsInvalid);
    }
    if !is_html(resp.content_type.as_deref(), &resp.body) {
        return ReferenceDoc::failed(url, FetchStatus::NonHtml);
    }
    let html = decode_body(&resp.body, resp.content_type.as_deref());
    ReferenceDoc {
        source_url: url.to_string(),
        fetch_status: FetchStatus::Ok,
        paragraphs: extract_paragraphs(&html, cfg.paragraph_limit),
    }
}

/// A CVE record together with its scraped reference documents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrapedRecord {
    #[serde(flatten)]
    pub record: VulnRecord,
    pub docs: Vec<ReferenceDoc>,
}

/// Scrape every reference of every record on a pool of
/// `max_parallel_fetches` workers. Output order matches input order.
pub fn scrape_records(
    records: &[VulnRecord],
    cfg: &HarvestConfig,
    fetcher: &dyn Fetcher,
) -> Vec<ScrapedRecord> {
    let jobs: Vec<(usize, &str)> = records
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.references.iter().map(move |u| (i, u.as_str())))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.max_parallel_fetches.max(1))
        .build()
        .expect("fetch pool");
    let docs: Vec<(usize, ReferenceDoc)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, url)| (i, fetch_reference(url, cfg, fetcher)))
            .collect()
    });
    let mut out: Vec<ScrapedRecord> = records
        .iter()
        .map(|r| ScrapedRecord { record: r.clone(), docs: Vec::new() })
        .collect();
    for (i, doc) in docs {
        out[i].docs.push(doc);
    }
    out
}
