//! HTTP access behind a trait so every stage can run against archived
//! fixtures instead of the network.
//!
//! Fixture directory layout: one file per URL named by the lowercase hex
//! SHA-256 digest of the URL string, holding the raw response body, plus an
//! `index.json` mapping each digest to the URL, status code and headers.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::http::blocking_client;

pub const FIXTURE_INDEX: &str = "index.json";

#[derive(Debug, Clone, PartialEq)]
pub struct RawResponse {
    pub status: u16,
    pub content_type: Option<String>,
    /// URL after redirects.
    pub final_url: String,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransportError {
    #[error("TLS certificate validation failed: {0}")]
    Tls(String),
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("no archived response for {0}")]
    MissingFixture(String),
    #[error("transport error: {0}")]
    Other(String),
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, TransportError::Timeout | TransportError::Connect(_) | TransportError::Other(_))
    }
}

pub trait Fetcher: Send + Sync {
    fn get(&self, url: &str, headers: &[(String, String)]) -> Result<RawResponse, TransportError>;

    /// Offline fetchers skip rate limiting and backoff sleeps.
    fn is_offline(&self) -> bool {
        false
    }
}

/// Lowercase hex SHA-256 of the URL string; the fixture file name.
pub fn url_digest(url: &str) -> String {
    Sha256::digest(url.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// TLS-verifying network fetcher. Follows at most five redirects; every hop
/// goes through certificate validation.
pub struct LiveFetcher {
    client: reqwest::blocking::Client,
}

impl LiveFetcher {
    pub fn new(timeout: Duration) -> Self {
        Self { client: blocking_client(timeout) }
    }
}

impl Fetcher for LiveFetcher {
    fn get(&self, url: &str, headers: &[(String, String)]) -> Result<RawResponse, TransportError> {
        let mut req = self.client.get(url);
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let resp = req.send().map_err(|e| classify(&e))?;
        let status = resp.status().as_u16();
        let final_url = resp.url().to_string();
        let content_type = resp
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let body = resp.bytes().map_err(|e| classify(&e))?.to_vec();
        Ok(RawResponse { status, content_type, final_url, body })
    }
}

/// Map a reqwest failure onto the transport taxonomy. Certificate failures
/// surface as an `io::Error` wrapping a rustls error somewhere down the
/// source chain.
fn classify(err: &reqwest::Error) -> TransportError {
    if err.is_timeout() {
        return TransportError::Timeout;
    }
    let mut source: Option<&(dyn std::error::Error + 'static)> = Some(err);
    while let Some(e) = source {
        if let Some(tls) = e.downcast_ref::<rustls::Error>() {
            return TransportError::Tls(tls.to_string());
        }
        if let Some(inner) = e.downcast_ref::<io::Error>().and_then(|io| io.get_ref()) {
            if let Some(tls) = inner.downcast_ref::<rustls::Error>() {
                return TransportError::Tls(tls.to_string());
            }
        }
        let text = e.to_string();
        if text.contains("certificate") {
            return TransportError::Tls(text);
        }
        if let Some(io) = e.downcast_ref::<io::Error>() {
            if io.kind() == io::ErrorKind::TimedOut {
                return TransportError::Timeout;
            }
        }
        source = e.source();
    }
    if err.is_connect() {
        TransportError::Connect(err.to_string())
    } else {
        TransportError::Other(err.to_string())
    }
}

/// One archived exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_url: Option<String>,
    /// Transport failure instead of a response: `tls_invalid`, `timeout` or
    /// `connect`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("fixture index {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("fixture index {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
}

/// Replays responses from a fixture directory.
pub struct FixtureFetcher {
    dir: PathBuf,
    index: BTreeMap<String, FixtureEntry>,
}

impl FixtureFetcher {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, FixtureError> {
        let dir = dir.as_ref().to_path_buf();
        let path = dir.join(FIXTURE_INDEX);
        let raw = fs::read_to_string(&path).map_err(|source| FixtureError::Io { path: path.clone(), source })?;
        let index = serde_json::from_str(&raw).map_err(|source| FixtureError::Parse { path, source })?;
        Ok(Self { dir, index })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

impl Fetcher for FixtureFetcher {
    fn get(&self, url: &str, _headers: &[(String, String)]) -> Result<RawResponse, TransportError> {
        let digest = url_digest(url);
        let entry = self
            .index
            .get(&digest)
            .ok_or_else(|| TransportError::MissingFixture(url.to_string()))?;
        match entry.error.as_deref() {
            Some("tls_invalid") => return Err(TransportError::Tls("archived certificate failure".into())),
            Some("timeout") => return Err(TransportError::Timeout),
            Some(other) => return Err(TransportError::Connect(other.to_string())),
            None => {}
        }
        let body = fs::read(self.dir.join(&digest)).map_err(|_| TransportError::MissingFixture(url.to_string()))?;
        Ok(RawResponse {
            status: entry.status.unwrap_or(200),
            content_type: entry.content_type.clone(),
            final_url: entry.final_url.clone().unwrap_or_else(|| url.to_string()),
            body,
        })
    }

    fn is_offline(&self) -> bool {
        true
    }
}

/// Writes exchanges into a fixture directory. The index is rewritten on
/// every record so an interrupted run still leaves a usable archive.
pub struct FixtureWriter {
    dir: PathBuf,
    index: Mutex<BTreeMap<String, FixtureEntry>>,
}

impl FixtureWriter {
    /// Open `dir`, keeping any entries already archived there.
    pub fn create(dir: impl AsRef<Path>) -> io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let existing = fs::read_to_string(dir.join(FIXTURE_INDEX))
            .ok()
            .and_then(|raw| serde_json::from_str(&raw).ok())
            .unwrap_or_default();
        Ok(Self { dir, index: Mutex::new(existing) })
    }

    pub fn add_response(&self, url: &str, resp: &RawResponse) -> io::Result<()> {
        let digest = url_digest(url);
        fs::write(self.dir.join(&digest), &resp.body)?;
        let entry = FixtureEntry {
            url: url.to_string(),
            status: Some(resp.status),
            content_type: resp.content_type.clone(),
            final_url: (resp.final_url != url).then(|| resp.final_url.clone()),
            error: None,
        };
        self.insert(digest, entry)
    }

    pub fn add_error(&self, url: &str, err: &TransportError) -> io::Result<()> {
        let kind = match err {
            TransportError::Tls(_) => "tls_invalid",
            TransportError::Timeout => "timeout",
            _ => "connect",
        };
        let entry = FixtureEntry {
            url: url.to_string(),
            status: None,
            content_type: None,
            final_url: None,
            error: Some(kind.to_string()),
        };
        self.insert(url_digest(url), entry)
    }

    fn insert(&self, digest: String, entry: FixtureEntry) -> io::Result<()> {
        let mut index = self.index.lock().unwrap();
        index.insert(digest, entry);
        let json = serde_json::to_string_pretty(&*index)?;
        fs::write(self.dir.join(FIXTURE_INDEX), json + "\n")
    }
}

/// Pass-through fetcher that archives everything it sees.
pub struct RecordingFetcher<F> {
    inner: F,
    writer: FixtureWriter,
}

impl<F: Fetcher> RecordingFetcher<F> {
    pub fn new(inner: F, writer: FixtureWriter) -> Self {
        Self { inner, writer }
    }
}

impl<F: Fetcher> Fetcher for RecordingFetcher<F> {
    fn get(&self, url: &str, headers: &[(String, String)]) -> Result<RawResponse, TransportError> {
        let result = self.inner.get(url, headers);
        let archived = match &result {
            Ok(resp) => self.writer.add_response(url, resp),
            Err(e) => self.writer.add_error(url, e),
        };
        if let Err(e) = archived {
            log::warn!("could not archive {url}: {e}");
        }
        result
    }

    fn is_offline(&self) -> bool {
        self.inner.is_offline()
    }
}
