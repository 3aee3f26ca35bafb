//! Shared helpers for the integration and acceptance suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;

use chrono::NaiveDate;
use serde::Deserialize;
use serde_json::{json, Value};
use vulnaug::harvest::{page_url, FixtureWriter, HarvestConfig, RawResponse, TransportError};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn e2e_dir() -> PathBuf {
    fixtures().join("e2e")
}

#[derive(Deserialize)]
pub struct E2eSource {
    pub api_base: String,
    pub date_start: NaiveDate,
    pub date_end: NaiveDate,
    pub results_per_page: usize,
    pub cves: Vec<Value>,
}

#[derive(Deserialize)]
struct PageSource {
    url: String,
    file: Option<String>,
    status: Option<u16>,
    content_type: Option<String>,
    final_url: Option<String>,
    error: Option<String>,
}

pub fn e2e_source() -> E2eSource {
    serde_json::from_str(&std::fs::read_to_string(e2e_dir().join("cves.json")).unwrap()).unwrap()
}

pub fn e2e_harvest_config() -> HarvestConfig {
    let src = e2e_source();
    HarvestConfig {
        api_base: src.api_base,
        date_start: src.date_start,
        date_end: src.date_end,
        results_per_page: src.results_per_page,
        ..HarvestConfig::default()
    }
}

/// Shape a fixture CVE entry like a database API record.
fn api_record(cve: &Value) -> Value {
    let mut inner = json!({
        "id": cve["id"],
        "published": cve["published"],
        "references": cve["references"].as_array().unwrap().iter().map(|u| json!({"url": u})).collect::<Vec<_>>(),
    });
    if let Some(desc) = cve.get("description") {
        inner["descriptions"] = json!([{"lang": "en", "value": desc}]);
    }
    json!({ "cve": inner })
}

/// Paged API responses for `cves`, as `(url, body)`.
pub fn api_pages(
    base: &str,
    window: (NaiveDate, NaiveDate),
    cves: &[Value],
    per_page: usize,
) -> Vec<(String, Vec<u8>)> {
    let records: Vec<Value> = cves.iter().map(api_record).collect();
    let mut pages = Vec::new();
    let mut start = 0;
    loop {
        let chunk: Vec<Value> = records.iter().skip(start).take(per_page).cloned().collect();
        let body = json!({
            "resultsPerPage": chunk.len(),
            "startIndex": start,
            "totalResults": records.len(),
            "format": "NVD_CVE",
            "version": "2.0",
            "vulnerabilities": chunk,
        });
        pages.push((page_url(base, window, start, per_page), serde_json::to_vec_pretty(&body).unwrap()));
        start += per_page;
        if start >= records.len() {
            break;
        }
    }
    pages
}

/// Write the 10-CVE archive (API pages plus reference pages) into `dir`.
pub fn build_e2e_archive(dir: &Path) {
    let src = e2e_source();
    let writer = FixtureWriter::create(dir).unwrap();
    for (url, body) in api_pages(&src.api_base, (src.date_start, src.date_end), &src.cves, src.results_per_page) {
        let resp = RawResponse { status: 200, content_type: Some("application/json".into()), final_url: url.clone(), body };
        writer.add_response(&url, &resp).unwrap();
    }
    let pages: Vec<PageSource> =
        serde_json::from_str(&std::fs::read_to_string(e2e_dir().join("pages.json")).unwrap()).unwrap();
    for p in pages {
        match p.error.as_deref() {
            Some("tls_invalid") => writer.add_error(&p.url, &TransportError::Tls("self-signed".into())).unwrap(),
            Some("timeout") => writer.add_error(&p.url, &TransportError::Timeout).unwrap(),
            Some(other) => panic!("unknown fixture error {other}"),
            None => {
                let body = std::fs::read(e2e_dir().join("pages").join(p.file.as_ref().unwrap())).unwrap();
                let resp = RawResponse {
                    status: p.status.unwrap_or(200),
                    content_type: p.content_type,
                    final_url: p.final_url.unwrap_or_else(|| p.url.clone()),
                    body,
                };
                writer.add_response(&p.url, &resp).unwrap();
            }
        }
    }
}

pub fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            out.insert(entry.file_name().to_string_lossy().into_owned(), std::fs::read(entry.path()).unwrap());
        }
    }
    out
}

/// A response scripted for [`serve`].
pub struct Reply {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(status: u16, body: Value) -> Self {
        Reply { status, content_type: "application/json", body: body.to_string().into_bytes() }
    }

    pub fn html(body: &str) -> Self {
        Reply { status: 200, content_type: "text/html; charset=utf-8", body: body.as_bytes().to_vec() }
    }
}

/// A request as seen by [`serve`].
#[derive(Debug, Clone)]
pub struct Seen {
    pub method: String,
    pub url: String,
    pub body: String,
}

pub type Handler = dyn Fn(&Seen) -> Reply + Send + Sync;

/// Plain-HTTP server on an ephemeral port answering with `handler`. Returns
/// the base URL and a log of every request. The server thread lives until
/// the process exits.
pub fn serve(handler: impl Fn(&Seen) -> Reply + Send + Sync + 'static) -> (String, Arc<std::sync::Mutex<Vec<Seen>>>) {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let port = server.server_addr().to_ip().unwrap().port();
    let seen = Arc::new(std::sync::Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handler: Arc<Handler> = Arc::new(handler);
    thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let mut body = String::new();
            let _ = req.as_reader().read_to_string(&mut body);
            let s = Seen { method: req.method().to_string(), url: req.url().to_string(), body };
            log.lock().unwrap().push(s.clone());
            let handler = Arc::clone(&handler);
            // answer on a worker so slow handlers do not block other clients
            thread::spawn(move || {
                let reply = handler(&s);
                let header = tiny_http::Header::from_bytes("Content-Type", reply.content_type).unwrap();
                let resp = tiny_http::Response::from_data(reply.body).with_status_code(reply.status).with_header(header);
                let _ = req.respond(resp);
            });
        }
    });
    (format!("http://127.0.0.1:{port}"), seen)
}

/// HTTPS server with a freshly generated self-signed certificate. Every
/// connection gets a fixed HTML page; clients that verify certificates must
/// reject it during the handshake.
pub fn serve_self_signed() -> String {
    let _ = rustls::crypto::aws_lc_rs::default_provider().install_default();
    let cert = rcgen::generate_simple_self_signed(vec!["localhost".to_string()]).unwrap();
    let cert_der = cert.cert.der().clone();
    let key_der = rustls::pki_types::PrivateKeyDer::Pkcs8(cert.signing_key.serialize_der().into());
    let config = rustls::ServerConfig::builder_with_provider(Arc::new(rustls::crypto::aws_lc_rs::default_provider()))
        .with_safe_default_protocol_versions()
        .unwrap()
        .with_no_client_auth()
        .with_single_cert(vec![cert_der], key_der)
        .unwrap();
    let config = Arc::new(config);
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let config = Arc::clone(&config);
            thread::spawn(move || {
                let conn = rustls::ServerConnection::new(config).unwrap();
                let mut tls = rustls::StreamOwned::new(conn, stream);
                let mut buf = [0u8; 4096];
                if tls.read(&mut buf).is_ok() {
                    let body = "<html><body><p>secret paragraph</p></body></html>";
                    let _ = write!(
                        tls,
                        "HTTP/1.1 200 OK\r\nContent-Type: text/html\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                        body.len()
                    );
                    let _ = tls.flush();
                }
            });
        }
    });
    format!("https://localhost:{port}/advisory")
}

/// Run the binary entry point in-process.
pub fn vulnaug(args: &[&str]) -> i32 {
    let argv = std::iter::once("vulnaug").chain(args.iter().copied()).map(Into::into);
    vulnaug::cli::run(argv, &mut std::io::empty(), &mut Vec::new())
}

pub fn archive() -> std::path::PathBuf {
    e2e_dir().join("archive")
}

pub fn config() -> String {
    e2e_dir().join("vulnaug.toml").display().to_string()
}

/// Run collect through eval into `dir`.
pub fn pipeline(dir: &Path) -> Vec<i32> {
    let p = |name: &str| dir.join(name).display().to_string();
    let fixtures = archive().display().to_string();
    let cfg = config();
    let common = ["--config", &cfg, "--offline", "--fixture-dir", &fixtures];
    let with = |args: &[&str]| {
        let mut v: Vec<&str> = args.to_vec();
        v.extend_from_slice(&common);
        vulnaug(&v)
    };
    vec![
        with(&["collect", "--out", &p("records.jsonl")]),
        with(&["scrape", "--input", &p("records.jsonl"), "--out", &p("scraped.jsonl")]),
        with(&["build", "--input", &p("scraped.jsonl"), "--out", &p("corpus.jsonl")]),
        with(&["split", "--corpus", &p("corpus.jsonl"), "--out-dir", &p("split")]),
        with(&["summarize", "--input", &p("split"), "--out", &p("summaries.jsonl")]),
        with(&["eval", "--predictions", &p("summaries.jsonl"), "--targets", &p("split/test.jsonl"), "--out", &p("report.json")]),
    ]
}
