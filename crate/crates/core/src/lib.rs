//! Vulnerability description augmentation and summary evaluation.
//!
//! The pipeline harvests CVE records, scrapes paragraph text from their
//! reference links, keeps the paragraphs whose sentence-encoder similarity
//! to the official description falls inside configured bands, and writes a
//! summarization corpus. Summaries produced for that corpus are scored with
//! ROUGE-1, embedding similarity and graded human review.

pub mod textkit;
pub mod http;
pub mod semgate;
pub mod harvest;
pub mod jsonl;
pub mod corpusbuild;
pub mod summarize;
pub mod evalsuite;
pub mod config;
pub mod manifest;
pub mod cli;
