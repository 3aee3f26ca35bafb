use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::jsonl::read_jsonl;
use crate::textkit::truncate_tokens;

/// Default number of graded samples per session.
pub const DEFAULT_SESSION_SIZE: usize = 100;

const EXCERPT_TOKENS: usize = 120;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanEvalRecord {
    pub sample_id: String,
    pub fluency: u8,
    pub completeness: u8,
    pub correctness: u8,
    pub understanding: u8,
    pub annotator_id: String,
    pub timestamp: DateTime<Utc>,
}

impl HumanEvalRecord {
    pub fn grades(&self) -> [u8; 4] {
        [self.fluency, self.completeness, self.correctness, self.understanding]
    }

    pub fn is_valid(&self) -> bool {
        self.grades().iter().all(|g| (1..=3).contains(g))
    }
}

/// What the annotator sees for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub sample_id: String,
    pub input: String,
    pub target: String,
    pub prediction: String,
}

/// Seeded uniform sample of `n` items without replacement, in draw order.
pub fn select_items<T: Clone>(items: &[T], n: usize, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample(&mut rng, items.len(), n.min(items.len())).into_iter().map(|i| items[i].clone()).collect()
}

/// Parse four grades in 1..=3, separated by whitespace or commas.
pub fn parse_grades(line: &str) -> Option<[u8; 4]> {
    let parts: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|p| !p.is_empty()).collect();
    if parts.len() != 4 {
        return None;
    }
    let mut grades = [0u8; 4];
    for (slot, p) in grades.iter_mut().zip(parts) {
        *slot = p.parse().ok().filter(|g| (1..=3).contains(g))?;
    }
    Some(grades)
}

/// Records in an existing log; a missing log is empty.
pub fn read_log(path: &Path) -> Result<Vec<HumanEvalRecord>, EvalError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let records: Vec<HumanEvalRecord> = read_jsonl(path)?;
    if let Some(bad) = records.iter().find(|r| !r.is_valid()) {
        return Err(EvalError::Schema(format!("{}: grade out of range for {}", path.display(), bad.sample_id)));
    }
    Ok(records)
}

#[derive(Debug, Default)]
pub struct SessionOutcome {
    /// Records written during this session.
    pub recorded: Vec<HumanEvalRecord>,
    /// Items skipped because the log already held them.
    pub resumed: usize,
    /// True when the annotator quit or input ended early.
    pub interrupted: bool,
}

/// Interactive grading. Each item already graded by `annotator_id` in the
/// log is skipped. Every accepted record is appended and flushed before the
/// next prompt, so an interrupted session loses nothing.
pub fn human_eval_session<R: BufRead, W: Write>(
    items: &[EvalItem],
    annotator_id: &str,
    log_path: &Path,
    input: &mut R,
    output: &mut W,
    now: impl Fn() -> DateTime<Utc>,
) -> Result<SessionOutcome, EvalError> {
    let done: BTreeSet<String> = read_log(log_path)?
        .into_iter()
        .filter(|r| r.annotator_id == annotator_id)
        .map(|r| r.sample_id)
        .collect();
    if let Some(parent) = log_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut log = OpenOptions::new().create(true).append(true).open(log_path)?;
    let mut outcome = SessionOutcome::default();
    let pending: Vec<&EvalItem> = items.iter().filter(|i| !done.contains(&i.sample_id)).collect();
    outcome.resumed = items.len() - pending.len();
    let total = pending.len();
    for (pos, item) in pending.into_iter().enumerate() {
        writeln!(output, "\n=== [{}/{}] {} ===", pos + 1, total, item.sample_id)?;
        let excerpt = truncate_tokens(&item.input, EXCERPT_TOKENS);
        let ellipsis = if excerpt.len() < item.input.len() { " ..." } else { "" };
        writeln!(output, "Input: {excerpt}{ellipsis}")?;
        writeln!(output, "Target: {}", item.target)?;
        writeln!(output, "Prediction: {}", item.prediction)?;
        let grades = loop {
            write!(output, "Grades (fluency completeness correctness understanding, 1-3; q quits): ")?;
            output.flush()?;
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 || line.trim().eq_ignore_ascii_case("q") {
                outcome.interrupted = true;
                writeln!(output, "\nSession stopped; {} record(s) saved.", outcome.recorded.len())?;
                return Ok(outcome);
            }
            match parse_grades(&line) {
                Some(g) => break g,
                None => writeln!(output, "Need four whole numbers between 1 and 3.")?,
            }
        };
        let record = HumanEvalRecord {
            sample_id: item.sample_id.clone(),
            fluency: grades[0],
            completeness: grades[1],
            correctness: grades[2],
            understanding: grades[3],
            annotator_id: annotator_id.to_string(),
            timestamp: now(),
        };
        let mut line = serde_json::to_string(&record).map_err(io::Error::other)?;
        line.push('\n');
        log.write_all(line.as_bytes())?;
        log.flush()?;
        log.sync_data()?;
        outcome.recorded.push(record);
    }
    Ok(outcome)
}

/// Mean grade per criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanEvalSummary {
    pub records: usize,
    pub fluency: f64,
    pub completeness: f64,
    pub correctness: f64,
    pub understanding: f64,
}

pub fn human_eval_aggregate(records: &[HumanEvalRecord]) -> Result<HumanEvalSummary, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(bad) = records.iter().find(|r| !r.is_valid()) {
        return Err(EvalError::Schema(format!("grade out of range for {}", bad.sample_id)));
    }
    let n = records.len() as f64;
    let mean = |f: fn(&HumanEvalRecord) -> u8| records.iter().map(|r| f(r) as f64).sum::<f64>() / n;
    Ok(HumanEvalSummary {
        records: records.len(),
        fluency: mean(|r| r.fluency),
        completeness: mean(|r| r.completeness),
        correctness: mean(|r| r.correctness),
        understanding: mean(|r| r.understanding),
    })
}

/// Published human-evaluation means, for side-by-side rendering only.
pub fn reference_human_eval() -> Vec<(String, HumanEvalSummary)> {
    let row = |f, cm, cr, u| HumanEvalSummary { records: 100, fluency: f, completeness: cm, correctness: cr, understanding: u };
    vec![
        ("BART (published)".into(), row(2.69, 2.15, 2.16, 2.58)),
        ("T5 (published)".into(), row(2.72, 2.07, 2.04, 2.57)),
    ]
}

pub fn render_human_table(rows: &[(String, HumanEvalSummary)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<20} {:>5} {:>5} {:>5} {:>5}", "Model", "F", "Cm", "Cr", "U");
    for (model, s) in rows {
        let _ = writeln!(
            out,
            "{:<20} {:>5.2} {:>5.2} {:>5.2} {:>5.2}",
            model, s.fluency, s.completeness, s.correctness, s.understanding
        );
    }
    out
}
