use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::textkit::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_pr(recall: f64, precision: f64) -> Self {
        let f1 = if recall + precision == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Self { recall, precision, f1 }
    }
}

/// Clipped unigram overlap: sum over types of min(count in a, count in b).
pub fn unigram_overlap<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in b {
        *counts.entry(t.as_ref()).or_default() += 1;
    }
    let mut overlap = 0;
    for t in a {
        if let Some(c) = counts.get_mut(t.as_ref()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    overlap
}

/// ROUGE-1 over already tokenized text.
pub fn rouge1_tokens<S: AsRef<str>>(prediction: &[S], target: &[S]) -> RougeScore {
    let overlap = unigram_overlap(prediction, target) as f64;
    let ratio = |n: usize| if n == 0 { 0.0 } else { overlap / n as f64 };
    RougeScore::from_pr(ratio(target.len()), ratio(prediction.len()))
}

/// ROUGE-1 with lowercase statistics-space tokens, no stemming and no
/// stopword removal.
pub fn rouge1(prediction: &str, target: &str) -> RougeScore {
    rouge1_tokens(&tokenize(prediction), &tokenize(target))
}

/// Unweighted mean of per-pair scores.
pub fn corpus_rouge<'a>(
    pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<RougeScore, EvalError> {
    let mut n = 0usize;
    let mut sum = RougeScore::default();
    for (pred, target) in pairs {
        let s = rouge1(pred, target);
        sum.recall += s.recall;
        sum.precision += s.precision;
        sum.f1 += s.f1;
        n += 1;
    }
    if n == 0 {
        return Err(EvalError::Empty);
    }
    let n = n as f64;
    Ok(RougeScore { recall: sum.recall / n, precision: sum.precision / n, f1: sum.f1 / n })
}

/// One line of the ROUGE table: `T` input cap, `b` beams, `B` batch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RougeRow {
    pub model: String,
    pub score: RougeScore,
    pub max_input_tokens: usize,
    pub num_beams: usize,
    pub batch_size: Option<usize>,
}

/// Best published fine-tuning row, kept for side-by-side rendering only.
pub fn reference_rouge_row() -> RougeRow {
    RougeRow {
        model: "BART (published)".into(),
        score: RougeScore { recall: 0.52, precision: 0.52, f1: 0.51 },
        max_input_tokens: 500,
        num_beams: 2,
        batch_size: Some(8),
    }
}

pub fn render_rouge_table(rows: &[RougeRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<20} {:>6} {:>6} {:>6} {:>6} {:>3} {:>3}", "Model", "R", "P", "F1", "T", "b", "B");
    for r in rows {
        let batch = r.batch_size.map_or("-".to_string(), |b| b.to_string());
        let _ = writeln!(
            out,
            "{:<20} {:>6.2} {:>6.2} {:>6.2} {:>6} {:>3} {:>3}",
            r.model, r.score.recall, r.score.precision, r.score.f1, r.max_input_tokens, r.num_beams, batch
        );
    }
    out
}
