use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::semgate::{cosine, EmbeddingProvider, SimilarityError};

pub const HISTOGRAM_BINS: usize = 40;
pub const BIN_WIDTH: f64 = 0.05;

/// Bin index for a similarity in [-1, 1]; 1.0 falls in the last bin.
pub fn bin_index(s: f64) -> usize {
    (((s.clamp(-1.0, 1.0) + 1.0) / BIN_WIDTH).floor() as usize).min(HISTOGRAM_BINS - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub provider_id: String,
    pub scores: Vec<f64>,
    /// `HISTOGRAM_BINS` counts; bin `i` covers `[-1 + i*w, -1 + (i+1)*w)`.
    pub histogram: Vec<usize>,
    pub mean: f64,
}

/// Cosine between each prediction and its target under `provider`. A pair
/// where either side embeds to the zero vector scores 0.
pub fn similarity_report<'a>(
    pairs: &[(&'a str, &'a str)],
    provider: &dyn EmbeddingProvider,
) -> Result<SimilarityReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let texts: Vec<String> =
        pairs.iter().flat_map(|(p, t)| [p.to_string(), t.to_string()]).collect();
    let vectors = provider.embed(&texts)?;
    if vectors.len() != texts.len() {
        return Err(EvalError::Embedding(format!(
            "{}: expected {} vectors, got {}",
            provider.id(),
            texts.len(),
            vectors.len()
        )));
    }
    let mut scores = Vec::with_capacity(pairs.len());
    for pair in vectors.chunks(2) {
        let s = match cosine(&pair[0], &pair[1]) {
            Ok(s) => s,
            Err(SimilarityError::ZeroNorm) => 0.0,
            Err(e) => return Err(EvalError::Embedding(e.to_string())),
        };
        scores.push(s);
    }
    let mut histogram = vec![0; HISTOGRAM_BINS];
    for &s in &scores {
        histogram[bin_index(s)] += 1;
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(SimilarityReport { provider_id: provider.id().to_string(), scores, histogram, mean })
}

impl SimilarityReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Prediction/target similarity ({}): {} pairs, mean {:.4}", self.provider_id, self.scores.len(), self.mean);
        for (i, &count) in self.histogram.iter().enumerate().filter(|(_, c)| **c > 0) {
            let lo = -1.0 + i as f64 * BIN_WIDTH;
            let _ = writeln!(out, "  [{:+.2}, {:+.2}) {count}", lo, lo + BIN_WIDTH);
        }
        out
    }
}
