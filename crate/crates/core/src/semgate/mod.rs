//! Sentence-embedding acquisition, cosine similarity and the paragraph
//! acceptance gate.

mod embed;
mod gate;

pub use embed::{
    embed, EmbedError, EmbeddingProvider, EmbeddingVector, HashEmbedder, ProviderSet,
    RemoteEmbedder, HASH_EMBED_DIM,
};
pub use gate::{
    gate_dual, gate_single, EncoderBand, GateConfig, GateDecision, GateError, GateMode,
    GateReason, EDGE_TOLERANCE,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimilarityError {
    #[error("vectors come from different providers ({0} vs {1})")]
    ProviderMismatch(String, String),
    #[error("dimension mismatch ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("similarity is undefined for a zero-norm vector")]
    ZeroNorm,
}

/// Cosine similarity of two embeddings, clamped to [-1, 1].
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, SimilarityError> {
    if a.provider_id != b.provider_id {
        return Err(SimilarityError::ProviderMismatch(
            a.provider_id.clone(),
            b.provider_id.clone(),
        ));
    }
    cosine_values(&a.values, &b.values)
}

/// Cosine similarity on raw slices.
pub fn cosine_values(a: &[f64], b: &[f64]) -> Result<f64, SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let norm_a = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_b = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(SimilarityError::ZeroNorm);
    }
    Ok((dot / (norm_a * norm_b)).clamp(-1.0, 1.0))
}
