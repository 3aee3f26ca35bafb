//! Text cleaning, counting, tokenization, sentence splitting and n-gram
//! statistics shared by every stage of the pipeline.
//!
//! Everything here is a pure function of its input.

mod clean;
mod entities;
mod ngrams;
mod sentences;

pub use clean::{clean, passes_length_filter, residual_matches, CleanText, DEFAULT_MIN_WORDS};
pub use entities::{entity_candidates, entity_candidates_corpus};
pub use ngrams::{ngrams, top_k, NgramTable};
pub use sentences::{sentence_spans, split_sentences, ABBREVIATIONS};

/// Statistics-space tokenization: lowercase, whitespace split, punctuation
/// stripped from token edges. Tokens that are pure punctuation vanish.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(token_core)
        .map(|t| t.to_lowercase())
        .collect()
}

/// The alphanumeric core of a whitespace piece, or `None` when nothing is left.
fn token_core(piece: &str) -> Option<&str> {
    let core = piece.trim_matches(|c: char| !c.is_alphanumeric());
    (!core.is_empty()).then_some(core)
}

/// Number of statistics-space tokens in `text`.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().filter(|p| token_core(p).is_some()).count()
}

/// Cut `text` after its `cap`-th statistics-space token.
///
/// The result is always a prefix of `text` (minus trailing whitespace) and
/// never splits a whitespace piece. Text with at most `cap` tokens is
/// returned unchanged.
pub fn truncate_tokens(text: &str, cap: usize) -> &str {
    if token_count(text) <= cap {
        return text;
    }
    if cap == 0 {
        return "";
    }
    let mut seen = 0;
    let mut offset = 0;
    for piece in text.split_whitespace() {
        // split_whitespace yields subslices, so the pointer offset is exact
        let start = piece.as_ptr() as usize - text.as_ptr() as usize;
        if token_core(piece).is_some() {
            seen += 1;
            if seen == cap {
                offset = start + piece.len();
                break;
            }
        }
    }
    &text[..offset]
}
