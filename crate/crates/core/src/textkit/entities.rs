use std::collections::{BTreeMap, HashSet};

use super::split_sentences;

/// One whitespace piece of a sentence with its edge punctuation removed.
struct Word<'a> {
    core: &'a str,
    /// Trailing punctuation (comma, semicolon, ...) closes any running entity.
    breaks_after: bool,
}

fn words(sentence: &str) -> Vec<Word<'_>> {
    sentence
        .split_whitespace()
        .filter_map(|piece| {
            let core = piece.trim_matches(|c: char| !c.is_alphanumeric());
            if core.is_empty() {
                return None;
            }
            let tail = &piece[piece.find(core).unwrap() + core.len()..];
            Some(Word { core, breaks_after: !tail.is_empty() })
        })
        .collect()
}

/// Capitalized word or all-caps acronym, at least two characters long.
fn is_name_like(word: &str) -> bool {
    let mut chars = word.chars();
    let first = chars.next().unwrap_or(' ');
    word.chars().count() >= 2 && first.is_uppercase()
}

/// Heuristic entity candidates for a single text. See
/// [`entity_candidates_corpus`].
pub fn entity_candidates(text: &str) -> BTreeMap<String, usize> {
    entity_candidates_corpus(&[text])
}

/// Frequency map of entity candidates across `texts`.
///
/// A candidate is a maximal run of capitalized words or acronyms. A run that
/// opens a sentence keeps its first word only when that word also appears
/// capitalized in mid-sentence position somewhere in the corpus; otherwise
/// the run starts at its second word.
pub fn entity_candidates_corpus<S: AsRef<str>>(texts: &[S]) -> BTreeMap<String, usize> {
    let sentences: Vec<Vec<Word<'_>>> = texts
        .iter()
        .flat_map(|t| split_sentences(t.as_ref()))
        .map(words)
        .collect();

    let mid_sentence: HashSet<&str> = sentences
        .iter()
        .flat_map(|ws| ws.iter().skip(1))
        .filter(|w| is_name_like(w.core))
        .map(|w| w.core)
        .collect();

    let mut counts = BTreeMap::new();
    for ws in &sentences {
        let mut run: Vec<&str> = Vec::new();
        for (pos, w) in ws.iter().enumerate() {
            let qualifies =
                is_name_like(w.core) && (pos > 0 || mid_sentence.contains(w.core));
            if qualifies {
                run.push(w.core);
            } else if !run.is_empty() {
                *counts.entry(run.join(" ")).or_insert(0) += 1;
                run.clear();
            }
            if w.breaks_after && !run.is_empty() {
                *counts.entry(run.join(" ")).or_insert(0) += 1;
                run.clear();
            }
        }
        if !run.is_empty() {
            *counts.entry(run.join(" ")).or_insert(0) += 1;
        }
    }
    counts
}
