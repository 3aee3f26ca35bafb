use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::split_sentences;

/// Paragraphs must have strictly more words than this to be kept.
pub const DEFAULT_MIN_WORDS: usize = 20;

/// Punctuation that survives cleaning, besides letters, digits and space.
const ALLOWED_PUNCT: &str = ".,;:!?()'\"/-";

// Scheme-qualified or www-prefixed URLs. A trailing sentence punctuation
// mark is left in place.
static URL_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?i)\b(?:(?:https?|ftp)://|www\.)[^\s<>"]*[^\s<>".,;:!?)\]'}]"#).unwrap()
});

static EMAIL_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)[a-z0-9._%+-]+@[a-z0-9-]+(?:\.[a-z0-9-]+)*\.[a-z]{2,}").unwrap()
});

// North American layout with optional country code, or any `+CC` prefixed
// sequence of two to five digit groups.
static PHONE_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(concat!(
        r"(?:\+?\b1[\s.-]?)?(?:\(\d{3}\)|\b\d{3})[\s.-]?\d{3}[\s.-]\d{4}\b",
        r"|\+\d{1,3}(?:[\s.-]?\(?\d{1,4}\)?){2,5}",
    ))
    .unwrap()
});

/// Cleaned text together with its counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanText {
    pub text: String,
    pub word_count: usize,
    pub char_count: usize,
    pub sentence_count: usize,
}

impl CleanText {
    fn from_text(text: String) -> Self {
        Self {
            word_count: text.split_whitespace().count(),
            char_count: text.chars().count(),
            sentence_count: split_sentences(&text).len(),
            text,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }
}

/// Strip links, email addresses, phone numbers and special characters, then
/// collapse whitespace.
///
/// The passes repeat until the text stops changing, so a removal that
/// exposes a new match (a collapsed double space turning digits into a
/// phone number) is handled and the function is idempotent. Matches are deleted rather than replaced by a space, which
/// keeps the word count from ever growing.
pub fn clean(raw: &str) -> CleanText {
    let mut current = normalize_chars(raw);
    loop {
        let next = clean_pass(&current);
        if next == current {
            break;
        }
        current = next;
    }
    CleanText::from_text(current)
}

fn clean_pass(text: &str) -> String {
    let text = URL_RE.replace_all(text, "");
    let text = EMAIL_RE.replace_all(&text, "");
    let text = PHONE_RE.replace_all(&text, "");
    let kept: String = text
        .chars()
        .filter(|&c| c == ' ' || c.is_alphanumeric() || ALLOWED_PUNCT.contains(c))
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whitespace to plain spaces, typographic quotes and dashes to ASCII.
fn normalize_chars(raw: &str) -> String {
    raw.chars()
        .map(|c| match c {
            c if c.is_whitespace() => ' ',
            '\u{2018}' | '\u{2019}' | '\u{201B}' | '\u{2032}' => '\'',
            '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{2033}' => '"',
            '\u{2010}'..='\u{2015}' | '\u{2212}' => '-',
            c => c,
        })
        .collect()
}

/// Every URL, email or phone match still present in `text`.
pub fn residual_matches(text: &str) -> Vec<String> {
    [&*URL_RE, &*EMAIL_RE, &*PHONE_RE]
        .iter()
        .flat_map(|re| re.find_iter(text).map(|m| m.as_str().to_string()))
        .collect()
}

/// Strict length rule: more than `min_words` words.
pub fn passes_length_filter(ct: &CleanText, min_words: usize) -> bool {
    ct.word_count > min_words
}
