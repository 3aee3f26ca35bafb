/// Abbreviations whose trailing period never ends a sentence (lowercased).
pub const ABBREVIATIONS: &[&str] = &[
    "e.g.", "i.e.", "vs.", "cf.", "al.", "approx.", "fig.", "no.", "nos.", "ver.", "v.", "mr.",
    "mrs.", "ms.", "dr.", "prof.", "inc.", "ltd.", "co.", "corp.", "jr.", "sr.", "st.", "u.s.",
    "jan.", "feb.", "mar.", "apr.", "jun.", "jul.", "aug.", "sep.", "sept.", "oct.", "nov.",
    "dec.",
];

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[')
}

/// Byte spans of the sentences in `text`, trimmed of surrounding whitespace.
pub fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let (_, c) = chars[i];
        if !is_terminator(c) {
            i += 1;
            continue;
        }
        // swallow runs like "?!" or ".)" into the terminator
        let mut j = i + 1;
        while j < chars.len() && (is_terminator(chars[j].1) || is_closer(chars[j].1)) {
            j += 1;
        }
        let end = chars.get(j).map_or(text.len(), |&(b, _)| b);
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let boundary = if k == chars.len() {
            true
        } else if k > j {
            let mut m = k;
            while m < chars.len() && is_opener(chars[m].1) {
                m += 1;
            }
            m < chars.len()
                && chars[m].1.is_uppercase()
                && !(c == '.' && ends_with_abbreviation(&text[start..end]))
        } else {
            false
        };
        if boundary {
            push_trimmed(text, start, end, &mut spans);
            start = end;
        }
        i = j;
    }
    push_trimmed(text, start, text.len(), &mut spans);
    spans
}

fn push_trimmed(text: &str, start: usize, end: usize, spans: &mut Vec<(usize, usize)>) {
    let segment = &text[start..end];
    let trimmed = segment.trim();
    if trimmed.is_empty() {
        return;
    }
    let lead = segment.len() - segment.trim_start().len();
    spans.push((start + lead, start + lead + trimmed.len()));
}

fn ends_with_abbreviation(segment: &str) -> bool {
    let word = segment
        .split_whitespace()
        .last()
        .unwrap_or("")
        .trim_start_matches(is_opener)
        .trim_end_matches(is_closer)
        .to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

/// Rule-based sentence splitter.
///
/// Splits after `.`, `!` or `?` when followed by whitespace and a capital
/// letter, or by the end of the text. Periods closing a known abbreviation
/// are never boundaries.
pub fn split_sentences(text: &str) -> Vec<&str> {
    sentence_spans(text)
        .into_iter()
        .map(|(s, e)| &text[s..e])
        .collect()
}
