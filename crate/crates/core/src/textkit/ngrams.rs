use std::collections::BTreeMap;

use serde::Serialize;

/// Sliding-window n-gram counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NgramTable {
    pub n: usize,
    pub entries: BTreeMap<Vec<String>, usize>,
}

impl NgramTable {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "n-gram order must be positive");
        Self { n, entries: BTreeMap::new() }
    }

    /// Add every window of `tokens` to the table.
    pub fn extend<S: AsRef<str>>(&mut self, tokens: &[S]) {
        for window in tokens.windows(self.n) {
            let key = window.iter().map(|t| t.as_ref().to_string()).collect();
            *self.entries.entry(key).or_insert(0) += 1;
        }
    }

    pub fn total(&self) -> usize {
        self.entries.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> NgramTable {
    let mut table = NgramTable::new(n);
    table.extend(tokens);
    table
}

/// The `k` most frequent n-grams, space-joined. Ties break lexicographically.
pub fn top_k(table: &NgramTable, k: usize) -> Vec<(String, usize)> {
    let mut ranked: Vec<(String, usize)> = table
        .entries
        .iter()
        .map(|(gram, &count)| (gram.join(" "), count))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}
