use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AugmentedSample, REFERENCE_DATASET_SIZES};
use crate::textkit::{entity_candidates_corpus, split_sentences, tokenize, top_k, NgramTable};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("cannot compute statistics of an empty corpus")]
    Empty,
}

/// Population mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub mean: f64,
    pub std: f64,
}

impl FieldStats {
    pub fn of(values: &[f64]) -> FieldStats {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        FieldStats { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextStats {
    pub words: FieldStats,
    pub chars: FieldStats,
    pub sentences: FieldStats,
}

impl TextStats {
    fn of<'a>(texts: impl Iterator<Item = &'a str> + Clone) -> TextStats {
        let collect = |f: fn(&str) -> usize| texts.clone().map(|t| f(t) as f64).collect::<Vec<_>>();
        TextStats {
            words: FieldStats::of(&collect(|t| t.split_whitespace().count())),
            chars: FieldStats::of(&collect(|t| t.chars().count())),
            sentences: FieldStats::of(&collect(|t| split_sentences(t).len())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub samples: usize,
    pub input: TextStats,
    pub target: TextStats,
    /// Entity candidates across target summaries.
    pub top_entities: Vec<(String, usize)>,
    pub top_input_trigrams: Vec<(String, usize)>,
    pub top_target_trigrams: Vec<(String, usize)>,
}

fn trigram_table<'a>(texts: impl Iterator<Item = &'a str>) -> NgramTable {
    let mut table = NgramTable::new(3);
    for t in texts {
        table.extend(&tokenize(t));
    }
    table
}

/// Word, character and sentence statistics for inputs and targets, plus the
/// `k` most frequent entity candidates and trigrams.
pub fn corpus_stats(samples: &[AugmentedSample], k: usize) -> Result<CorpusStats, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    let inputs = samples.iter().map(|s| s.input_text.as_str());
    let targets = samples.iter().map(|s| s.target_summary.as_str());
    let target_texts: Vec<&str> = targets.clone().collect();
    let mut top_entities: Vec<(String, usize)> =
        entity_candidates_corpus(&target_texts).into_iter().collect();
    top_entities.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    top_entities.truncate(k);
    Ok(CorpusStats {
        samples: samples.len(),
        input: TextStats::of(inputs.clone()),
        target: TextStats::of(targets.clone()),
        top_entities,
        top_input_trigrams: top_k(&trigram_table(inputs), k),
        top_target_trigrams: top_k(&trigram_table(targets), k),
    })
}

impl CorpusStats {
    /// Plain-text report: mean/std table, entity list, trigram lists.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Corpus statistics ({} samples)", self.samples);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<12} {:>24} {:>24}", "", "augmented description", "original summary");
        let _ = writeln!(out, "{:<12} {:>11} {:>12} {:>11} {:>12}", "field", "mean", "std", "mean", "std");
        for (name, a, b) in [
            ("words", self.input.words, self.target.words),
            ("characters", self.input.chars, self.target.chars),
            ("sentences", self.input.sentences, self.target.sentences),
        ] {
            let _ = writeln!(
                out,
                "{:<12} {:>11.2} {:>12.2} {:>11.2} {:>12.2}",
                name, a.mean, a.std, b.mean, b.std
            );
        }
        let list = |out: &mut String, title: &str, items: &[(String, usize)]| {
            let _ = writeln!(out);
            let _ = writeln!(out, "{title}");
            if items.is_empty() {
                let _ = writeln!(out, "  (none)");
            }
            for (name, count) in items {
                let _ = writeln!(out, "  ({name}, {count})");
            }
        };
        list(&mut out, "Frequent entity candidates (summaries)", &self.top_entities);
        list(&mut out, "Frequent trigrams (augmented descriptions)", &self.top_input_trigrams);
        list(&mut out, "Frequent trigrams (summaries)", &self.top_target_trigrams);
        let _ = writeln!(out);
        let _ = writeln!(out, "Reference dataset sizes from the 2019-2021 NVD harvest (35,657 CVEs):");
        for (name, size) in REFERENCE_DATASET_SIZES {
            let _ = writeln!(out, "  {name:<6} {size}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, input: &str, target: &str) -> AugmentedSample {
        AugmentedSample {
            cve_id: id.into(),
            input_text: input.into(),
            target_summary: target.into(),
            provenance: vec![],
            input_token_count: 0,
            target_token_count: 0,
        }
    }

    #[test]
    fn empty_corpus() {
        assert_eq!(corpus_stats(&[], 5), Err(StatsError::Empty));
    }

    #[test]
    fn single_sample_has_zero_std() {
        let s = corpus_stats(&[sample("CVE-2020-0001", "One two. Three four!", "Short one.")], 5).unwrap();
        for f in [s.input.words, s.input.chars, s.input.sentences, s.target.words, s.target.chars, s.target.sentences] {
            assert_eq!(f.std, 0.0);
        }
        assert_eq!(s.input.words.mean, 4.0);
        assert_eq!(s.input.sentences.mean, 2.0);
    }

    #[test]
    fn two_samples_population_std() {
        let ten = vec!["w"; 10].join(" ");
        let twenty = vec!["w"; 20].join(" ");
        let s = corpus_stats(&[sample("a", &ten, "x"), sample("b", &twenty, "y")], 5).unwrap();
        assert_eq!(s.input.words.mean, 15.0);
        assert_eq!(s.input.words.std, 5.0);
    }

    #[test]
    fn entity_and_trigram_lists_sorted() {
        let s = corpus_stats(
            &[
                sample("a", "the cisco bug the cisco bug", "A flaw in the Cisco router. XSS in the Cisco portal."),
                sample("b", "the cisco bug", "Stored XSS in WordPress."),
            ],
            3,
        )
        .unwrap();
        assert_eq!(s.top_entities[0], ("Cisco".to_string(), 2));
        assert!(s.top_entities.windows(2).all(|w| w[0].1 >= w[1].1));
        assert_eq!(s.top_input_trigrams[0], ("the cisco bug".to_string(), 3));
        let text = s.render_text();
        assert!(text.contains("(Cisco, 2)"));
        assert!(text.contains("augmented description"));
    }
}
