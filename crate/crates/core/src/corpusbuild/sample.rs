use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::harvest::{ReferenceDoc, ScrapedRecord, VulnRecord};
use crate::semgate::{cosine, EmbeddingVector, GateConfig, GateDecision, GateReason, ProviderSet};
use crate::textkit::{clean, passes_length_filter, token_count, truncate_tokens, CleanText};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvenanceScores {
    #[serde(rename = "use", default, skip_serializing_if = "Option::is_none")]
    pub use_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mpnet: Option<f64>,
}

impl ProvenanceScores {
    fn from_map(scores: &BTreeMap<String, f64>) -> Self {
        Self { use_score: scores.get("use").copied(), mpnet: scores.get("mpnet").copied() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub url: String,
    pub para_index: usize,
    pub scores: ProvenanceScores,
}

/// One corpus row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentedSample {
    pub cve_id: String,
    pub input_text: String,
    pub target_summary: String,
    pub provenance: Vec<Provenance>,
    #[serde(rename = "input_tokens")]
    pub input_token_count: usize,
    #[serde(rename = "target_tokens")]
    pub target_token_count: usize,
}

/// A scraped paragraph and what the pipeline made of it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateParagraph {
    pub source_url: String,
    pub para_index: usize,
    pub raw: String,
    pub cleaned: CleanText,
    /// `None` when the paragraph failed the length filter and was never
    /// embedded.
    pub decision: Option<GateDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildOptions {
    /// Paragraphs need strictly more cleaned words than this.
    pub min_words: usize,
    /// Start the input text with the cleaned description.
    pub include_description: bool,
    /// Drop exact repeats among a sample's accepted paragraphs.
    pub dedup_paragraphs: bool,
    pub input_cap: usize,
    pub summary_cap: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            min_words: crate::textkit::DEFAULT_MIN_WORDS,
            include_description: true,
            dedup_paragraphs: false,
            input_cap: 1000,
            summary_cap: 250,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BuildOutcome {
    pub sample: Option<AugmentedSample>,
    pub candidates: Vec<CandidateParagraph>,
    /// Documents dropped because embedding failed, with the error text.
    pub skipped_docs: Vec<(String, String)>,
}

fn gate_or_missing(gate: &GateConfig, scores: &BTreeMap<String, f64>) -> GateDecision {
    gate.decide(scores.get("use").copied(), scores.get("mpnet").copied())
        .unwrap_or_else(|_| GateDecision {
            accepted: false,
            scores: scores.clone(),
            reason: GateReason::MissingScore,
        })
}

/// Build the augmented sample for one CVE.
///
/// Each paragraph of each successfully fetched document is cleaned, length
/// filtered, embedded with every provider the gate needs, and scored against
/// the cleaned description. Accepted paragraphs are appended in encounter
/// order after the description, newline-joined. When embedding fails for a
/// document the whole document is skipped. No accepted paragraph means no
/// sample.
pub fn build_sample(
    record: &VulnRecord,
    docs: &[ReferenceDoc],
    gate: &GateConfig,
    providers: &ProviderSet,
    opts: &BuildOptions,
) -> BuildOutcome {
    let mut outcome = BuildOutcome::default();
    let description = clean(&record.description);
    if description.is_empty() {
        log::warn!("{}: description is empty after cleaning", record.cve_id);
        return outcome;
    }

    let mut desc_vectors: BTreeMap<&str, EmbeddingVector> = BTreeMap::new();
    for &id in gate.required_providers() {
        let Some(provider) = providers.get(id) else {
            log::warn!("{}: no embedding provider {id:?}", record.cve_id);
            return outcome;
        };
        match provider.embed(std::slice::from_ref(&description.text)) {
            Ok(mut v) if v.len() == 1 => {
                desc_vectors.insert(id, v.remove(0));
            }
            Ok(_) | Err(_) => {
                log::warn!("{}: could not embed description with {id}", record.cve_id);
                outcome.skipped_docs =
                    docs.iter().map(|d| (d.source_url.clone(), "description embedding failed".into())).collect();
                return outcome;
            }
        }
    }

    let mut accepted: Vec<(String, Provenance)> = Vec::new();
    let mut seen_text = HashSet::new();
    'docs: for doc in docs {
        let cleaned: Vec<(usize, &String, CleanText)> = doc
            .usable_paragraphs()
            .iter()
            .enumerate()
            .map(|(i, raw)| (i, raw, clean(raw)))
            .collect();
        let survivors: Vec<usize> = cleaned
            .iter()
            .enumerate()
            .filter(|(_, (_, _, ct))| passes_length_filter(ct, opts.min_words))
            .map(|(pos, _)| pos)
            .collect();
        let texts: Vec<String> = survivors.iter().map(|&pos| cleaned[pos].2.text.clone()).collect();

        let mut per_provider: BTreeMap<&str, Vec<EmbeddingVector>> = BTreeMap::new();
        if !texts.is_empty() {
            for (&id, _) in &desc_vectors {
                let provider = providers.get(id).expect("checked above");
                match provider.embed(&texts) {
                    Ok(v) if v.len() == texts.len() => {
                        per_provider.insert(id, v);
                    }
                    Ok(v) => {
                        let why = format!("{id} returned {} vectors for {} texts", v.len(), texts.len());
                        log::warn!("{}: skipping {}: {why}", record.cve_id, doc.source_url);
                        outcome.skipped_docs.push((doc.source_url.clone(), why));
                        continue 'docs;
                    }
                    Err(e) => {
                        log::warn!("{}: skipping {}: {e}", record.cve_id, doc.source_url);
                        outcome.skipped_docs.push((doc.source_url.clone(), e.to_string()));
                        continue 'docs;
                    }
                }
            }
        }

        let mut survivor_slot = survivors.iter().enumerate().map(|(slot, &pos)| (pos, slot)).collect::<BTreeMap<_, _>>();
        for (pos, (para_index, raw, ct)) in cleaned.into_iter().enumerate() {
            let decision = survivor_slot.remove(&pos).map(|slot| {
                let scores: BTreeMap<String, f64> = per_provider
                    .iter()
                    .filter_map(|(&id, vectors)| {
                        cosine(&desc_vectors[id], &vectors[slot]).ok().map(|s| (id.to_string(), s))
                    })
                    .collect();
                gate_or_missing(gate, &scores)
            });
            if let Some(d) = decision.as_ref().filter(|d| d.accepted) {
                if !opts.dedup_paragraphs || seen_text.insert(ct.text.clone()) {
                    accepted.push((
                        ct.text.clone(),
                        Provenance {
                            url: doc.source_url.clone(),
                            para_index,
                            scores: ProvenanceScores::from_map(&d.scores),
                        },
                    ));
                }
            }
            outcome.candidates.push(CandidateParagraph {
                source_url: doc.source_url.clone(),
                para_index,
                raw: raw.clone(),
                cleaned: ct,
                decision,
            });
        }
    }

    if accepted.is_empty() {
        return outcome;
    }
    let mut parts: Vec<&str> = Vec::with_capacity(accepted.len() + 1);
    if opts.include_description {
        parts.push(&description.text);
    }
    parts.extend(accepted.iter().map(|(text, _)| text.as_str()));
    let input_text = parts.join("\n");
    outcome.sample = Some(AugmentedSample {
        cve_id: record.cve_id.clone(),
        input_token_count: token_count(&input_text),
        input_text,
        target_token_count: token_count(&description.text),
        target_summary: description.text,
        provenance: accepted.into_iter().map(|(_, p)| p).collect(),
    });
    outcome
}

/// Truncate input and target to their statistics-space token caps.
pub fn cap_lengths(sample: &AugmentedSample, input_cap: usize, summary_cap: usize) -> AugmentedSample {
    let input_text = truncate_tokens(&sample.input_text, input_cap).to_string();
    let target_summary = truncate_tokens(&sample.target_summary, summary_cap).to_string();
    AugmentedSample {
        cve_id: sample.cve_id.clone(),
        input_token_count: token_count(&input_text),
        target_token_count: token_count(&target_summary),
        input_text,
        target_summary,
        provenance: sample.provenance.clone(),
    }
}

/// Result of building a whole corpus.
#[derive(Debug, Clone, Default)]
pub struct CorpusBuild {
    /// Capped samples ordered by CVE id.
    pub samples: Vec<AugmentedSample>,
    pub records_in: usize,
    pub skipped_docs: usize,
}

/// Build and cap samples for every scraped record. Records are processed in
/// parallel; output is ordered by CVE id.
pub fn build_corpus(
    scraped: &[ScrapedRecord],
    gate: &GateConfig,
    providers: &ProviderSet,
    opts: &BuildOptions,
) -> CorpusBuild {
    let mut ordered: Vec<&ScrapedRecord> = scraped.iter().collect();
    ordered.sort_by(|a, b| a.record.cve_id.cmp(&b.record.cve_id));
    let outcomes: Vec<BuildOutcome> = ordered
        .par_iter()
        .map(|s| build_sample(&s.record, &s.docs, gate, providers, opts))
        .collect();
    let skipped_docs = outcomes.iter().map(|o| o.skipped_docs.len()).sum();
    let samples = outcomes
        .into_iter()
        .filter_map(|o| o.sample)
        .map(|s| cap_lengths(&s, opts.input_cap, opts.summary_cap))
        .collect();
    CorpusBuild { samples, records_in: scraped.len(), skipped_docs }
}
