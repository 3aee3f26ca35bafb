//! Corpus assembly: gate scraped paragraphs against each description, build
//! augmented samples, cap their lengths, split and persist them, and
//! summarize the result.

mod io;
mod sample;
mod split;
mod stats;

pub use io::{read_corpus, read_samples, write_corpus, write_samples, SPLIT_META};
pub use sample::{
    build_corpus, build_sample, cap_lengths, AugmentedSample, BuildOptions, BuildOutcome,
    CandidateParagraph, CorpusBuild, Provenance, ProvenanceScores,
};
pub use split::{split_corpus, split_sizes, CorpusSplit, SplitError};
pub use stats::{corpus_stats, CorpusStats, FieldStats, StatsError, TextStats};

/// Dataset sizes reported for the 2019–2021 NVD harvest of 35,657 CVEs.
/// Kept for report context; live re-harvests will differ.
pub const REFERENCE_DATASET_SIZES: [(&str, usize); 3] =
    [("use", 9_955), ("mpnet", 8_664), ("both", 10_766)];
