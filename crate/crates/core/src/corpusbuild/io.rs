use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AugmentedSample, CorpusSplit};
use crate::jsonl::{read_jsonl, write_json, write_jsonl, JsonlError};

/// Metadata file written next to the split JSONL files.
pub const SPLIT_META: &str = "split.json";

const PARTS: [&str; 3] = ["train.jsonl", "validation.jsonl", "test.jsonl"];

#[derive(Serialize, Deserialize)]
struct SplitMeta {
    seed: u64,
    train: usize,
    validation: usize,
    test: usize,
}

pub fn write_samples(path: &Path, samples: &[AugmentedSample]) -> Result<(), JsonlError> {
    write_jsonl(path, samples)
}

pub fn read_samples(path: &Path) -> Result<Vec<AugmentedSample>, JsonlError> {
    read_jsonl(path)
}

/// Write `train.jsonl`, `validation.jsonl`, `test.jsonl` and `split.json`
/// into `dir`.
pub fn write_corpus(split: &CorpusSplit, dir: &Path) -> Result<(), JsonlError> {
    for (name, part) in PARTS.iter().zip([&split.train, &split.validation, &split.test]) {
        write_samples(&dir.join(name), part)?;
    }
    let meta = SplitMeta {
        seed: split.seed,
        train: split.train.len(),
        validation: split.validation.len(),
        test: split.test.len(),
    };
    write_json(&dir.join(SPLIT_META), &meta)
}

pub fn read_corpus(dir: &Path) -> Result<CorpusSplit, JsonlError> {
    let meta_path = dir.join(SPLIT_META);
    let raw = std::fs::read_to_string(&meta_path)
        .map_err(|source| JsonlError::Io { path: meta_path.clone(), source })?;
    let meta: SplitMeta = serde_json::from_str(&raw).map_err(|e| JsonlError::Line {
        path: meta_path,
        line: e.line(),
        message: e.to_string(),
    })?;
    Ok(CorpusSplit {
        train: read_samples(&dir.join(PARTS[0]))?,
        validation: read_samples(&dir.join(PARTS[1]))?,
        test: read_samples(&dir.join(PARTS[2]))?,
        seed: meta.seed,
    })
}
