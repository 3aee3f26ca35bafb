use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::AugmentedSample;

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("cannot form splits from {0} samples (need at least 10)")]
    TooFew(usize),
    #[error("duplicate cve_id {0} in corpus")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<AugmentedSample>,
    pub validation: Vec<AugmentedSample>,
    pub test: Vec<AugmentedSample>,
    pub seed: u64,
}

impl CorpusSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn round_half_up_tenth(n: usize) -> usize {
    (n + 5) / 10
}

/// `(train, validation, test)` sizes for `n` samples: a tenth (rounded half
/// up) goes to test, then a tenth of the remainder to validation.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let test = round_half_up_tenth(n);
    let validation = round_half_up_tenth(n - test);
    (n - test - validation, validation, test)
}

/// Seeded shuffle into train/validation/test. The shuffle starts from
/// CVE-id order, so the input order does not matter; each part is returned
/// sorted by CVE id.
pub fn split_corpus(samples: &[AugmentedSample], seed: u64) -> Result<CorpusSplit, SplitError> {
    if samples.len() < 10 {
        return Err(SplitError::TooFew(samples.len()));
    }
    let mut ids = HashSet::new();
    for s in samples {
        if !ids.insert(s.cve_id.as_str()) {
            return Err(SplitError::DuplicateId(s.cve_id.clone()));
        }
    }
    let mut pool: Vec<AugmentedSample> = samples.to_vec();
    pool.sort_by(|a, b| a.cve_id.cmp(&b.cve_id));
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let (_, n_val, n_test) = split_sizes(pool.len());
    let mut train = pool.split_off(n_test + n_val);
    let mut validation = pool.split_off(n_test);
    let mut test = pool;
    for part in [&mut train, &mut validation, &mut test] {
        part.sort_by(|a, b| a.cve_id.cmp(&b.cve_id));
    }
    Ok(CorpusSplit { train, validation, test, seed })
}
