use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{contract, Result};

/// Ordered, duplicate-free list of biasing entries. The no-bias entry is
/// implicit and never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BiasingList {
    entries: Vec<String>,
}

impl BiasingList {
    pub fn new(entries: Vec<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if e.trim().is_empty() {
                return Err(contract("empty biasing entry"));
            }
            if !seen.insert(e.as_str()) {
                return Err(contract(alloc::format!("duplicate biasing entry {e:?}")));
            }
        }
        Ok(Self { entries })
    }

    /// Builds a list keeping the first occurrence of each entry.
    pub fn dedup(entries: impl IntoIterator<Item = String>) -> Self {
        let mut seen = BTreeSet::new();
        let entries = entries
            .into_iter()
            .filter(|e| !e.trim().is_empty() && seen.insert(e.clone()))
            .collect();
        Self { entries }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.iter().any(|e| e == word)
    }

    /// Set of words appearing in any entry, for class attribution.
    pub fn word_set(&self) -> BTreeSet<String> {
        self.entries
            .iter()
            .flat_map(|e| e.split_whitespace().map(String::from))
            .collect()
    }

    pub fn into_entries(self) -> Vec<String> {
        self.entries
    }
}

/// The reference's rare words in first-occurrence order, followed by
/// `n_distractors` words sampled without replacement from the pool minus
/// every reference word.
pub fn build_biasing_list<R: Rng + ?Sized>(
    reference: &str,
    rare: &BTreeSet<String>,
    pool: &BTreeSet<String>,
    n_distractors: usize,
    rng: &mut R,
) -> BiasingList {
    let ref_words: BTreeSet<&str> = reference.split_whitespace().collect();
    let mut seen = BTreeSet::new();
    let mut entries: Vec<String> = reference
        .split_whitespace()
        .filter(|w| rare.contains(*w) && seen.insert(*w))
        .map(String::from)
        .collect();
    if n_distractors > 0 {
        let candidates: Vec<&String> = pool.iter().filter(|w| !ref_words.contains(w.as_str())).collect();
        let take = n_distractors.min(candidates.len());
        for i in rand::seq::index::sample(rng, candidates.len(), take) {
            entries.push(candidates[i].clone());
        }
    }
    BiasingList { entries }
}
