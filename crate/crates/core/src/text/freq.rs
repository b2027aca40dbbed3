use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

/// Word occurrence counts over a corpus of transcripts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: BTreeMap<String, u64>,
}

impl FrequencyTable {
    /// Counts whitespace-separated, lowercased words.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a str>) -> Self {
        let mut counts = BTreeMap::new();
        for line in corpus {
            for w in line.split_whitespace() {
                *counts.entry(w.to_lowercase()).or_insert(0) += 1;
            }
        }
        Self { counts }
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(w, &c)| (w.as_str(), c))
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Words ordered by descending count, ties by ascending word.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<_> = self.iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }
}

/// Every word outside the `top_k` most frequent ones.
///
/// Count ties at the cut are broken by lexicographic order, lower words
/// staying common.
pub fn rare_words(table: &FrequencyTable, top_k: usize) -> BTreeSet<String> {
    table
        .ranked()
        .into_iter()
        .skip(top_k)
        .map(|(w, _)| String::from(w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(pairs: &[(&str, u64)]) -> FrequencyTable {
        FrequencyTable {
            counts: pairs.iter().map(|&(w, c)| (w.into(), c)).collect(),
        }
    }

    #[test]
    fn counts() {
        assert!(FrequencyTable::build([]).is_empty());
        let t = FrequencyTable::build(["a a b"]);
        assert_eq!(t.count("a"), 2);
        assert_eq!(t.count("b"), 1);
        assert_eq!(FrequencyTable::build(["x y", "Y z"]), FrequencyTable::build(["Y z", "x y"]));
    }

    #[test]
    fn rare_cut() {
        let t = table(&[("the", 100), ("zyx", 1)]);
        assert_eq!(rare_words(&t, 1).into_iter().collect::<Vec<_>>(), ["zyx"]);
        assert!(rare_words(&t, 5).is_empty());
        let t = table(&[("a", 2), ("b", 2), ("c", 1)]);
        assert_eq!(rare_words(&t, 1).into_iter().collect::<Vec<_>>(), ["b", "c"]);
    }
}
