//! Word alignment and error rates split by biasing-word membership.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EditOp {
    Match { r: String, h: String },
    Substitution { r: String, h: String },
    Deletion { r: String },
    Insertion { h: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub ops: Vec<EditOp>,
    pub matches: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl AlignmentResult {
    pub fn cost(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// Minimal unit-cost alignment. Backtrace prefers match, then
/// substitution, deletion and insertion.
pub fn align<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> AlignmentResult {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    let eq = |i: usize, j: usize| reference[i].as_ref() == hypothesis[j].as_ref();
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[(i - 1) * w + j - 1] + usize::from(!eq(i - 1, j - 1));
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = diag.min(del).min(ins);
        }
    }
    let mut out = AlignmentResult::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = eq(i - 1, j - 1);
            if d[(i - 1) * w + j - 1] + usize::from(!same) == here {
                let (r, h) = (reference[i - 1].as_ref().into(), hypothesis[j - 1].as_ref().into());
                if same {
                    out.matches += 1;
                    out.ops.push(EditOp::Match { r, h });
                } else {
                    out.substitutions += 1;
                    out.ops.push(EditOp::Substitution { r, h });
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            out.deletions += 1;
            out.ops.push(EditOp::Deletion { r: reference[i - 1].as_ref().into() });
            i -= 1;
        } else {
            out.insertions += 1;
            out.ops.push(EditOp::Insertion { h: hypothesis[j - 1].as_ref().into() });
            j -= 1;
        }
    }
    out.ops.reverse();
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub errors: usize,
    pub ref_count: usize,
}

impl ClassCounts {
    /// `None` when there are no reference words in the class.
    pub fn rate(&self) -> Option<f64> {
        (self.ref_count > 0).then(|| self.errors as f64 / self.ref_count as f64)
    }

    fn add(&mut self, o: &ClassCounts) {
        self.errors += o.errors;
        self.ref_count += o.ref_count;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WerReport {
    pub overall: ClassCounts,
    /// Words outside the biasing set.
    pub u: ClassCounts,
    /// Words inside the biasing set.
    pub b: ClassCounts,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

/// Attributes substitutions and deletions by the reference word and
/// insertions by the hypothesis word.
pub fn wer_breakdown(alignment: &AlignmentResult, biasing: &BTreeSet<String>) -> WerReport {
    let mut rep = WerReport {
        substitutions: alignment.substitutions,
        deletions: alignment.deletions,
        insertions: alignment.insertions,
        ..Default::default()
    };
    for op in &alignment.ops {
        let (word, is_ref, is_err) = match op {
            EditOp::Match { r, .. } => (r, true, false),
            EditOp::Substitution { r, .. } | EditOp::Deletion { r } => (r, true, true),
            EditOp::Insertion { h } => (h, false, true),
        };
        let class = if biasing.contains(word) { &mut rep.b } else { &mut rep.u };
        class.ref_count += usize::from(is_ref);
        class.errors += usize::from(is_err);
    }
    rep.overall = ClassCounts {
        errors: rep.u.errors + rep.b.errors,
        ref_count: rep.u.ref_count + rep.b.ref_count,
    };
    rep
}

/// Normalizes both sides, aligns and breaks down a single utterance.
pub fn score_utterance(reference: &str, hypothesis: &str, biasing: &BTreeSet<String>) -> WerReport {
    let r = crate::text::normalize(reference);
    let h = crate::text::normalize(hypothesis);
    let rw: Vec<&str> = r.split_whitespace().collect();
    let hw: Vec<&str> = h.split_whitespace().collect();
    wer_breakdown(&align(&rw, &hw), biasing)
}

/// Sums counts; rates follow from the sums.
pub fn corpus_report<'a>(reports: impl IntoIterator<Item = &'a WerReport>) -> WerReport {
    let mut acc = WerReport::default();
    for r in reports {
        acc.overall.add(&r.overall);
        acc.u.add(&r.u);
        acc.b.add(&r.b);
        acc.substitutions += r.substitutions;
        acc.deletions += r.deletions;
        acc.insertions += r.insertions;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    fn bset(w: &[&str]) -> BTreeSet<String> {
        w.iter().map(|s| String::from(*s)).collect()
    }

    #[test]
    fn basic_alignments() {
        let a = align(&words("a b c"), &words("a b c"));
        assert_eq!((a.cost(), a.matches), (0, 3));
        let a = align(&words("a b c"), &words("a x c"));
        assert_eq!((a.cost(), a.substitutions), (1, 1));
        let a = align(&words("a b"), &words("b"));
        assert_eq!((a.cost(), a.deletions), (1, 1));
        let a = align::<&str>(&[], &[]);
        assert!(a.ops.is_empty());
    }

    #[test]
    fn class_attribution() {
        let b = bset(&["klein"]);
        let r = score_utterance("meet klein today", "meet klane today", &b);
        assert_eq!(r.overall, ClassCounts { errors: 1, ref_count: 3 });
        assert_eq!(r.b, ClassCounts { errors: 1, ref_count: 1 });
        assert_eq!(r.u, ClassCounts { errors: 0, ref_count: 2 });

        let r = score_utterance("hello", "hello klein", &b);
        assert_eq!(r.b, ClassCounts { errors: 1, ref_count: 0 });
        assert_eq!(r.b.rate(), None);
        assert_eq!(r.u, ClassCounts { errors: 0, ref_count: 1 });
        assert_eq!(r.overall.rate(), Some(1.0));

        let r = score_utterance("a b", "a b", &b);
        assert_eq!(r.overall.rate(), Some(0.0));
    }

    #[test]
    fn corpus_sums() {
        let mk = |e, n| WerReport {
            overall: ClassCounts { errors: e, ref_count: n },
            u: ClassCounts { errors: e, ref_count: n },
            ..Default::default()
        };
        let (a, b) = (mk(1, 10), mk(3, 10));
        let c = corpus_report([&a, &b]);
        assert_eq!(c.overall.rate(), Some(0.2));
        assert_eq!(c, corpus_report([&b, &a]));
        assert_eq!(corpus_report([&a]), a);
    }
}
