use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{contract, Result};

/// Alternative-spelling rules: unordered pattern pairs, each usable in
/// both directions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpellingRuleSet {
    pairs: Vec<(String, String)>,
    /// Directed rules grouped by the pattern's first character.
    by_first: BTreeMap<char, Vec<(String, String)>>,
}

/// Outcome of checking a rule list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleReport {
    pub pairs: usize,
    pub missing_letters: Vec<char>,
    /// Pairs (by position) repeating an earlier pair in either orientation.
    pub duplicates: Vec<usize>,
    /// Pairs (by position) that close a cycle among three or more patterns.
    pub cycles: Vec<usize>,
}

impl RuleReport {
    pub fn passed(&self) -> bool {
        self.missing_letters.is_empty()
    }
}

/// Built-in English alternative-spelling pairs.
pub const ENGLISH_RULES: &[(&str, &str)] = &[
    ("ein", "ane"),
    ("lee", "li"),
    ("s", "z"),
    ("c", "k"),
    ("ck", "k"),
    ("ph", "f"),
    ("ee", "ea"),
    ("ie", "ei"),
    ("i", "y"),
    ("oo", "ue"),
    ("ou", "ow"),
    ("ai", "ay"),
    ("er", "ur"),
    ("x", "ks"),
    ("qu", "kw"),
    ("j", "g"),
    ("v", "w"),
    ("th", "t"),
    ("b", "bb"),
    ("d", "dd"),
    ("l", "ll"),
    ("m", "mm"),
    ("n", "nn"),
    ("r", "rr"),
    ("p", "pp"),
    ("o", "oh"),
];

fn validate_pattern(p: &str) -> Result<()> {
    if p.is_empty() {
        return Err(contract("empty spelling pattern"));
    }
    if p.chars().any(|c| c.is_uppercase() || c.is_whitespace()) {
        return Err(contract(alloc::format!("pattern {p:?} must be lowercase without spaces")));
    }
    Ok(())
}

fn canonical(p: &str, q: &str) -> (String, String) {
    if p <= q {
        (p.into(), q.into())
    } else {
        (q.into(), p.into())
    }
}

impl SpellingRuleSet {
    /// Strict construction: rejects empty or identical patterns and duplicate pairs.
    pub fn new<S: AsRef<str>>(pairs: impl IntoIterator<Item = (S, S)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut out = Self::default();
        for (p, q) in pairs {
            let (p, q) = (p.as_ref(), q.as_ref());
            validate_pattern(p)?;
            validate_pattern(q)?;
            if p == q {
                return Err(contract(alloc::format!("rule {p:?} maps to itself")));
            }
            if !seen.insert(canonical(p, q)) {
                return Err(contract(alloc::format!("duplicate rule {p}<->{q}")));
            }
            out.push(p, q);
        }
        Ok(out)
    }

    fn push(&mut self, p: &str, q: &str) {
        self.pairs.push((p.into(), q.into()));
        for (a, b) in [(p, q), (q, p)] {
            let first = a.chars().next().expect("validated non-empty");
            self.by_first
                .entry(first)
                .or_default()
                .push((a.into(), b.into()));
        }
    }

    pub fn english() -> Self {
        Self::new(ENGLISH_RULES.iter().copied()).expect("built-in rules are valid")
    }

    /// Subset of pairs whose two patterns have equal length.
    pub fn length_preserving(&self) -> Self {
        let mut out = Self::default();
        for (p, q) in &self.pairs {
            if p.chars().count() == q.chars().count() {
                out.push(p, q);
            }
        }
        out
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Directed rules whose pattern matches `word` at byte offset `at`.
    pub fn matches_at<'a>(&'a self, word: &'a str, at: usize) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        let rest = &word[at..];
        let first = rest.chars().next();
        first
            .and_then(|c| self.by_first.get(&c))
            .into_iter()
            .flatten()
            .filter(move |(p, _)| rest.starts_with(p.as_str()))
            .map(|(p, q)| (p.as_str(), q.as_str()))
    }

    /// Lowercase ASCII letters that appear in no pattern.
    pub fn missing_letters(&self) -> Vec<char> {
        let mut covered = BTreeSet::new();
        for (p, q) in &self.pairs {
            covered.extend(p.chars().chain(q.chars()));
        }
        ('a'..='z').filter(|c| !covered.contains(c)).collect()
    }

    /// Lenient check over raw pairs, reporting coverage, duplicates and
    /// cycles instead of failing on them.
    pub fn check<S: AsRef<str>>(pairs: &[(S, S)]) -> Result<RuleReport> {
        let mut report = RuleReport {
            pairs: pairs.len(),
            ..Default::default()
        };
        let mut seen = BTreeSet::new();
        let mut set = Self::default();
        // Union-find over patterns; an edge inside one component closes a cycle.
        let mut parent: BTreeMap<String, String> = BTreeMap::new();
        fn find(parent: &mut BTreeMap<String, String>, x: &str) -> String {
            let mut cur = String::from(x);
            loop {
                let p = parent.entry(cur.clone()).or_insert_with(|| cur.clone()).clone();
                if p == cur {
                    return cur;
                }
                cur = p;
            }
        }
        for (i, (p, q)) in pairs.iter().enumerate() {
            let (p, q) = (p.as_ref(), q.as_ref());
            validate_pattern(p)?;
            validate_pattern(q)?;
            if p == q {
                return Err(contract(alloc::format!("rule {p:?} maps to itself")));
            }
            if !seen.insert(canonical(p, q)) {
                report.duplicates.push(i);
                continue;
            }
            let (rp, rq) = (find(&mut parent, p), find(&mut parent, q));
            if rp == rq {
                report.cycles.push(i);
            } else {
                parent.insert(rp, rq);
            }
            set.push(p, q);
        }
        report.missing_letters = set.missing_letters();
        Ok(report)
    }
}
