use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::{BiasingList, SpellingRuleSet};
use crate::error::{contract, Result};

/// One left-to-right pass replacing the longest matching pattern at each
/// position. Equal-length matches are chosen uniformly via `rng`.
pub fn perturb_word<R: Rng + ?Sized>(word: &str, rules: &SpellingRuleSet, rng: &mut R) -> String {
    let mut out = String::with_capacity(word.len() + 4);
    let mut i = 0;
    let mut best: Vec<(&str, &str)> = Vec::new();
    while i < word.len() {
        best.clear();
        let mut best_len = 0;
        for (p, q) in rules.matches_at(word, i) {
            if p.len() > best_len {
                best.clear();
                best_len = p.len();
            }
            if p.len() == best_len {
                best.push((p, q));
            }
        }
        match best.len() {
            0 => {
                let c = word[i..].chars().next().expect("in bounds");
                out.push(c);
                i += c.len_utf8();
            }
            n => {
                let pick = if n == 1 { 0 } else { rng.gen_range(0..n) };
                let (p, q) = best[pick];
                out.push_str(q);
                i += p.len();
            }
        }
    }
    out
}

/// Rewrites rare words of a transcript with probability `prob` each,
/// applying the same rewrite to every occurrence and to the biasing list.
pub fn perturb_utterance<R: Rng + ?Sized>(
    reference: &str,
    biasing: &BiasingList,
    rare: &BTreeSet<String>,
    prob: f64,
    rules: &SpellingRuleSet,
    rng: &mut R,
) -> Result<(String, BiasingList)> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(contract(alloc::format!("perturbation probability {prob} outside [0, 1]")));
    }
    let mut rewrites: BTreeMap<&str, String> = BTreeMap::new();
    let mut decided: BTreeSet<&str> = BTreeSet::new();
    for w in reference.split_whitespace() {
        if !rare.contains(w) {
            continue;
        }
        // One draw per token; a word rewritten once stays rewritten.
        let hit = prob > 0.0 && rng.gen_bool(prob);
        if hit && decided.insert(w) {
            let alt = perturb_word(w, rules, rng);
            if alt != w {
                rewrites.insert(w, alt);
            }
        }
    }
    if rewrites.is_empty() {
        return Ok((reference.into(), biasing.clone()));
    }
    let map = |w: &str| -> String { rewrites.get(w).cloned().unwrap_or_else(|| w.into()) };
    let transcript = reference.split_whitespace().map(map).collect::<Vec<_>>().join(" ");
    let list = BiasingList::dedup(biasing.entries().iter().map(|e| {
        e.split_whitespace().map(map).collect::<Vec<_>>().join(" ")
    }));
    Ok((transcript, list))
}

/// Keeps every item with a rare word; drops the rest with probability `prob`.
pub fn drop_no_rare_utterances<T: Clone, R: Rng + ?Sized>(
    items: &[T],
    transcript: impl Fn(&T) -> &str,
    prob: f64,
    rare: &BTreeSet<String>,
    rng: &mut R,
) -> Result<Vec<T>> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(contract(alloc::format!("drop probability {prob} outside [0, 1]")));
    }
    let mut kept = Vec::with_capacity(items.len());
    for it in items {
        let has_rare = transcript(it).split_whitespace().any(|w| rare.contains(w));
        if has_rare || prob == 0.0 || !rng.gen_bool(prob) {
            kept.push(it.clone());
        }
    }
    Ok(kept)
}
