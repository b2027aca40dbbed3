use std::collections::BTreeSet;

use contextbias_core::text::{build_biasing_list, perturb_utterance, perturb_word, SpellingRuleSet};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn lexicon() -> Vec<&'static str> {
    vec![
        "klein", "seize", "lee", "phone", "quick", "jive", "moor", "teller", "zyx", "bran", "cede",
        "the", "and", "a", "to", "of",
    ]
}

/// True when `out` can be produced from `word[i..]` by always applying one of
/// the longest patterns matching at each position.
fn replays(rules: &SpellingRuleSet, word: &str, i: usize, out: &str) -> bool {
    if i == word.len() {
        return out.is_empty();
    }
    match rules.matches_at(word, i).map(|(p, _)| p.len()).max() {
        None => out.starts_with(&word[i..i + 1]) && replays(rules, word, i + 1, &out[1..]),
        Some(len) => rules
            .matches_at(word, i)
            .filter(|(p, _)| p.len() == len)
            .any(|(_, q)| out.starts_with(q) && replays(rules, word, i + len, &out[q.len()..])),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    // For every position, the length consumed by the rewriter is the longest
    // pattern that matches there in the input.
    #[test]
    fn maximal_match(word in "[a-z]{1,10}", seed in any::<u64>()) {
        let rules = SpellingRuleSet::english();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = perturb_word(&word, &rules, &mut rng);
        prop_assert!(replays(&rules, &word, 0, &out), "{} -> {}", word, out);
    }
}

#[test]
fn consistency_over_many_utterances() {
    let rules = SpellingRuleSet::english();
    let lex = lexicon();
    let rare: BTreeSet<String> = lex[..11].iter().map(|s| s.to_string()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    use rand::seq::SliceRandom;
    use rand::Rng;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..8);
        let words: Vec<&str> = (0..n).map(|_| *lex.choose(&mut rng).unwrap()).collect();
        let reference = words.join(" ");
        let list = build_biasing_list(&reference, &rare, &rare, 3, &mut rng);
        let prob = rng.gen_range(0.0..=1.0);
        let (t, l) = perturb_utterance(&reference, &list, &rare, prob, &rules, &mut rng).unwrap();
        let out: Vec<&str> = t.split_whitespace().collect();
        assert_eq!(out.len(), words.len());
        for (orig, new) in words.iter().zip(&out) {
            if !rare.contains(*orig) {
                assert_eq!(orig, new);
            } else {
                // Every rare token, rewritten or not, appears in the list.
                assert!(l.contains(new), "{new} missing from {:?}", l.entries());
            }
        }
        // Identical originals map to identical outputs.
        for i in 0..n {
            for j in 0..n {
                if words[i] == words[j] {
                    assert_eq!(out[i], out[j]);
                }
            }
        }
        // No orphaned originals left in the list when they were rewritten.
        for (orig, new) in words.iter().zip(&out) {
            if orig != new {
                assert!(!l.contains(orig) || out.contains(orig));
            }
        }
    }
}
