use std::collections::BTreeSet;

use contextbias_core::eval::{align, wer_breakdown};
use proptest::prelude::*;

/// Exhaustive minimum edit cost by recursion over all operation choices.
fn exhaustive(r: &[u8], h: &[u8]) -> usize {
    match (r.split_first(), h.split_first()) {
        (None, _) => h.len(),
        (_, None) => r.len(),
        (Some((a, rr)), Some((b, hh))) => {
            let sub = exhaustive(rr, hh) + usize::from(a != b);
            let del = exhaustive(rr, h) + 1;
            let ins = exhaustive(r, hh) + 1;
            sub.min(del).min(ins)
        }
    }
}

fn to_words(v: &[u8]) -> Vec<String> {
    v.iter().map(|b| format!("w{b}")).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matches_exhaustive_oracle(
        r in prop::collection::vec(0u8..4, 0..=5),
        h in prop::collection::vec(0u8..4, 0..=5),
        bias in prop::collection::btree_set(0u8..4, 0..=2),
    ) {
        let (rw, hw) = (to_words(&r), to_words(&h));
        let a = align(&rw, &hw);
        prop_assert_eq!(a.cost(), exhaustive(&r, &h));
        prop_assert_eq!(a.matches + a.substitutions + a.deletions, r.len());
        prop_assert_eq!(a.matches + a.substitutions + a.insertions, h.len());

        let bset: BTreeSet<String> = bias.iter().map(|b| format!("w{b}")).collect();
        let rep = wer_breakdown(&a, &bset);
        prop_assert_eq!(rep.u.errors + rep.b.errors, rep.overall.errors);
        prop_assert_eq!(rep.overall.errors, a.cost());
        prop_assert_eq!(rep.overall.ref_count, r.len());

        let empty = wer_breakdown(&a, &BTreeSet::new());
        prop_assert_eq!(empty.b.errors + empty.b.ref_count, 0);
        prop_assert_eq!(empty.u, empty.overall);
    }
}
