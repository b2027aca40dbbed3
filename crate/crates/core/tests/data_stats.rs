use contextbias_core::data::{corpus_stats, generate_corpus, SynthConfig};
use contextbias_core::text::{rare_words, FrequencyTable};

#[test]
fn rare_share_near_target_and_frequency_cut_matches_lexicon() {
    let cfg = SynthConfig::default();
    let c = generate_corpus(&cfg).unwrap();
    let s = corpus_stats(&c.train);
    assert!((s.rare_share - cfg.rare_share).abs() <= 0.02, "{s:?}");

    let table = FrequencyTable::build(c.train.iter().map(|u| u.reference.as_str()));
    let rare = rare_words(&table, cfg.lexicon_common);
    let lex_rare = c.lexicon.rare_set();
    let wrong = rare.iter().filter(|w| !lex_rare.contains(*w)).count();
    eprintln!("stats {s:?}; frequency-rare {} lexicon-rare {} misplaced {wrong}", rare.len(), lex_rare.len());
    assert_eq!(wrong, 0);
}
