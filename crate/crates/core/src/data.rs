//! Synthetic homophone speech corpus.
//!
//! Every character (and the word separator) has a fixed random prototype
//! vector; an utterance's features repeat each character's prototype for
//! `frames_per_char` frames and add Gaussian noise. Common words follow a
//! Zipf-like distribution, rare words are drawn uniformly. A homophone twin
//! is a rare word obtained by applying one spelling rule to another rare
//! word, and it is rendered with the base word's prototypes, so only context
//! can tell the two apart.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::numkit::Tensor;
use crate::text::SpellingRuleSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub lexicon_common: usize,
    pub lexicon_rare: usize,
    /// Rare-word pairs with identical acoustics; both members count as rare.
    pub homophone_pairs: usize,
    /// Extra rare-looking words that are never spoken; they only enlarge the
    /// distractor pool.
    pub distractor_words: usize,
    pub frames_per_char: usize,
    pub noise_sigma: f64,
    pub d_feat: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Target share of rare-word tokens.
    pub rare_share: f64,
    pub zipf_exponent: f64,
    pub train_utterances: usize,
    pub dev_utterances: usize,
    pub test_utterances: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            lexicon_common: 150,
            lexicon_rare: 600,
            homophone_pairs: 150,
            distractor_words: 0,
            frames_per_char: 3,
            noise_sigma: 0.5,
            d_feat: 16,
            min_words: 2,
            max_words: 5,
            rare_share: 0.15,
            zipf_exponent: 0.8,
            train_utterances: 3000,
            dev_utterances: 200,
            test_utterances: 500,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.min_words == 0 || self.max_words < self.min_words {
            return bad(format!("utterance length range {}..={} is empty or zero", self.min_words, self.max_words));
        }
        if self.lexicon_common == 0 || self.lexicon_rare == 0 || self.frames_per_char == 0 || self.d_feat == 0 {
            return bad("lexicon sizes, frames_per_char and d_feat must be positive".into());
        }
        if 2 * self.homophone_pairs > self.lexicon_rare {
            return bad(format!(
                "{} homophone pairs need more than {} rare words",
                self.homophone_pairs, self.lexicon_rare
            ));
        }
        if !(0.0..=1.0).contains(&self.rare_share) {
            return bad(format!("rare_share {} outside [0, 1]", self.rare_share));
        }
        if !(self.noise_sigma >= 0.0) || !(self.zipf_exponent >= 0.0) {
            return bad("noise_sigma and zipf_exponent must be non-negative".into());
        }
        if self.train_utterances + self.dev_utterances + self.test_utterances == 0 {
            return bad("corpus has no utterances".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    /// `[T × d_feat]`, `T = frames_per_char × reference.len()`.
    pub features: Tensor,
    pub reference: String,
    pub rare_flags: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub common: Vec<String>,
    pub rare: Vec<String>,
    /// `(base, twin)`: the twin is rendered with the base's acoustics.
    pub homophones: Vec<(String, String)>,
    /// Unspoken words, disjoint from `common` and `rare`.
    pub distractors: Vec<String>,
}

impl Lexicon {
    pub fn rare_set(&self) -> BTreeSet<String> {
        self.rare.iter().cloned().collect()
    }

    /// Spelling whose prototypes render `word`.
    pub fn acoustic_spelling<'a>(&'a self, word: &'a str) -> &'a str {
        self.homophones
            .iter()
            .find(|(_, t)| t == word)
            .map_or(word, |(b, _)| b.as_str())
    }
}

/// Character prototypes: rows for `' '` then `a..=z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototypes {
    table: Tensor,
}

impl Prototypes {
    pub fn random<R: Rng + ?Sized>(d_feat: usize, rng: &mut R) -> Self {
        Self { table: Tensor::from_fn(&[27, d_feat], |_| rng.sample(StandardNormal)) }
    }

    fn row(&self, c: char) -> Result<&[f64]> {
        match c {
            ' ' => Ok(self.table.row(0)),
            'a'..='z' => Ok(self.table.row(c as usize - 'a' as usize + 1)),
            _ => Err(Error::Contract(format!("no prototype for {c:?}"))),
        }
    }

    /// Noiseless features of a spelled text.
    pub fn render_clean(&self, text: &str, frames_per_char: usize) -> Result<Tensor> {
        let d = self.table.shape()[1];
        let n = text.chars().count();
        let mut data = Vec::with_capacity(n * frames_per_char * d);
        for c in text.chars() {
            let row = self.row(c)?;
            for _ in 0..frames_per_char {
                data.extend_from_slice(row);
            }
        }
        Tensor::new(&[n * frames_per_char, d], data)
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub train: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    pub test: Vec<Utterance>,
    pub lexicon: Lexicon,
    pub prototypes: Prototypes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub utterances: usize,
    pub tokens: usize,
    pub rare_tokens: usize,
    pub rare_share: f64,
    pub frames: usize,
}

pub fn corpus_stats(utts: &[Utterance]) -> CorpusStats {
    let tokens: usize = utts.iter().map(|u| u.rare_flags.len()).sum();
    let rare_tokens: usize = utts.iter().map(|u| u.rare_flags.iter().filter(|&&r| r).count()).sum();
    CorpusStats {
        utterances: utts.len(),
        tokens,
        rare_tokens,
        rare_share: if tokens == 0 { 0.0 } else { rare_tokens as f64 / tokens as f64 },
        frames: utts.iter().map(|u| u.features.shape()[0]).sum(),
    }
}

const DISTRACTOR_STREAM: u64 = 2;

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvwxz";
const VOWELS: &[u8] = b"aeiouy";

fn random_word<R: Rng + ?Sized>(rng: &mut R, min: usize, max: usize) -> String {
    let len = rng.gen_range(min..=max);
    let mut w = String::with_capacity(len + 1);
    let mut vowel = rng.gen_bool(0.3);
    while w.len() < len {
        let set = if vowel { VOWELS } else { CONSONANTS };
        w.push(*set.choose(rng).expect("non-empty") as char);
        // Occasional doubled vowel or consonant cluster.
        vowel = if rng.gen_bool(0.15) { vowel } else { !vowel };
    }
    w
}

/// Applies one directed rule at one random matching position.
fn single_rewrite<R: Rng + ?Sized>(word: &str, rules: &SpellingRuleSet, rng: &mut R) -> Option<String> {
    let spots: Vec<(usize, &str, &str)> = word
        .char_indices()
        .flat_map(|(i, _)| rules.matches_at(word, i).map(move |(p, q)| (i, p, q)))
        .collect();
    let &(i, p, q) = spots.choose(rng)?;
    Some(format!("{}{}{}", &word[..i], q, &word[i + p.len()..]))
}

fn build_lexicon<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<Lexicon> {
    let rules = SpellingRuleSet::english().length_preserving();
    let mut taken = BTreeSet::new();
    fn fresh<R: Rng + ?Sized>(taken: &mut BTreeSet<String>, rng: &mut R, min: usize, max: usize) -> Result<String> {
        for _ in 0..10_000 {
            let w = random_word(rng, min, max);
            if taken.insert(w.clone()) {
                return Ok(w);
            }
        }
        Err(Error::Config("lexicon too large for the word generator".into()))
    }
    let common = (0..cfg.lexicon_common)
        .map(|_| fresh(&mut taken, rng, 2, 5))
        .collect::<Result<Vec<_>>>()?;
    let mut homophones = Vec::with_capacity(cfg.homophone_pairs);
    let mut tries = 0;
    while homophones.len() < cfg.homophone_pairs {
        tries += 1;
        if tries > 100_000 {
            return Err(Error::Config("could not build enough homophone pairs".into()));
        }
        let base = fresh(&mut taken, rng, 4, 8)?;
        match single_rewrite(&base, &rules, rng) {
            Some(twin) if taken.insert(twin.clone()) => homophones.push((base, twin)),
            _ => {}
        }
    }
    let mut rare: Vec<String> = homophones.iter().flat_map(|(b, t)| [b.clone(), t.clone()]).collect();
    while rare.len() < cfg.lexicon_rare {
        rare.push(fresh(&mut taken, rng, 4, 8)?);
    }
    rare.shuffle(rng);
    // Separate stream, so the spoken corpus does not depend on this count.
    let mut drng = ChaCha8Rng::seed_from_u64(cfg.seed);
    drng.set_stream(DISTRACTOR_STREAM);
    let distractors = (0..cfg.distractor_words)
        .map(|_| fresh(&mut taken, &mut drng, 4, 8))
        .collect::<Result<Vec<_>>>()?;
    Ok(Lexicon { common, rare, homophones, distractors })
}

/// Generates train, dev and test splits from one seed.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lexicon = build_lexicon(cfg, &mut rng)?;
    let prototypes = Prototypes::random(cfg.d_feat, &mut rng);
    let weights: Vec<f64> = (0..lexicon.common.len())
        .map(|r| math::powf((r + 1) as f64, -cfg.zipf_exponent))
        .collect();
    let zipf = WeightedIndex::new(&weights).map_err(|e| Error::Config(format!("zipf weights: {e}")))?;
    let acoustic: BTreeMap<&str, &str> = lexicon.homophones.iter().map(|(b, t)| (t.as_str(), b.as_str())).collect();

    let make = |split: &str, n: usize, rng: &mut ChaCha8Rng| -> Result<Vec<Utterance>> {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let len = rng.gen_range(cfg.min_words..=cfg.max_words);
            let mut words = Vec::with_capacity(len);
            let mut flags = Vec::with_capacity(len);
            for _ in 0..len {
                if rng.gen_bool(cfg.rare_share) {
                    words.push(lexicon.rare.choose(rng).expect("non-empty").as_str());
                    flags.push(true);
                } else {
                    words.push(lexicon.common[zipf.sample(rng)].as_str());
                    flags.push(false);
                }
            }
            let reference = words.join(" ");
            let spoken: Vec<&str> = words.iter().map(|w| *acoustic.get(w).unwrap_or(w)).collect();
            let mut features = prototypes.render_clean(&spoken.join(" "), cfg.frames_per_char)?;
            if cfg.noise_sigma > 0.0 {
                for x in features.data_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *x += cfg.noise_sigma * z;
                }
            }
            out.push(Utterance { id: format!("{split}-{i:05}"), features, reference, rare_flags: flags });
        }
        Ok(out)
    };
    let train = make("train", cfg.train_utterances, &mut rng)?;
    let dev = make("dev", cfg.dev_utterances, &mut rng)?;
    let test = make("test", cfg.test_utterances, &mut rng)?;
    Ok(Corpus { train, dev, test, lexicon, prototypes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            lexicon_common: 30,
            lexicon_rare: 60,
            homophone_pairs: 10,
            train_utterances: 50,
            dev_utterances: 5,
            test_utterances: 5,
            ..Default::default()
        }
    }

    #[test]
    fn homophones_share_clean_acoustics() {
        let c = generate_corpus(&small()).unwrap();
        assert_eq!(c.lexicon.homophones.len(), 10);
        for (b, t) in &c.lexicon.homophones {
            assert_ne!(b, t);
            assert_eq!(b.len(), t.len());
            let a = c.prototypes.render_clean(c.lexicon.acoustic_spelling(b), 3).unwrap();
            let z = c.prototypes.render_clean(c.lexicon.acoustic_spelling(t), 3).unwrap();
            assert_eq!(a.max_abs_diff(&z), 0.0);
        }
    }

    #[test]
    fn frame_count_and_determinism() {
        let cfg = small();
        let a = generate_corpus(&cfg).unwrap();
        let b = generate_corpus(&cfg).unwrap();
        assert_eq!(a.train, b.train);
        for u in a.train.iter().chain(&a.test) {
            assert_eq!(u.features.shape(), &[3 * u.reference.len(), 16]);
            assert_eq!(u.rare_flags.len(), u.reference.split(' ').count());
        }
        let ids: BTreeSet<&str> = a.train.iter().chain(&a.dev).chain(&a.test).map(|u| u.id.as_str()).collect();
        assert_eq!(ids.len(), 60);
    }

    #[test]
    fn distractors_are_unspoken_and_leave_corpus_unchanged() {
        let a = generate_corpus(&small()).unwrap();
        let b = generate_corpus(&SynthConfig { distractor_words: 40, ..small() }).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(b.lexicon.distractors.len(), 40);
        let spoken: BTreeSet<&str> = b.lexicon.common.iter().chain(&b.lexicon.rare).map(|s| s.as_str()).collect();
        assert!(b.lexicon.distractors.iter().all(|d| !spoken.contains(d.as_str())));
    }

    #[test]
    fn degenerate_configs_rejected() {
        assert!(generate_corpus(&SynthConfig { max_words: 0, min_words: 0, ..small() }).is_err());
        assert!(generate_corpus(&SynthConfig { homophone_pairs: 40, ..small() }).is_err());
    }
}
