//! End-to-end steps shared by the CLI and the acceptance run.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::Instant;

use contextbias_core::data::Utterance;
use contextbias_core::decode::{
    beam_search, BeamSettings, BiasingTrie, ContextCache, Fusion, Hypothesis, ModelScorer, PredictorTable,
};
use contextbias_core::eval::{corpus_report, score_utterance, WerReport};
use contextbias_core::model::{ModelConfig, Transducer};
use contextbias_core::text::{
    build_biasing_list, drop_no_rare_utterances, rare_words, BiasingList, CharVocab, FrequencyTable, SpellingRuleSet,
};
use contextbias_core::train::{self, tokenize_entries, BiasingSetup, Example, StepReport};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DecodeConfig, RunConfig};
use crate::error::{Error, Result};
use crate::io::{NbestEntry, NbestRecord};

/// Seed offsets that keep model initialization, list sampling and data
/// dropping on separate streams.
const BASE_INIT: u64 = 0x0ba5e;
const BIAS_INIT: u64 = 0xb1a5;
const DROP: u64 = 0xd409;

/// Rare words: everything outside the `top_k` most frequent training words,
/// plus words of `others` never seen in training.
pub fn rare_vocabulary<'a>(
    train: &'a [Utterance],
    others: impl IntoIterator<Item = &'a Utterance>,
    top_k: usize,
) -> BTreeSet<String> {
    let table = FrequencyTable::build(train.iter().map(|u| u.reference.as_str()));
    let mut rare = rare_words(&table, top_k);
    for u in others {
        for w in u.reference.split_whitespace() {
            if table.count(w) == 0 {
                rare.insert(w.to_string());
            }
        }
    }
    rare
}

/// Distractor pool: the rare words plus the unspoken distractor words.
pub fn distractor_pool(rare: &BTreeSet<String>, extra: &[String]) -> BTreeSet<String> {
    rare.iter().chain(extra).cloned().collect()
}

fn utterance_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(index as u64)
}

/// Evaluation lists: each utterance's rare words plus `n` distractors. Every
/// utterance draws from its own seeded stream, so lists do not depend on
/// which other utterances are present.
pub fn eval_lists(
    utts: &[Utterance],
    rare: &BTreeSet<String>,
    pool: &BTreeSet<String>,
    n: usize,
    seed: u64,
) -> BTreeMap<String, BiasingList> {
    utts.iter()
        .enumerate()
        .map(|(i, u)| {
            let mut rng = ChaCha8Rng::seed_from_u64(utterance_seed(seed, i));
            (u.id.clone(), build_biasing_list(&u.reference, rare, pool, n, &mut rng))
        })
        .collect()
}

fn examples(utts: &[Utterance]) -> Vec<Example<'_>> {
    utts.iter().map(|u| Example { features: &u.features, transcript: &u.reference }).collect()
}

pub fn train_base_model(
    cfg: &RunConfig,
    train: &[Utterance],
    log: impl FnMut(&StepReport),
) -> Result<(Transducer, Vec<StepReport>)> {
    let mut model = Transducer::new(cfg.model.without_adapters(), cfg.seed ^ BASE_INIT)?;
    let reports = train::train_base(&mut model, &examples(train), &cfg.base_training, log)?;
    Ok((model, reports))
}

/// Knobs that vary between biasing runs of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasingRun {
    pub injection_layers: Vec<usize>,
    pub perturb_prob: f64,
}

pub fn train_biasing_model(
    cfg: &RunConfig,
    base: &Transducer,
    train: &[Utterance],
    rare: &BTreeSet<String>,
    pool: &BTreeSet<String>,
    run: &BiasingRun,
    log: impl FnMut(&StepReport),
) -> Result<(Transducer, Vec<StepReport>)> {
    let model_cfg = ModelConfig { injection_layers: run.injection_layers.clone(), ..cfg.model.clone() };
    model_cfg.validate()?;
    let mut model = Transducer::with_base(base, model_cfg, cfg.seed ^ BIAS_INIT)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DROP);
    let kept = drop_no_rare_utterances(train, |u| u.reference.as_str(), cfg.biasing.drop_no_rare_prob, rare, &mut rng)?;
    let rules = SpellingRuleSet::english();
    let setup = BiasingSetup {
        rare,
        pool,
        rules: &rules,
        perturb_prob: run.perturb_prob,
        n_distractors: cfg.biasing.n_distractors_train,
    };
    let reports = train::train_biasing(&mut model, &examples(&kept), &setup, &cfg.biasing_training, log)?;
    Ok((model, reports))
}

/// How a test set is decoded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Mode {
    /// No biasing: the lists are ignored.
    No,
    /// Shallow fusion over the lists with the given bonus.
    Sf(f64),
    /// Neural biasing through the model's adapters.
    Nb,
}

impl Mode {
    pub fn label(&self) -> String {
        match self {
            Mode::No => "NO".into(),
            Mode::Sf(l) => format!("SF(λ={l})"),
            Mode::Nb => "NB".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub id: String,
    pub nbest: Vec<Hypothesis>,
}

impl Decoded {
    pub fn best_text(&self) -> String {
        self.nbest.first().map(|h| CharVocab.decode(&h.tokens)).unwrap_or_default()
    }

    pub fn to_record(&self) -> NbestRecord {
        NbestRecord {
            id: self.id.clone(),
            hypotheses: self
                .nbest
                .iter()
                .map(|h| NbestEntry { text: CharVocab.decode(&h.tokens), score: h.score, base_score: h.base_score })
                .collect(),
        }
    }
}

fn list_of<'a>(lists: &'a BTreeMap<String, BiasingList>, id: &str) -> Result<&'a BiasingList> {
    lists.get(id).ok_or_else(|| Error::Config(format!("no biasing list for utterance {id}")))
}

/// Decodes every utterance in parallel; results keep the input order.
///
/// The precomputation each mode needs (predictor table, context cache over
/// the union of all lists) happens inside this call, so timing it measures
/// the full cost of the mode.
pub fn decode_set(
    model: &Transducer,
    utts: &[Utterance],
    lists: &BTreeMap<String, BiasingList>,
    mode: Mode,
    dc: &DecodeConfig,
) -> Result<Vec<Decoded>> {
    if mode == Mode::Nb && !model.config().is_contextual() {
        return Err(Error::Config("NB decoding needs a model with biasing adapters".into()));
    }
    let table = if model.config().bias_predictor && mode == Mode::Nb { None } else { Some(PredictorTable::build(model)?) };
    // NB: distinct entry strings across all lists, numbered by first
    // appearance, are encoded once; each list then picks rows by number.
    let (cache, numbers) = if mode == Mode::Nb {
        let mut numbers: HashMap<&str, usize> = HashMap::new();
        let mut distinct = Vec::new();
        for u in utts {
            for e in list_of(lists, &u.id)?.entries() {
                numbers.entry(e.as_str()).or_insert_with(|| {
                    distinct.push(e.as_str());
                    distinct.len() - 1
                });
            }
        }
        (Some(ContextCache::build(model, &tokenize_entries(&distinct)?)?), numbers)
    } else {
        (None, HashMap::new())
    };
    utts.par_iter()
        .map(|u| {
            let (ctx, trie) = match mode {
                Mode::No => (None, None),
                Mode::Sf(_) => (None, Some(BiasingTrie::build(list_of(lists, &u.id)?, &CharVocab)?)),
                Mode::Nb => {
                    let picks: Vec<usize> =
                        list_of(lists, &u.id)?.entries().iter().map(|e| numbers[e.as_str()]).collect();
                    (Some(cache.as_ref().expect("built for NB").context_rows(&picks)?), None)
                }
            };
            let scorer = ModelScorer::new(model, &u.features, ctx, table.as_ref())?;
            let fusion = match (mode, &trie) {
                (Mode::Sf(lambda), Some(trie)) => Some(Fusion { trie, lambda }),
                _ => None,
            };
            let settings = BeamSettings { beam: dc.beam, max_symbols: dc.max_symbols, fusion };
            Ok(Decoded { id: u.id.clone(), nbest: beam_search(&scorer, &settings)? })
        })
        .collect()
}

/// Wall-clock seconds of [`decode_set`].
pub fn timed_decode(
    model: &Transducer,
    utts: &[Utterance],
    lists: &BTreeMap<String, BiasingList>,
    mode: Mode,
    dc: &DecodeConfig,
) -> Result<(Vec<Decoded>, f64)> {
    let start = Instant::now();
    let out = decode_set(model, utts, lists, mode, dc)?;
    Ok((out, start.elapsed().as_secs_f64()))
}

/// Corpus WER with each utterance's biasing words as the B class.
pub fn score_set(
    utts: &[Utterance],
    hyps: &BTreeMap<String, String>,
    lists: &BTreeMap<String, BiasingList>,
) -> Result<WerReport> {
    let mut reports = Vec::with_capacity(utts.len());
    for u in utts {
        let hyp = hyps.get(&u.id).ok_or_else(|| Error::Config(format!("no hypothesis for utterance {}", u.id)))?;
        reports.push(score_utterance(&u.reference, hyp, &list_of(lists, &u.id)?.word_set()));
    }
    Ok(corpus_report(&reports))
}

pub fn best_texts(decoded: &[Decoded]) -> BTreeMap<String, String> {
    decoded.iter().map(|d| (d.id.clone(), d.best_text())).collect()
}

/// Picks the fusion bonus with the lowest dev WER; ties go to the smaller
/// bonus.
pub fn tune_lambda(
    base: &Transducer,
    dev: &[Utterance],
    lists: &BTreeMap<String, BiasingList>,
    dc: &DecodeConfig,
) -> Result<(f64, Vec<(f64, WerReport)>)> {
    let mut grid = dc.fusion_lambda_grid.clone();
    if grid.is_empty() {
        grid.push(dc.fusion_lambda);
    }
    let mut tried = Vec::with_capacity(grid.len());
    for &l in &grid {
        let d = decode_set(base, dev, lists, Mode::Sf(l), dc)?;
        tried.push((l, score_set(dev, &best_texts(&d), lists)?));
    }
    let key = |r: &WerReport| r.overall.rate().unwrap_or(0.0);
    let best = tried
        .iter()
        .min_by(|a, b| key(&a.1).total_cmp(&key(&b.1)).then(a.0.total_cmp(&b.0)))
        .map(|t| t.0)
        .expect("grid is non-empty");
    Ok((best, tried))
}

/// Mid and last encoder layers (1-based).
pub fn mid_and_last(cfg: &ModelConfig) -> Vec<usize> {
    let l = cfg.num_encoder_layers;
    let mut v = vec![l.div_ceil(2), l];
    v.dedup();
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bench {
    pub utterances: usize,
    pub no_seconds: f64,
    pub nb_seconds: f64,
    pub ratio: f64,
}

/// Times NO decoding with `base` against NB decoding with `nb`. The two
/// modes alternate for five rounds and each keeps its fastest run, which
/// damps first-touch effects and drifts in machine load.
pub fn bench(
    base: &Transducer,
    nb: &Transducer,
    utts: &[Utterance],
    lists: &BTreeMap<String, BiasingList>,
    dc: &DecodeConfig,
) -> Result<Bench> {
    let (mut no_seconds, mut nb_seconds) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..5 {
        no_seconds = no_seconds.min(timed_decode(base, utts, lists, Mode::No, dc)?.1);
        nb_seconds = nb_seconds.min(timed_decode(nb, utts, lists, Mode::Nb, dc)?.1);
    }
    Ok(Bench { utterances: utts.len(), no_seconds, nb_seconds, ratio: nb_seconds / no_seconds })
}
