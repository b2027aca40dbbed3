//! Greedy and beam-search transducer decoding with optional shallow fusion.
//!
//! Both searches are frame-synchronous: at each encoder frame a hypothesis
//! may emit up to `max_symbols` labels before a blank moves it to the next
//! frame. When the cap is reached, blank is forced.

mod cache;
mod scorer;
mod trie;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

pub use cache::ContextCache;
pub use scorer::{JointScorer, ModelScorer, PredictorTable};
pub use trie::BiasingTrie;

use crate::error::{contract, Result};
use crate::math::log_add_exp;
use crate::numkit::kernels;
use crate::rnnt::BLANK;

pub const DEFAULT_MAX_SYMBOLS: usize = 8;

/// Trie-based score boosting: `lambda` per matched token.
#[derive(Debug, Clone, Copy)]
pub struct Fusion<'a> {
    pub trie: &'a BiasingTrie,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct BeamSettings<'a> {
    pub beam: usize,
    pub max_symbols: usize,
    pub fusion: Option<Fusion<'a>>,
}

impl Default for BeamSettings<'_> {
    fn default() -> Self {
        Self { beam: 4, max_symbols: DEFAULT_MAX_SYMBOLS, fusion: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    /// `base_score + completed_bonus + pending_bonus`.
    pub score: f64,
    pub base_score: f64,
    pub trie_state: usize,
    pub pending_bonus: f64,
    pub completed_bonus: f64,
}

impl Hypothesis {
    fn empty() -> Self {
        Self {
            tokens: Vec::new(),
            score: 0.0,
            base_score: 0.0,
            trie_state: BiasingTrie::ROOT,
            pending_bonus: 0.0,
            completed_bonus: 0.0,
        }
    }
}

/// Frame-synchronous argmax decoding.
pub fn greedy_decode<S: JointScorer + ?Sized>(scorer: &S, max_symbols: usize) -> Result<Vec<usize>> {
    let mut tokens = Vec::new();
    for t in 0..scorer.frames() {
        for _ in 0..max_symbols {
            let lp = scorer.log_probs(t, &[&tokens])?.pop().expect("one row");
            let k = kernels::argmax(&lp);
            if k == BLANK {
                break;
            }
            tokens.push(k);
        }
    }
    Ok(tokens)
}

/// Fusion state after emitting `token` from `(state, pending, completed)`.
fn advance(f: &Fusion<'_>, prev: Option<usize>, state: usize, pending: f64, completed: f64, token: usize) -> (usize, f64, f64) {
    let step = |node: usize, pending: f64, completed: f64| {
        let (pending, completed) = (pending + f.lambda, completed);
        if f.trie.is_terminal(node) {
            (BiasingTrie::ROOT, 0.0, completed + pending)
        } else {
            (node, pending, completed)
        }
    };
    let at_word_start = match prev {
        None => true,
        Some(p) => p == crate::text::CharVocab::SEPARATOR,
    };
    if state != BiasingTrie::ROOT {
        if let Some(n) = f.trie.child(state, token) {
            return step(n, pending, completed);
        }
    }
    // At the root, or fell off the trie: the unfinished bonus is dropped and
    // a new entry may start only at a word boundary.
    match f.trie.child(BiasingTrie::ROOT, token) {
        Some(n) if at_word_start => step(n, 0.0, completed),
        _ => (BiasingTrie::ROOT, 0.0, completed),
    }
}

struct Candidate {
    parent: usize,
    token: usize,
    base: f64,
    state: usize,
    pending: f64,
    completed: f64,
}

impl Candidate {
    fn score(&self) -> f64 {
        self.base + self.completed + self.pending
    }
}

fn materialize(parents: &[Hypothesis], c: &Candidate) -> Hypothesis {
    let mut tokens = parents[c.parent].tokens.clone();
    if c.token != BLANK {
        tokens.push(c.token);
    }
    Hypothesis {
        tokens,
        score: c.score(),
        base_score: c.base,
        trie_state: c.state,
        pending_bonus: c.pending,
        completed_bonus: c.completed,
    }
}

/// Merges hypotheses with identical tokens (log-sum of base scores) and
/// keeps the best `beam` by score. Ties keep the earlier hypothesis first.
fn merge_and_prune(hyps: Vec<Hypothesis>, beam: usize) -> Vec<Hypothesis> {
    let mut index: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut out: Vec<Hypothesis> = Vec::with_capacity(hyps.len());
    for h in hyps {
        match index.get(&h.tokens) {
            Some(&i) => {
                let o = &mut out[i];
                o.base_score = log_add_exp(o.base_score, h.base_score);
                o.score = o.base_score + o.completed_bonus + o.pending_bonus;
            }
            None => {
                index.insert(h.tokens.clone(), out.len());
                out.push(h);
            }
        }
    }
    sort_desc(&mut out, |h| h.score);
    out.truncate(beam);
    out
}

fn sort_desc<T>(v: &mut [T], key: impl Fn(&T) -> f64) {
    v.sort_by(|a, b| key(b).partial_cmp(&key(a)).unwrap_or(core::cmp::Ordering::Equal));
}

/// Frame-synchronous beam search returning up to `beam` hypotheses, best first.
pub fn beam_search<S: JointScorer + ?Sized>(scorer: &S, settings: &BeamSettings<'_>) -> Result<Vec<Hypothesis>> {
    if settings.beam == 0 {
        return Err(contract("beam must be at least 1"));
    }
    if let Some(f) = &settings.fusion {
        if !(f.lambda >= 0.0) {
            return Err(contract("fusion lambda must be non-negative"));
        }
    }
    let beam = settings.beam;
    let mut hyps = alloc::vec![Hypothesis::empty()];
    for t in 0..scorer.frames() {
        let mut ended: Vec<Hypothesis> = Vec::new();
        let mut active = core::mem::take(&mut hyps);
        for round in 0..=settings.max_symbols {
            if active.is_empty() {
                break;
            }
            let prefixes: Vec<&[usize]> = active.iter().map(|h| h.tokens.as_slice()).collect();
            let rows = scorer.log_probs(t, &prefixes)?;
            let mut cands: Vec<Candidate> = Vec::new();
            for (i, (h, lp)) in active.iter().zip(&rows).enumerate() {
                cands.push(Candidate {
                    parent: i,
                    token: BLANK,
                    base: h.base_score + lp[BLANK],
                    state: h.trie_state,
                    pending: h.pending_bonus,
                    completed: h.completed_bonus,
                });
                if round == settings.max_symbols {
                    continue;
                }
                for (k, &l) in lp.iter().enumerate().skip(1) {
                    let (state, pending, completed) = match &settings.fusion {
                        Some(f) => advance(f, h.tokens.last().copied(), h.trie_state, h.pending_bonus, h.completed_bonus, k),
                        None => (h.trie_state, 0.0, 0.0),
                    };
                    cands.push(Candidate { parent: i, token: k, base: h.base_score + l, state, pending, completed });
                }
            }
            sort_desc(&mut cands, Candidate::score);
            cands.truncate(beam);
            let mut next = Vec::new();
            for c in &cands {
                let h = materialize(&active, c);
                if c.token == BLANK {
                    ended.push(h);
                } else {
                    next.push(h);
                }
            }
            active = merge_and_prune(next, beam);
        }
        hyps = merge_and_prune(ended, beam);
    }
    // Unfinished trie paths earn nothing.
    for h in &mut hyps {
        h.pending_bonus = 0.0;
        h.trie_state = BiasingTrie::ROOT;
        h.score = h.base_score + h.completed_bonus;
    }
    sort_desc(&mut hyps, |h| h.score);
    Ok(hyps)
}

#[cfg(test)]
mod tests;
