use super::*;
use crate::model::{ModelConfig, Transducer};
use crate::numkit::Tensor;
use crate::text::{BiasingList, CharVocab};
use alloc::string::String;
use alloc::vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scorer defined by a closure over `(frame, prefix)`.
struct FnScorer<F> {
    frames: usize,
    vocab: usize,
    f: F,
}

impl<F: Fn(usize, &[usize]) -> Vec<f64>> JointScorer for FnScorer<F> {
    fn frames(&self) -> usize {
        self.frames
    }
    fn vocab(&self) -> usize {
        self.vocab
    }
    fn log_probs(&self, t: usize, prefixes: &[&[usize]]) -> Result<Vec<Vec<f64>>> {
        Ok(prefixes.iter().map(|p| (self.f)(t, p)).collect())
    }
}

fn normalize(logits: Vec<f64>) -> Vec<f64> {
    let t = Tensor::new(&[1, logits.len()], logits).unwrap();
    t.log_softmax().unwrap().into_data()
}

/// Pseudo-random but deterministic log-probs per `(frame, prefix)`.
fn random_scorer(frames: usize, vocab: usize, seed: u64) -> FnScorer<impl Fn(usize, &[usize]) -> Vec<f64>> {
    FnScorer {
        frames,
        vocab,
        f: move |t: usize, p: &[usize]| {
            let mut h = seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            for &x in p {
                h = h.wrapping_mul(31).wrapping_add(x as u64 + 1);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(h);
            normalize((0..vocab).map(|_| rng.gen_range(-2.0..2.0)).collect())
        },
    }
}

#[test]
fn blank_always_wins_gives_empty_output() {
    let s = FnScorer { frames: 4, vocab: 5, f: |_: usize, _: &[usize]| normalize(vec![5.0, 0.0, 0.0, 0.0, 0.0]) };
    assert!(greedy_decode(&s, 8).unwrap().is_empty());
    let n = beam_search(&s, &BeamSettings::default()).unwrap();
    assert!(n[0].tokens.is_empty());
}

#[test]
fn emission_cap_limits_symbols_per_frame() {
    let s = FnScorer { frames: 2, vocab: 3, f: |_: usize, _: &[usize]| normalize(vec![0.0, 5.0, 0.0]) };
    assert_eq!(greedy_decode(&s, 8).unwrap().len(), 16);
    let n = beam_search(&s, &BeamSettings { beam: 1, ..Default::default() }).unwrap();
    assert_eq!(n[0].tokens.len(), 16);
}

#[test]
fn beam_one_equals_greedy() {
    for seed in 0..50 {
        let s = random_scorer(5, 4, seed);
        let g = greedy_decode(&s, 3).unwrap();
        let b = beam_search(&s, &BeamSettings { beam: 1, max_symbols: 3, fusion: None }).unwrap();
        assert_eq!(b[0].tokens, g, "seed {seed}");
    }
}

#[test]
fn zero_lambda_matches_no_fusion() {
    let mut trie = BiasingTrie::default();
    trie.insert(&[1, 2]);
    trie.insert(&[2, 2, 3]);
    for seed in 0..20 {
        let s = random_scorer(4, 4, seed);
        let plain = beam_search(&s, &BeamSettings { beam: 4, max_symbols: 3, fusion: None }).unwrap();
        let zero = BeamSettings { beam: 4, max_symbols: 3, fusion: Some(Fusion { trie: &trie, lambda: 0.0 }) };
        let fused = beam_search(&s, &zero).unwrap();
        assert_eq!(plain.len(), fused.len());
        for (a, b) in plain.iter().zip(&fused) {
            assert_eq!(a.tokens, b.tokens);
            assert_eq!(a.score, b.score);
            assert_eq!(a.base_score, b.base_score);
        }
    }
}

/// All `(tokens, log-prob)` over every alignment, merged by token sequence.
fn exhaustive<S: JointScorer>(s: &S, max_symbols: usize) -> BTreeMap<Vec<usize>, f64> {
    fn go<S: JointScorer>(s: &S, t: usize, emitted: usize, max: usize, toks: &mut Vec<usize>, score: f64, out: &mut BTreeMap<Vec<usize>, f64>) {
        if t == s.frames() {
            let e = out.entry(toks.clone()).or_insert(f64::NEG_INFINITY);
            *e = log_add_exp(*e, score);
            return;
        }
        let lp = s.log_probs(t, &[toks]).unwrap().pop().unwrap();
        go(s, t + 1, 0, max, toks, score + lp[0], out);
        if emitted < max {
            for k in 1..s.vocab() {
                toks.push(k);
                go(s, t, emitted + 1, max, toks, score + lp[k], out);
                toks.pop();
            }
        }
    }
    let mut out = BTreeMap::new();
    go(s, 0, 0, max_symbols, &mut Vec::new(), 0.0, &mut out);
    out
}

/// Bonus of a token sequence under the stated fusion rules, written as an
/// explicit scan over entry occurrences.
fn oracle_bonus(trie: &BiasingTrie, entries: &[Vec<usize>], tokens: &[usize], lambda: f64) -> f64 {
    let _ = trie;
    let mut total = 0.0;
    let mut i = 0;
    while i < tokens.len() {
        let word_start = i == 0 || tokens[i - 1] == CharVocab::SEPARATOR;
        // Longest, then shortest-completing: walking stops at the first terminal.
        let mut matched = None;
        if word_start {
            let mut best: Option<usize> = None;
            for e in entries {
                if tokens[i..].starts_with(e) {
                    // An entry that extends a shorter one is never reached.
                    let shadowed = entries.iter().any(|o| o.len() < e.len() && e.starts_with(o));
                    if !shadowed {
                        best = Some(best.map_or(e.len(), |b: usize| b.min(e.len())));
                    }
                }
            }
            matched = best;
        }
        match matched {
            Some(len) => {
                total += lambda * len as f64;
                i += len;
            }
            None => i += 1,
        }
    }
    total
}

#[test]
fn exhaustive_beam_recovers_argmax_and_rollback_is_sound() {
    let entries = vec![vec![1, 2], vec![2, 2, 3], vec![3]];
    let mut trie = BiasingTrie::default();
    for e in &entries {
        trie.insert(e);
    }
    for seed in 0..10 {
        let s = random_scorer(3, 4, 100 + seed);
        let all = exhaustive(&s, 2);
        let settings = BeamSettings { beam: 100_000, max_symbols: 2, fusion: None };
        let nb = beam_search(&s, &settings).unwrap();
        assert_eq!(nb.len(), all.len());
        let (best, best_score) = all.iter().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap();
        assert_eq!(&nb[0].tokens, best);
        assert!((nb[0].base_score - best_score).abs() < 1e-12);

        let lambda = 0.7;
        let fused = beam_search(&s, &BeamSettings { fusion: Some(Fusion { trie: &trie, lambda }), ..settings }).unwrap();
        assert_eq!(fused.len(), all.len());
        for h in &fused {
            assert_eq!(h.trie_state, BiasingTrie::ROOT);
            assert!((h.score - (h.base_score + h.completed_bonus + h.pending_bonus)).abs() < 1e-12);
            let want = oracle_bonus(&trie, &entries, &h.tokens, lambda);
            assert!((h.score - h.base_score - want).abs() < 1e-9, "{:?}", h.tokens);
            assert!((h.base_score - all[&h.tokens]).abs() < 1e-12);
        }
    }
}

#[test]
fn fusion_breaks_acoustic_tie_toward_listed_word() {
    let v = CharVocab;
    let klein = v.encode("klein").unwrap();
    let klane = v.encode("klane").unwrap();
    let s = FnScorer {
        frames: 2,
        vocab: CharVocab::SIZE,
        f: move |t: usize, p: &[usize]| {
            let mut logits = vec![-20.0; CharVocab::SIZE];
            let done = p == klein.as_slice() || p == klane.as_slice();
            if t == 1 || done {
                logits[0] = 0.0;
            } else if p.len() < 2 {
                logits[klein[p.len()]] = 0.0;
            } else if p == &klein[..2] {
                logits[klein[2]] = 0.0;
                logits[klane[2]] = 0.0;
            } else if klein.starts_with(p) {
                logits[klein[p.len()]] = 0.0;
            } else if klane.starts_with(p) {
                logits[klane[p.len()]] = 0.0;
            } else {
                logits[0] = 0.0;
            }
            normalize(logits)
        },
    };
    let plain = beam_search(&s, &BeamSettings::default()).unwrap();
    let texts: Vec<String> = plain.iter().take(2).map(|h| v.decode(&h.tokens)).collect();
    assert!(texts.contains(&"klein".into()) && texts.contains(&"klane".into()));
    assert!((plain[0].base_score - plain[1].base_score).abs() < 1e-9);

    let trie = BiasingTrie::build(&BiasingList::new(vec!["klein".into()]).unwrap(), &v).unwrap();
    let lambda = 1.5;
    let fused = beam_search(&s, &BeamSettings { fusion: Some(Fusion { trie: &trie, lambda }), ..Default::default() }).unwrap();
    assert_eq!(v.decode(&fused[0].tokens), "klein");
    assert!((fused[0].score - fused[0].base_score - 5.0 * lambda).abs() < 1e-12);
    let klane_h = fused.iter().find(|h| h.tokens == v.encode("klane").unwrap()).unwrap();
    assert_eq!(klane_h.score, klane_h.base_score);
}

fn tiny_model() -> Transducer {
    let cfg = ModelConfig {
        vocab_size: 6,
        d_feat: 3,
        d_model: 8,
        num_encoder_layers: 2,
        num_heads: 2,
        ff_dim: 8,
        adapter_dim: 4,
        injection_layers: vec![2],
        context_embed_dim: 3,
        predictor_embed_dim: 3,
        joiner_dim: 6,
        ..Default::default()
    };
    let mut m = Transducer::new(cfg, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ids: Vec<_> = m.params().iter().filter(|(_, n, _)| n.ends_with(".o")).map(|(id, _, _)| id).collect();
    for id in ids {
        m.params_mut().get_mut(id).data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    }
    m
}

#[test]
fn model_scorer_matches_lattice_and_table() {
    let m = tiny_model();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::from_fn(&[6, 3], |_| rng.gen_range(-1.0..1.0));
    let target = [2, 3, 1];
    let be = m.eval();
    let list = vec![vec![1, 2], vec![3]];
    let ctx = m.context(&be, &list).unwrap();
    let (lp, frames, _) = m.lattice(&be, &x, &target, Some(&ctx)).unwrap();
    let table = PredictorTable::build(&m).unwrap();
    let with_table = ModelScorer::new(&m, &x, Some(ctx.clone()), Some(&table)).unwrap();
    let without = ModelScorer::new(&m, &x, Some(ctx), None).unwrap();
    assert_eq!(with_table.frames(), frames);
    for t in 0..frames {
        for u in 0..=target.len() {
            let row = lp.row(t * (target.len() + 1) + u);
            assert_eq!(with_table.log_probs(t, &[&target[..u]]).unwrap()[0], row);
            assert_eq!(without.log_probs(t, &[&target[..u]]).unwrap()[0], row);
        }
    }
    let g = greedy_decode(&with_table, 8).unwrap();
    let b = beam_search(&with_table, &BeamSettings { beam: 1, ..Default::default() }).unwrap();
    assert_eq!(b[0].tokens, g);
}

#[test]
fn context_cache_is_exact() {
    let m = tiny_model();
    let universe = vec![vec![1, 2], vec![3], vec![4, 4, 1], vec![5, 1], vec![2]];
    let cache = ContextCache::build(&m, &universe).unwrap();
    let be = m.eval();
    let list = vec![vec![5, 1], vec![1, 2], vec![2]];
    let direct = m.context(&be, &list).unwrap();
    let cached = cache.context(&list).unwrap();
    let rows = cached.rows.clone().unwrap();
    assert_eq!(rows.len(), list.len() + 1);
    let pick = |t: &Tensor| -> Vec<f64> { rows.iter().flat_map(|&r| t.row(r).to_vec()).collect() };
    assert_eq!(direct.embeddings.data(), pick(&cached.embeddings).as_slice());
    for (l, (k, v)) in &direct.enc_kv {
        assert_eq!(k.data(), pick(&cached.enc_kv[l].0).as_slice());
        assert_eq!(v.data(), pick(&cached.enc_kv[l].1).as_slice());
    }
    let x = Tensor::from_fn(&[7, m.config().d_feat], |i| ((i * 37 % 11) as f64 - 5.0) / 5.0);
    let a = m.encode(&be, &x, Some(&direct)).unwrap();
    let b = m.encode(&be, &x, Some(&cached)).unwrap();
    assert_eq!(a.h.data(), b.h.data());
    assert_eq!(a.attn, b.attn);
    assert_eq!(m.encode_hidden(&be, &x, Some(&cached)).unwrap().data(), a.h.data());
    let pa = m.predict(&be, &[1, 2], Some(&direct)).unwrap();
    let pb = m.predict(&be, &[1, 2], Some(&cached)).unwrap();
    assert_eq!(pa.data(), pb.data());
    assert!(cache.context(&[vec![3, 3]]).is_err());
    assert_eq!(cache.context_rows(&[3, 0, 4]).unwrap().rows, cached.rows);
    assert!(cache.context_rows(&[5]).is_err());
}
