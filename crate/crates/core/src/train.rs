//! Adam and the base / biasing training loops.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::model::{Context, Transducer};
use crate::numkit::{Backend, Graph, ParamId, ParamStore, Record, Tensor, Var};
use crate::text::{build_biasing_list, perturb_utterance, BiasingList, CharVocab, SpellingRuleSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub warmup_steps: usize,
    /// Learning rate at the last step as a fraction of `lr` (cosine decay).
    pub final_lr_fraction: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-3,
            steps: 1000,
            batch_size: 8,
            seed: 1,
            warmup_steps: 50,
            final_lr_fraction: 0.1,
            grad_clip: 5.0,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_size == 0 {
            return Err(Error::Config("lr must be positive and batch_size at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config("Adam betas must lie in [0, 1) and eps be positive".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        let warm = if self.warmup_steps == 0 { 1.0 } else { ((step + 1) as f64 / self.warmup_steps as f64).min(1.0) };
        let progress = if self.steps <= 1 { 0.0 } else { step as f64 / (self.steps - 1) as f64 };
        let cos = 0.5 * (1.0 + math::cos(core::f64::consts::PI * progress.min(1.0)));
        self.lr * warm * (self.final_lr_fraction + (1.0 - self.final_lr_fraction) * cos)
    }
}

/// Adam with bias correction over the trainable parameters of a store.
#[derive(Debug, Clone)]
pub struct Adam {
    m: BTreeMap<ParamId, Vec<f64>>,
    v: BTreeMap<ParamId, Vec<f64>>,
    t: u64,
}

impl Default for Adam {
    fn default() -> Self {
        Self::new()
    }
}

impl Adam {
    pub fn new() -> Self {
        Self { m: BTreeMap::new(), v: BTreeMap::new(), t: 0 }
    }

    /// Applies one update; returns the pre-clip global gradient norm.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, Vec<f64>)], lr: f64, cfg: &TrainConfig) -> f64 {
        let norm = math::sqrt(grads.iter().flat_map(|(_, g)| g.iter()).map(|x| x * x).sum());
        let clip = if cfg.grad_clip > 0.0 && norm > cfg.grad_clip { cfg.grad_clip / norm } else { 1.0 };
        self.t += 1;
        let b1t = 1.0 - math::powf(cfg.beta1, self.t as f64);
        let b2t = 1.0 - math::powf(cfg.beta2, self.t as f64);
        for (id, g) in grads {
            if !store.get(*id).requires_grad() {
                continue;
            }
            let n = g.len();
            let m = self.m.entry(*id).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(*id).or_insert_with(|| vec![0.0; n]);
            let p = store.get_mut(*id).data_mut();
            for i in 0..n {
                let gi = g[i] * clip;
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                p[i] -= lr * (m[i] / b1t) / (math::sqrt(v[i] / b2t) + cfg.eps);
            }
        }
        norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

/// A training utterance: features plus its transcript.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub features: &'a Tensor,
    pub transcript: &'a str,
}

/// Batches drawn from shuffled epochs.
struct Batches {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Batches {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self { order, pos: 0, rng }
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn check_finite(step: usize, loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { step, msg: format!("loss is {loss}") })
    }
}

fn mean<'g>(graph: &'g Graph, losses: Vec<Var<'g>>) -> Result<Var<'g>> {
    let n = losses.len() as f64;
    let mut acc = losses[0];
    for l in &losses[1..] {
        acc = acc.add(l)?;
    }
    let _ = graph;
    Ok(acc.scale(1.0 / n))
}

/// Trains every trainable parameter on the plain transducer loss.
pub fn train_base(
    model: &mut Transducer,
    data: &[Example<'_>],
    cfg: &TrainConfig,
    mut log: impl FnMut(&StepReport),
) -> Result<Vec<StepReport>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    let vocab = CharVocab;
    let targets: Vec<Vec<usize>> = data.iter().map(|e| vocab.encode(e.transcript)).collect::<Result<_>>()?;
    let mut batches = Batches::new(data.len(), cfg.seed);
    let mut adam = Adam::new();
    let mut reports = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let idx = batches.next(cfg.batch_size);
        let (loss, grads) = {
            let g = Graph::new();
            let rec = Record::new(&g, model.params());
            let losses = idx
                .iter()
                .map(|&i| model.loss(&rec, data[i].features, &targets[i], None))
                .collect::<Result<Vec<_>>>()?;
            let total = mean(&g, losses)?;
            let loss = total.item()?;
            check_finite(step, loss)?;
            g.backward(total)?;
            (loss, rec.param_grads())
        };
        let lr = cfg.lr_at(step);
        let grad_norm = adam.step(model.params_mut(), &grads, lr, cfg);
        if !grad_norm.is_finite() {
            return Err(Error::Diverged { step, msg: "non-finite gradient".into() });
        }
        let r = StepReport { step, loss, lr, grad_norm };
        log(&r);
        reports.push(r);
    }
    Ok(reports)
}

/// How biasing lists and perturbations are drawn during adapter training.
#[derive(Debug, Clone)]
pub struct BiasingSetup<'a> {
    pub rare: &'a BTreeSet<String>,
    pub pool: &'a BTreeSet<String>,
    pub rules: &'a SpellingRuleSet,
    pub perturb_prob: f64,
    pub n_distractors: usize,
}

/// A training utterance after list construction and perturbation.
#[derive(Debug, Clone)]
pub struct BiasedExample {
    pub transcript: String,
    pub list: BiasingList,
}

pub fn make_biased_example<R: rand::Rng + ?Sized>(transcript: &str, setup: &BiasingSetup<'_>, rng: &mut R) -> Result<BiasedExample> {
    let list = build_biasing_list(transcript, setup.rare, setup.pool, setup.n_distractors, rng);
    let (transcript, list) = perturb_utterance(transcript, &list, setup.rare, setup.perturb_prob, setup.rules, rng)?;
    Ok(BiasedExample { transcript, list })
}

/// Token sequences of biasing entries.
pub fn tokenize_list(list: &BiasingList) -> Result<Vec<Vec<usize>>> {
    tokenize_entries(list.entries())
}

/// Token sequences of entry strings; words are joined by the separator.
pub fn tokenize_entries<S: AsRef<str>>(entries: &[S]) -> Result<Vec<Vec<usize>>> {
    let v = CharVocab;
    entries
        .iter()
        .map(AsRef::as_ref)
        .enumerate()
        .map(|(i, e)| {
            let mut out = Vec::new();
            for (w, word) in e.split_whitespace().enumerate() {
                if w > 0 {
                    out.push(CharVocab::SEPARATOR);
                }
                out.extend(v.encode_entry(i, word)?);
            }
            Ok(out)
        })
        .collect()
}

/// Mean contextual loss of a batch on one graph. Lists in the batch share a
/// single context-encoder pass over the union of their entries.
pub fn contextual_batch_loss<'g>(
    model: &Transducer,
    rec: &Record<'g>,
    feats: &[&Tensor],
    batch: &[BiasedExample],
) -> Result<Var<'g>> {
    let mut union: Vec<Vec<usize>> = Vec::new();
    let mut pos: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut lists = Vec::with_capacity(batch.len());
    for ex in batch {
        let toks = tokenize_list(&ex.list)?;
        let mut rows = vec![0];
        for t in toks {
            let r = *pos.entry(t.clone()).or_insert_with(|| {
                union.push(t);
                union.len()
            });
            rows.push(r);
        }
        lists.push(rows);
    }
    let all: Context<Var<'g>> = model.context(rec, &union)?;
    let vocab = CharVocab;
    let mut losses = Vec::with_capacity(batch.len());
    for ((ex, rows), x) in batch.iter().zip(&lists).zip(feats) {
        let pick = |t: &Var<'g>| rec.gather_rows(t, rows);
        let ctx = Context {
            embeddings: pick(&all.embeddings)?,
            enc_kv: all
                .enc_kv
                .iter()
                .map(|(&l, (k, v))| Ok((l, (pick(k)?, pick(v)?))))
                .collect::<Result<_>>()?,
            pred_kv: all.pred_kv.as_ref().map(|(k, v)| Ok::<_, Error>((pick(k)?, pick(v)?))).transpose()?,
            rows: None,
        };
        let target = vocab.encode(&ex.transcript)?;
        losses.push(model.loss(rec, x, &target, Some(&ctx))?);
    }
    mean(rec.graph(), losses)
}

/// Trains only the context encoder and adapters; base parameters stay
/// bit-identical.
pub fn train_biasing(
    model: &mut Transducer,
    data: &[Example<'_>],
    setup: &BiasingSetup<'_>,
    cfg: &TrainConfig,
    mut log: impl FnMut(&StepReport),
) -> Result<Vec<StepReport>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    if !model.config().is_contextual() {
        return Err(Error::Config("model has no biasing adapters to train".into()));
    }
    model.freeze_base();
    let mut batches = Batches::new(data.len(), cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_b1a5);
    let mut adam = Adam::new();
    let mut reports = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let idx = batches.next(cfg.batch_size);
        let batch = idx
            .iter()
            .map(|&i| make_biased_example(data[i].transcript, setup, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let feats: Vec<&Tensor> = idx.iter().map(|&i| data[i].features).collect();
        let (loss, grads) = {
            let g = Graph::new();
            let rec = Record::new(&g, model.params());
            let total = contextual_batch_loss(model, &rec, &feats, &batch)?;
            let loss = total.item()?;
            check_finite(step, loss)?;
            g.backward(total)?;
            (loss, rec.param_grads())
        };
        let lr = cfg.lr_at(step);
        let grad_norm = adam.step(model.params_mut(), &grads, lr, cfg);
        if !grad_norm.is_finite() {
            return Err(Error::Diverged { step, msg: "non-finite gradient".into() });
        }
        let r = StepReport { step, loss, lr, grad_norm };
        log(&r);
        reports.push(r);
    }
    Ok(reports)
}
