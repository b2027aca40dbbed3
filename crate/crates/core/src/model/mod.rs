//! The contextual transducer.
//!
//! Encoder: frame stacking by 2, input projection plus sinusoidal positions,
//! then pre-norm self-attention / feed-forward blocks. After any block listed
//! in `injection_layers` a biasing adapter adds `W_o · Attn(LN(h), C^e)` to the
//! hidden states. `C^e` comes from a shared BiLSTM context encoder whose row 0
//! (the no-bias entry) is fixed at zero.
//!
//! Predictor: stateless, embeds the last `predictor_context` tokens.
//! Joiner: `log_softmax(W · tanh(W_e h_enc + W_p h_pred + b) + b')`.

mod config;
mod layers;

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{ModelConfig, ParameterCounts};
use layers::{Init, Linear, Norm};

use crate::error::{Error, Result};
use crate::numkit::{sinusoidal_positions, Backend, Eval, ParamId, ParamStore, Tensor};
use crate::rnnt::BLANK;

/// Parameter-name prefixes of the biasing side of the partition.
pub const BIASING_PREFIXES: [&str; 2] = ["ctx.", "adapter."];

#[derive(Debug, Clone)]
struct Block {
    ln1: Norm,
    qkv: Linear,
    out: Linear,
    ln2: Norm,
    ff1: Linear,
    ff2: Linear,
}

#[derive(Debug, Clone, Copy)]
struct AdapterIds {
    norm: Norm,
    q: ParamId,
    kv: ParamId,
    o: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct LstmIds {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct ContextIds {
    embed: ParamId,
    /// `[layer][direction]`, direction 0 forward, 1 backward.
    lstm: Vec<[LstmIds; 2]>,
    proj: Linear,
}

#[derive(Debug, Clone)]
struct Ids {
    enc_in: Linear,
    blocks: Vec<Block>,
    pred_embed: ParamId,
    pred_proj: Linear,
    join_enc: Linear,
    join_pred: Linear,
    join_out: Linear,
    ctx: Option<ContextIds>,
    /// Encoder adapters keyed by 1-based layer.
    enc_adapters: BTreeMap<usize, AdapterIds>,
    pred_adapter: Option<AdapterIds>,
}

/// Disjoint split of all parameters into the frozen base and the trainable
/// biasing modules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterPartition {
    pub base: Vec<ParamId>,
    pub biasing: Vec<ParamId>,
}

/// Context embeddings plus the per-adapter keys and values derived from them.
#[derive(Debug, Clone)]
pub struct Context<T> {
    /// `C^e`, `[(N+1) × D]`; row 0 is the no-bias entry.
    pub embeddings: T,
    /// Keys and values `[(N+1) × D]` per encoder adapter layer.
    pub enc_kv: BTreeMap<usize, (T, T)>,
    pub pred_kv: Option<(T, T)>,
    /// When set, the tensors above hold a larger table and list entry `j`
    /// is its row `rows[j]`.
    pub rows: Option<Arc<[usize]>>,
}

/// Encoder output and the adapter attention weights (averaged over heads)
/// for each injection layer.
#[derive(Debug, Clone)]
pub struct Encoded<T> {
    pub h: T,
    pub attn: Vec<(usize, Tensor)>,
}

/// The transducer with optional biasing modules.
#[derive(Debug, Clone)]
pub struct Transducer {
    cfg: ModelConfig,
    params: ParamStore,
    ids: Ids,
}

/// Stream of the seeded generator used for biasing parameters, so adding
/// adapters never changes the base initialization.
const BIASING_STREAM: u64 = 1;

impl Transducer {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &cfg;
        let (d, v) = (c.d_model, c.vocab_size);
        let mut init = Init { store: &mut params, rng: &mut rng };
        let enc_in = init.linear("enc.in", 2 * c.d_feat, d, true)?;
        let mut blocks = Vec::with_capacity(c.num_encoder_layers);
        for l in 1..=c.num_encoder_layers {
            let p = format!("enc.block{l}");
            blocks.push(Block {
                ln1: init.norm(&format!("{p}.ln1"), d)?,
                qkv: init.linear(&format!("{p}.qkv"), d, 3 * d, true)?,
                out: init.linear(&format!("{p}.out"), d, d, true)?,
                ln2: init.norm(&format!("{p}.ln2"), d)?,
                ff1: init.linear(&format!("{p}.ff1"), d, c.ff_dim, true)?,
                ff2: init.linear(&format!("{p}.ff2"), c.ff_dim, d, true)?,
            });
        }
        let pred_embed = init.embedding("pred.embed", v, c.predictor_embed_dim)?;
        let pred_proj = init.linear("pred.proj", c.predictor_context * c.predictor_embed_dim, d, true)?;
        let join_enc = init.linear("join.enc", d, c.joiner_dim, false)?;
        let join_pred = init.linear("join.pred", d, c.joiner_dim, true)?;
        let join_out = init.linear("join.out", c.joiner_dim, v, true)?;

        let mut brng = ChaCha8Rng::seed_from_u64(seed);
        brng.set_stream(BIASING_STREAM);
        let mut init = Init { store: &mut params, rng: &mut brng };
        let (dc, h) = (c.adapter_dim, c.adapter_dim);
        let ctx = if c.is_contextual() {
            let embed = init.embedding("ctx.embed", v, c.context_embed_dim)?;
            let mut lstm = Vec::new();
            for l in 0..c.context_layers {
                let input = if l == 0 { c.context_embed_dim } else { 2 * h };
                let mut dirs = Vec::new();
                for dir in ["fwd", "bwd"] {
                    let p = format!("ctx.lstm{l}.{dir}");
                    let w = init.weight(&format!("{p}.w"), input + h, 4 * h)?;
                    // Forget-gate bias starts at 1.
                    let mut b = vec![0.0; 4 * h];
                    b[h..2 * h].iter_mut().for_each(|x| *x = 1.0);
                    let b = init.store.add(&format!("{p}.b"), Tensor::new(&[4 * h], b)?)?;
                    dirs.push(LstmIds { w, b });
                }
                lstm.push([dirs[0], dirs[1]]);
            }
            let proj = init.linear("ctx.proj", 2 * h, dc, true)?;
            Some(ContextIds { embed, lstm, proj })
        } else {
            None
        };
        let mut adapter = |name: &str, width: usize| -> Result<AdapterIds> {
            Ok(AdapterIds {
                norm: init.norm(&format!("adapter.{name}.norm"), width)?,
                q: init.weight(&format!("adapter.{name}.q"), width, dc)?,
                kv: init.weight(&format!("adapter.{name}.kv"), dc, 2 * dc)?,
                o: init.zeros(&format!("adapter.{name}.o"), &[dc, width])?,
            })
        };
        let mut enc_adapters = BTreeMap::new();
        let mut layers = c.injection_layers.clone();
        layers.sort_unstable();
        for l in layers {
            enc_adapters.insert(l, adapter(&format!("enc{l}"), d)?);
        }
        let pred_adapter = if c.bias_predictor { Some(adapter("pred", d)?) } else { None };

        let ids = Ids {
            enc_in,
            blocks,
            pred_embed,
            pred_proj,
            join_enc,
            join_pred,
            join_out,
            ctx,
            enc_adapters,
            pred_adapter,
        };
        Ok(Self { cfg, params, ids })
    }

    /// A contextual model whose base parameters are copied from `base`.
    pub fn with_base(base: &Transducer, cfg: ModelConfig, seed: u64) -> Result<Self> {
        if !base.cfg.same_base(&cfg) {
            return Err(Error::Config("base checkpoint architecture differs from config".into()));
        }
        let mut m = Self::new(cfg, seed)?;
        for id in m.partition().base {
            let name = String::from(m.params.name(id));
            let src = base
                .params
                .id(&name)
                .ok_or_else(|| Error::Params(format!("base model lacks {name}")))?;
            m.params.load_value(&name, base.params.get(src).clone())?;
        }
        Ok(m)
    }

    /// Rebuilds a model from named values; every parameter must be supplied
    /// exactly once with the right shape.
    pub fn from_named(cfg: ModelConfig, values: Vec<(String, Tensor)>) -> Result<Self> {
        let mut m = Self::new(cfg, 0)?;
        let mut seen = alloc::collections::BTreeSet::new();
        for (name, t) in values {
            if !seen.insert(name.clone()) {
                return Err(Error::Params(format!("parameter {name} given twice")));
            }
            m.params.load_value(&name, t)?;
        }
        if let Some((_, name, _)) = m.params.iter().find(|(_, n, _)| !seen.contains(*n)) {
            return Err(Error::Params(format!("missing parameter {name}")));
        }
        Ok(m)
    }

    /// The adapter-free model sharing this model's base parameters.
    pub fn base_model(&self) -> Result<Self> {
        let mut m = Self::new(self.cfg.without_adapters(), 0)?;
        for (_, name, t) in self.params.iter() {
            if m.params.id(name).is_some() {
                m.params.load_value(name, t.clone())?;
            }
        }
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn eval(&self) -> Eval<'_> {
        Eval::new(&self.params)
    }

    pub fn partition(&self) -> ParameterPartition {
        let (mut base, mut biasing) = (Vec::new(), Vec::new());
        for (id, name, _) in self.params.iter() {
            if is_biasing_name(name) {
                biasing.push(id);
            } else {
                base.push(id);
            }
        }
        ParameterPartition { base, biasing }
    }

    /// Share of scalar parameters in the biasing modules.
    pub fn biasing_fraction(&self) -> f64 {
        let p = self.partition();
        let b = self.params.count_scalars(&p.biasing);
        let total = b + self.params.count_scalars(&p.base);
        b as f64 / total as f64
    }

    /// Makes only the biasing side trainable.
    pub fn freeze_base(&mut self) {
        let p = self.partition();
        for id in p.base {
            self.params.set_trainable(id, false);
        }
        for id in p.biasing {
            self.params.set_trainable(id, true);
        }
    }

    pub fn output_frames(&self, input_frames: usize) -> usize {
        input_frames.div_ceil(2)
    }

    /// `C^e` for a list of token sequences, shape `[(N+1) × D]`.
    pub fn encode_contexts<B: Backend>(&self, be: &B, entries: &[Vec<usize>]) -> Result<B::T> {
        let d = self.cfg.adapter_dim;
        let v = self.cfg.vocab_size;
        for (index, e) in entries.iter().enumerate() {
            if e.is_empty() {
                return Err(Error::EmptyInput("biasing entry"));
            }
            if let Some(&token) = e.iter().find(|&&t| t >= v) {
                return Err(Error::OutOfVocab { index, token, vocab: v });
            }
        }
        let zero_row = be.constant(Tensor::zeros(&[1, d]));
        if entries.is_empty() {
            return Ok(zero_row);
        }
        let ids = self
            .ids
            .ctx
            .as_ref()
            .ok_or_else(|| Error::Config("model has no context encoder".into()))?;
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            groups.entry(e.len()).or_default().push(i);
        }
        let mut finals = Vec::with_capacity(groups.len());
        let mut order = Vec::with_capacity(entries.len());
        for (&len, members) in &groups {
            finals.push(self.lstm_group(be, ids, entries, members, len)?);
            order.extend_from_slice(members);
        }
        let stacked = if finals.len() == 1 { finals.pop().expect("one") } else { be.concat_rows(&finals)? };
        let proj = ids.proj.apply(be, &stacked)?;
        // Row r of `proj` holds entry order[r]; restore list order.
        let mut inv = vec![0; entries.len()];
        for (r, &i) in order.iter().enumerate() {
            inv[i] = r;
        }
        let rows = be.gather_rows(&proj, &inv)?;
        be.concat_rows(&[zero_row, rows])
    }

    fn lstm_group<B: Backend>(
        &self,
        be: &B,
        ids: &ContextIds,
        entries: &[Vec<usize>],
        members: &[usize],
        len: usize,
    ) -> Result<B::T> {
        let h = self.cfg.adapter_dim;
        let n = members.len();
        let embed = be.param(ids.embed);
        let mut xs: Vec<B::T> = (0..len)
            .map(|p| {
                let idx: Vec<usize> = members.iter().map(|&m| entries[m][p]).collect();
                be.gather_rows(&embed, &idx)
            })
            .collect::<Result<_>>()?;
        let zeros = be.constant(Tensor::zeros(&[n, h]));
        let mut last = None;
        for layer in &ids.lstm {
            let mut outs: [Vec<Option<B::T>>; 2] = [vec![None; len], vec![None; len]];
            for (dir, cell) in layer.iter().enumerate() {
                let (w, b) = (be.param(cell.w), be.param(cell.b));
                let (mut hs, mut cs) = (zeros.clone(), zeros.clone());
                for step in 0..len {
                    let p = if dir == 0 { step } else { len - 1 - step };
                    let z = be.add_bias(&be.matmul(&be.concat_cols(&[xs[p].clone(), hs])?, &w)?, &b)?;
                    let i = be.sigmoid(&be.cols(&z, 0, h)?);
                    let f = be.sigmoid(&be.cols(&z, h, h)?);
                    let g = be.tanh(&be.cols(&z, 2 * h, h)?);
                    let o = be.sigmoid(&be.cols(&z, 3 * h, h)?);
                    cs = be.add(&be.mul(&f, &cs)?, &be.mul(&i, &g)?)?;
                    hs = be.mul(&o, &be.tanh(&cs))?;
                    outs[dir][p] = Some(hs.clone());
                }
            }
            let [fwd, bwd] = outs;
            let fwd: Vec<B::T> = fwd.into_iter().map(|x| x.expect("filled")).collect();
            let bwd: Vec<B::T> = bwd.into_iter().map(|x| x.expect("filled")).collect();
            last = Some((fwd[len - 1].clone(), bwd[0].clone()));
            xs = fwd
                .into_iter()
                .zip(bwd)
                .map(|(f, b)| be.concat_cols(&[f, b]))
                .collect::<Result<_>>()?;
        }
        let (f, b) = last.expect("at least one layer");
        be.concat_cols(&[f, b])
    }

    /// Keys and values of every adapter for given context embeddings.
    pub fn prepare_context<B: Backend>(&self, be: &B, embeddings: B::T) -> Result<Context<B::T>> {
        let d = self.cfg.adapter_dim;
        let kv = |a: &AdapterIds| -> Result<(B::T, B::T)> {
            let kv = be.matmul(&embeddings, &be.param(a.kv))?;
            Ok((be.cols(&kv, 0, d)?, be.cols(&kv, d, d)?))
        };
        let mut enc_kv = BTreeMap::new();
        for (&l, a) in &self.ids.enc_adapters {
            enc_kv.insert(l, kv(a)?);
        }
        let pred_kv = self.ids.pred_adapter.as_ref().map(kv).transpose()?;
        Ok(Context { embeddings, enc_kv, pred_kv, rows: None })
    }

    /// Tokenized entries straight to a prepared context.
    pub fn context<B: Backend>(&self, be: &B, entries: &[Vec<usize>]) -> Result<Context<B::T>> {
        let e = self.encode_contexts(be, entries)?;
        self.prepare_context(be, e)
    }

    fn apply_adapter_ids<B: Backend>(
        &self,
        be: &B,
        a: &AdapterIds,
        h: &B::T,
        kv: &(B::T, B::T),
        rows: Option<&[usize]>,
        want_weights: bool,
    ) -> Result<(B::T, Option<Tensor>)> {
        let q = be.matmul(&a.norm.apply(be, h)?, &be.param(a.q))?;
        let (b, w) = be.attention(&q, &kv.0, &kv.1, rows, self.cfg.num_heads, want_weights)?;
        let out = be.matmul(&b, &be.param(a.o))?;
        Ok((be.add(h, &out)?, w))
    }

    /// `ĥ = h + W_o·Attn(LN(h), C^e)` with the adapter after encoder `layer`.
    pub fn apply_adapter<B: Backend>(
        &self,
        be: &B,
        layer: usize,
        h: &B::T,
        ctx: &Context<B::T>,
    ) -> Result<(B::T, Tensor)> {
        let a = self
            .ids
            .enc_adapters
            .get(&layer)
            .ok_or_else(|| Error::Config(format!("no adapter after layer {layer}")))?;
        let kv = ctx
            .enc_kv
            .get(&layer)
            .ok_or_else(|| Error::Config(format!("context lacks keys for layer {layer}")))?;
        let (h, w) = self.apply_adapter_ids(be, a, h, kv, ctx.rows.as_deref(), true)?;
        Ok((h, w.expect("weights requested")))
    }

    /// Encoder over `[T × d_feat]` features; adapters run only with a context.
    pub fn encode<B: Backend>(&self, be: &B, x: &Tensor, ctx: Option<&Context<B::T>>) -> Result<Encoded<B::T>> {
        self.encode_inner(be, x, ctx, true)
    }

    /// [`encode`](Self::encode) without collecting attention weights.
    pub fn encode_hidden<B: Backend>(&self, be: &B, x: &Tensor, ctx: Option<&Context<B::T>>) -> Result<B::T> {
        Ok(self.encode_inner(be, x, ctx, false)?.h)
    }

    fn encode_inner<B: Backend>(
        &self,
        be: &B,
        x: &Tensor,
        ctx: Option<&Context<B::T>>,
        want_attn: bool,
    ) -> Result<Encoded<B::T>> {
        let (t, f) = x.dims2()?;
        if t == 0 {
            return Err(Error::EmptyInput("feature frames"));
        }
        if f != self.cfg.d_feat {
            return Err(Error::Shape { op: "encode", left: x.shape().to_vec(), right: vec![t, self.cfg.d_feat] });
        }
        let tp = self.output_frames(t);
        let mut data = Vec::with_capacity(tp * 2 * f);
        data.extend_from_slice(x.data());
        data.resize(tp * 2 * f, 0.0);
        let stacked = be.constant(Tensor::new(&[tp, 2 * f], data)?);
        let d = self.cfg.d_model;
        let mut h = self.ids.enc_in.apply(be, &stacked)?;
        h = be.add(&h, &be.constant(sinusoidal_positions(tp, d)))?;
        let mut attn = Vec::new();
        for (i, blk) in self.ids.blocks.iter().enumerate() {
            let n = blk.ln1.apply(be, &h)?;
            let qkv = blk.qkv.apply(be, &n)?;
            let (q, k, v) = (be.cols(&qkv, 0, d)?, be.cols(&qkv, d, d)?, be.cols(&qkv, 2 * d, d)?);
            let (a, _) = be.attention(&q, &k, &v, None, self.cfg.num_heads, false)?;
            h = be.add(&h, &blk.out.apply(be, &a)?)?;
            let n = blk.ln2.apply(be, &h)?;
            let ff = blk.ff2.apply(be, &be.silu(&blk.ff1.apply(be, &n)?))?;
            h = be.add(&h, &ff)?;
            if let Some(ctx) = ctx {
                if want_attn {
                    if self.ids.enc_adapters.contains_key(&(i + 1)) {
                        let (hh, w) = self.apply_adapter(be, i + 1, &h, ctx)?;
                        h = hh;
                        attn.push((i + 1, w));
                    }
                } else if let Some(a) = self.ids.enc_adapters.get(&(i + 1)) {
                    let kv = ctx
                        .enc_kv
                        .get(&(i + 1))
                        .ok_or_else(|| Error::Config(format!("context lacks keys for layer {}", i + 1)))?;
                    h = self.apply_adapter_ids(be, a, &h, kv, ctx.rows.as_deref(), false)?.0;
                }
            }
        }
        Ok(Encoded { h, attn })
    }

    /// History tokens fed to the predictor after `prefix`, blank-padded.
    pub fn history(&self, prefix: &[usize]) -> Vec<usize> {
        let n = self.cfg.predictor_context;
        let mut out = vec![BLANK; n.saturating_sub(prefix.len())];
        out.extend_from_slice(&prefix[prefix.len().saturating_sub(n)..]);
        out
    }

    /// Predictor outputs `[R × d_model]`, one row per history of
    /// `predictor_context` tokens.
    pub fn predict_histories<B: Backend>(
        &self,
        be: &B,
        histories: &[Vec<usize>],
        ctx: Option<&Context<B::T>>,
    ) -> Result<B::T> {
        let n = self.cfg.predictor_context;
        let v = self.cfg.vocab_size;
        for (index, hist) in histories.iter().enumerate() {
            if hist.len() != n {
                return Err(Error::Shape { op: "predict", left: vec![hist.len()], right: vec![n] });
            }
            if let Some(&token) = hist.iter().find(|&&t| t >= v) {
                return Err(Error::OutOfVocab { index, token, vocab: v });
            }
        }
        let embed = be.param(self.ids.pred_embed);
        let parts: Vec<B::T> = (0..n)
            .map(|p| {
                let idx: Vec<usize> = histories.iter().map(|h| h[p]).collect();
                be.gather_rows(&embed, &idx)
            })
            .collect::<Result<_>>()?;
        let cat = if n == 1 { parts[0].clone() } else { be.concat_cols(&parts)? };
        let mut h = self.ids.pred_proj.apply(be, &cat)?;
        if let (Some(a), Some(ctx)) = (&self.ids.pred_adapter, ctx) {
            let kv = ctx
                .pred_kv
                .as_ref()
                .ok_or_else(|| Error::Config("context lacks predictor keys".into()))?;
            h = self.apply_adapter_ids(be, a, &h, kv, ctx.rows.as_deref(), false)?.0;
        }
        Ok(h)
    }

    /// Predictor output `[1 × d_model]` after a prefix of emitted tokens.
    pub fn predict<B: Backend>(&self, be: &B, prefix: &[usize], ctx: Option<&Context<B::T>>) -> Result<B::T> {
        self.predict_histories(be, &[self.history(prefix)], ctx)
    }

    /// Joiner input projection of encoder states, `[T' × J]`.
    pub fn join_enc<B: Backend>(&self, be: &B, h_enc: &B::T) -> Result<B::T> {
        self.ids.join_enc.apply(be, h_enc)
    }

    /// Joiner input projection of predictor states (with the joiner bias).
    pub fn join_pred<B: Backend>(&self, be: &B, h_pred: &B::T) -> Result<B::T> {
        self.ids.join_pred.apply(be, h_pred)
    }

    /// Log-probabilities `[A·R × V]` from projected encoder rows `[A × J]`
    /// and projected predictor rows `[R × J]`; row `a·R + r` pairs `a` with `r`.
    pub fn join_projected<B: Backend>(&self, be: &B, enc: &B::T, pred: &B::T) -> Result<B::T> {
        let z = be.tanh(&be.outer_add(enc, pred)?);
        be.log_softmax(&self.ids.join_out.apply(be, &z)?)
    }

    /// Logits `[V]` of a single encoder/predictor pair.
    pub fn join<B: Backend>(&self, be: &B, h_enc: &B::T, h_pred: &B::T) -> Result<B::T> {
        let z = be.tanh(&be.add(&self.join_enc(be, h_enc)?, &self.join_pred(be, h_pred)?)?);
        self.ids.join_out.apply(be, &z)
    }

    /// Full lattice of log-probabilities `[T'·(U+1) × V]` and `T'`.
    pub fn lattice<B: Backend>(
        &self,
        be: &B,
        x: &Tensor,
        target: &[usize],
        ctx: Option<&Context<B::T>>,
    ) -> Result<(B::T, usize, Vec<(usize, Tensor)>)> {
        let enc = self.encode(be, x, ctx)?;
        let frames = be.value(&enc.h).shape()[0];
        let lp = self.lattice_from(be, &enc.h, target, ctx)?;
        Ok((lp, frames, enc.attn))
    }

    fn lattice_from<B: Backend>(&self, be: &B, h: &B::T, target: &[usize], ctx: Option<&Context<B::T>>) -> Result<B::T> {
        let hist: Vec<Vec<usize>> = (0..=target.len()).map(|u| self.history(&target[..u])).collect();
        let pred = self.predict_histories(be, &hist, ctx)?;
        self.join_projected(be, &self.join_enc(be, h)?, &self.join_pred(be, &pred)?)
    }

    /// Transducer negative log-likelihood of `target` given features.
    pub fn loss<B: Backend>(
        &self,
        be: &B,
        x: &Tensor,
        target: &[usize],
        ctx: Option<&Context<B::T>>,
    ) -> Result<B::T> {
        let h = self.encode_hidden(be, x, ctx)?;
        let frames = be.value(&h).shape()[0];
        let lp = self.lattice_from(be, &h, target, ctx)?;
        be.transducer_loss(&lp, frames, target)
    }
}

pub fn is_biasing_name(name: &str) -> bool {
    BIASING_PREFIXES.iter().any(|p| name.starts_with(p))
}

#[cfg(test)]
mod tests;
