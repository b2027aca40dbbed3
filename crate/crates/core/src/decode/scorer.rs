use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cell::RefCell;

use crate::error::Result;
use crate::model::{Context, Transducer};
use crate::numkit::{Backend, Tensor};

/// Joint-network log-probabilities as seen by a decoder.
pub trait JointScorer {
    fn frames(&self) -> usize;
    fn vocab(&self) -> usize;
    /// One row of `V` log-probabilities per history, at frame `t`.
    fn log_probs(&self, t: usize, prefixes: &[&[usize]]) -> Result<Vec<Vec<f64>>>;
}

/// Projected predictor rows for every possible history, valid whenever the
/// predictor has no adapter.
#[derive(Debug, Clone)]
pub struct PredictorTable {
    vocab: usize,
    context: usize,
    rows: Arc<Tensor>,
}

impl PredictorTable {
    pub fn build(model: &Transducer) -> Result<Self> {
        let cfg = model.config();
        let (v, n) = (cfg.vocab_size, cfg.predictor_context);
        let count = v.pow(n as u32);
        let hist: Vec<Vec<usize>> = (0..count)
            .map(|mut i| {
                let mut h = alloc::vec![0; n];
                for slot in h.iter_mut().rev() {
                    *slot = i % v;
                    i /= v;
                }
                h
            })
            .collect();
        let be = model.eval();
        let pred = model.predict_histories(&be, &hist, None)?;
        Ok(Self { vocab: v, context: n, rows: model.join_pred(&be, &pred)? })
    }

    fn index(&self, history: &[usize]) -> usize {
        history.iter().fold(0, |acc, &t| acc * self.vocab + t)
    }
}

/// Scores from a trained transducer for one utterance.
pub struct ModelScorer<'m> {
    model: &'m Transducer,
    enc: Arc<Tensor>,
    table: Option<&'m PredictorTable>,
    ctx: Option<Context<Arc<Tensor>>>,
    cache: RefCell<BTreeMap<Vec<usize>, Vec<f64>>>,
}

impl<'m> ModelScorer<'m> {
    /// Runs the encoder; `table` is used when the predictor is context-free.
    pub fn new(
        model: &'m Transducer,
        features: &Tensor,
        ctx: Option<Context<Arc<Tensor>>>,
        table: Option<&'m PredictorTable>,
    ) -> Result<Self> {
        let be = model.eval();
        let h = model.encode_hidden(&be, features, ctx.as_ref())?;
        let enc = model.join_enc(&be, &h)?;
        let table = if model.config().bias_predictor && ctx.is_some() { None } else { table };
        Ok(Self { model, enc, table, ctx, cache: RefCell::new(BTreeMap::new()) })
    }

    fn pred_row(&self, history: Vec<usize>) -> Result<Vec<f64>> {
        if let Some(t) = self.table {
            debug_assert_eq!(history.len(), t.context);
            return Ok(t.rows.row(t.index(&history)).to_vec());
        }
        if let Some(r) = self.cache.borrow().get(&history) {
            return Ok(r.clone());
        }
        let be = self.model.eval();
        let p = self.model.predict_histories(&be, &[history.clone()], self.ctx.as_ref())?;
        let row = self.model.join_pred(&be, &p)?.data().to_vec();
        self.cache.borrow_mut().insert(history, row.clone());
        Ok(row)
    }
}

impl JointScorer for ModelScorer<'_> {
    fn frames(&self) -> usize {
        self.enc.shape()[0]
    }

    fn vocab(&self) -> usize {
        self.model.config().vocab_size
    }

    fn log_probs(&self, t: usize, prefixes: &[&[usize]]) -> Result<Vec<Vec<f64>>> {
        let j = self.enc.shape()[1];
        let mut data = Vec::with_capacity(prefixes.len() * j);
        for p in prefixes {
            data.extend(self.pred_row(self.model.history(p))?);
        }
        let be = self.model.eval();
        let pred = be.constant(Tensor::new(&[prefixes.len(), j], data)?);
        let enc = be.constant(Tensor::new(&[1, j], self.enc.row(t).to_vec())?);
        let lp = self.model.join_projected(&be, &enc, &pred)?;
        Ok((0..prefixes.len()).map(|r| lp.row(r).to_vec()).collect())
    }
}
