use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, Result};
use crate::model::{Context, Transducer};
use crate::numkit::Tensor;

/// Context embeddings and adapter keys/values for a fixed universe of
/// entries, computed once.
///
/// Every entry is embedded independently and every projection acts row by
/// row, so gathering rows from the cache gives exactly what encoding a list
/// from scratch would.
#[derive(Debug, Clone)]
pub struct ContextCache {
    index: BTreeMap<Vec<usize>, usize>,
    full: Context<Arc<Tensor>>,
}

impl ContextCache {
    pub fn build(model: &Transducer, entries: &[Vec<usize>]) -> Result<Self> {
        let mut index = BTreeMap::new();
        let mut unique = Vec::new();
        for e in entries {
            if !index.contains_key(e) {
                index.insert(e.clone(), unique.len() + 1);
                unique.push(e.clone());
            }
        }
        let be = model.eval();
        let full = model.context(&be, &unique)?;
        Ok(Self { index, full })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Context of a list whose entries all belong to the cached universe.
    ///
    /// The result shares the cached tables and only records which of their
    /// rows the list selects.
    pub fn context(&self, list: &[Vec<usize>]) -> Result<Context<Arc<Tensor>>> {
        let mut rows = vec![0];
        for e in list {
            rows.push(*self.index.get(e).ok_or_else(|| contract("biasing entry missing from context cache"))?);
        }
        Ok(Context { rows: Some(rows.into()), ..self.full.clone() })
    }

    /// Like [`context`](Self::context), with each entry given by its position
    /// among the distinct entries passed to [`build`](Self::build), in order
    /// of first appearance.
    pub fn context_rows(&self, entries: &[usize]) -> Result<Context<Arc<Tensor>>> {
        let mut rows = vec![0];
        for &e in entries {
            if e >= self.index.len() {
                return Err(contract("biasing entry missing from context cache"));
            }
            rows.push(e + 1);
        }
        Ok(Context { rows: Some(rows.into()), ..self.full.clone() })
    }
}
