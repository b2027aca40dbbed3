use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of parameter tensors.
///
/// Values are reference counted so that graphs and eager evaluators can read
/// them without copying; mutation goes through [`ParamStore::get_mut`].
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Arc<Tensor>>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, mut value: Tensor) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Params(alloc::format!("duplicate parameter {name}")));
        }
        if !value.requires_grad() {
            value.set_requires_grad(true);
        }
        let id = self.values.len();
        self.names.push(name.to_string());
        self.values.push(Arc::new(value));
        self.index.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn shared(&self, id: ParamId) -> Arc<Tensor> {
        self.values[id.0].clone()
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        Arc::make_mut(&mut self.values[id.0])
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> + '_ {
        self.ids()
            .map(move |id| (id, self.names[id.0].as_str(), &*self.values[id.0]))
    }

    /// Total number of scalar values over the given parameters.
    pub fn count_scalars<'a>(&self, ids: impl IntoIterator<Item = &'a ParamId>) -> usize {
        ids.into_iter().map(|id| self.values[id.0].numel()).sum()
    }

    pub fn set_trainable(&mut self, id: ParamId, on: bool) {
        if self.values[id.0].requires_grad() != on {
            self.get_mut(id).set_requires_grad(on);
        }
    }

    pub fn zero_grad(&mut self) {
        for i in 0..self.values.len() {
            if self.values[i].grad().is_some() {
                Arc::make_mut(&mut self.values[i]).zero_grad();
            }
        }
    }

    /// Adds externally computed gradients into the parameters' buffers.
    pub fn accumulate(&mut self, grads: Vec<(ParamId, Vec<f64>)>) -> Result<()> {
        for (id, g) in grads {
            self.get_mut(id).accumulate_grad(&g)?;
        }
        Ok(())
    }

    /// Replaces the value of `name`, which must already exist with the same shape.
    pub fn load_value(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self
            .id(name)
            .ok_or_else(|| Error::Params(alloc::format!("unknown parameter {name}")))?;
        let cur = self.get(id);
        if cur.shape() != value.shape() {
            return Err(Error::Params(alloc::format!(
                "shape mismatch for {name}: expected {:?}, found {:?}",
                cur.shape(),
                value.shape()
            )));
        }
        let rg = cur.requires_grad();
        self.values[id.0] = Arc::new(value.with_requires_grad(rg));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::zeros(&[2])).unwrap();
        assert!(s.add("w", Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn load_value_checks_shape() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::zeros(&[2])).unwrap();
        assert!(s.load_value("w", Tensor::zeros(&[3])).is_err());
        assert!(s.load_value("v", Tensor::zeros(&[2])).is_err());
        s.load_value("w", Tensor::full(&[2], 1.0)).unwrap();
        assert_eq!(s.get(s.id("w").unwrap()).data(), &[1.0, 1.0]);
    }
}
