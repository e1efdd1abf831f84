use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Named trainable tensors, iterated in sorted name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces `name`.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.entries.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::numel).sum()
    }

    /// Copies every entry of `other` into `self`.
    pub fn extend(&mut self, other: &ParamStore) {
        for (k, v) in other.iter() {
            self.insert(k, v.clone());
        }
    }

    /// Entries whose name starts with `prefix`.
    pub fn filter_prefix(&self, prefix: &str) -> ParamStore {
        ParamStore {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) initialization.
    pub fn init_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.insert(name, Tensor::new(shape.to_vec(), data).expect("numel"));
    }

    pub fn init_zeros(&mut self, name: impl Into<String>, shape: &[usize]) {
        self.insert(name, Tensor::zeros(shape));
    }

    /// `self <- (1 - tau) * self + tau * live`, entry by entry.
    pub fn blend_toward(&mut self, live: &ParamStore, tau: f64) -> Result<()> {
        for (name, target) in self.entries.iter_mut() {
            let src = live
                .get(name)
                .ok_or_else(|| TensorError::UnknownParam(name.clone()))?;
            if src.shape() != target.shape() {
                return Err(TensorError::Shape {
                    op: "blend_toward",
                    left: target.shape().to_vec(),
                    right: src.shape().to_vec(),
                });
            }
            for (t, &s) in target.data_mut().iter_mut().zip(src.data()) {
                *t = (1.0 - tau) * *t + tau * s;
            }
        }
        if live.len() != self.len() {
            return Err(TensorError::Contract(format!(
                "blend_toward: {} live entries vs {} target entries",
                live.len(),
                self.len()
            )));
        }
        Ok(())
    }
}
