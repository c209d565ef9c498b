use std::collections::HashMap;

use super::graph::{Gradients, Graph, Var};
use super::tensor::Tensor;
use super::NumericsError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor<f32>,
}

/// Named parameters in a fixed insertion order. The order is the checkpoint
/// manifest order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        value: Tensor<f32>,
    ) -> Result<ParamId, NumericsError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NumericsError::DuplicateParam(name));
        }
        let id = ParamId(self.params.len());
        self.index.insert(name.clone(), id);
        self.params.push(Param { name, value });
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<f32> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<f32> {
        &mut self.params[id.0].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }
}

/// Sparse per-parameter gradients; `None` means the parameter took no part in
/// the computation.
#[derive(Clone, Debug, PartialEq)]
pub struct GradStore {
    grads: Vec<Option<Vec<f32>>>,
}

impl GradStore {
    pub fn new(n_params: usize) -> Self {
        Self {
            grads: vec![None; n_params],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&[f32]> {
        self.grads[id.0].as_deref()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn accumulate(&mut self, id: ParamId, grad: &[f32]) {
        match &mut self.grads[id.0] {
            Some(g) => {
                for (a, &b) in g.iter_mut().zip(grad) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(grad.to_vec()),
        }
    }

    pub fn merge(&mut self, other: &GradStore) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g);
            }
        }
    }

    pub fn touched(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.grads
            .iter()
            .enumerate()
            .filter(|(_, g)| g.is_some())
            .map(|(i, _)| ParamId(i))
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .flat_map(|g| g.iter())
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`. Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm.is_finite() {
            let scale = (max_norm / norm) as f32;
            for g in self.grads.iter_mut().flatten() {
                for v in g.iter_mut() {
                    *v *= scale;
                }
            }
        }
        norm
    }
}

/// Places parameters onto a graph on first use.
pub struct Binder<'s> {
    store: &'s ParamStore,
    vars: Vec<Option<Var>>,
    trainable: bool,
}

impl<'s> Binder<'s> {
    pub fn new(store: &'s ParamStore, trainable: bool) -> Self {
        Self {
            store,
            vars: vec![None; store.len()],
            trainable,
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn var(&mut self, g: &mut Graph<f32>, id: ParamId) -> Var {
        if let Some(v) = self.vars[id.0] {
            return v;
        }
        let v = g.leaf(self.store.value(id).clone(), self.trainable);
        self.vars[id.0] = Some(v);
        v
    }

    /// Moves the gradients of bound parameters into a [`GradStore`].
    pub fn collect(&self, grads: &mut Gradients<f32>) -> GradStore {
        let mut out = GradStore::new(self.store.len());
        for (i, v) in self.vars.iter().enumerate() {
            if let Some(v) = v {
                let g = grads
                    .take(*v)
                    .unwrap_or_else(|| Tensor::zeros(self.store.value(ParamId(i)).shape()));
                out.grads[i] = Some(g.into_data());
            }
        }
        out
    }
}
