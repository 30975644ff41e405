use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use strokeseg_tensor::{BatchStats, Element, Gradients, Tape, Tensor, Var};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BufferId(pub(crate) usize);

/// Named learnable parameters plus non-learnable buffers (normalisation
/// running statistics), kept in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<(String, Arc<Tensor<T>>)>,
    buffers: Vec<(String, Tensor<T>)>,
    names: HashMap<String, usize>,
    buffer_names: HashMap<String, usize>,
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new(), buffers: Vec::new(), names: HashMap::new(), buffer_names: HashMap::new() }
    }

    pub fn add_param(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.names.contains_key(&name) || self.buffer_names.contains_key(&name) {
            return Err(Error::Invalid(format!("duplicate parameter name {name}")));
        }
        self.names.insert(name.clone(), self.params.len());
        self.params.push((name, Arc::new(value)));
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<BufferId> {
        let name = name.into();
        if self.names.contains_key(&name) || self.buffer_names.contains_key(&name) {
            return Err(Error::Invalid(format!("duplicate buffer name {name}")));
        }
        self.buffer_names.insert(name.clone(), self.buffers.len());
        self.buffers.push((name, value));
        Ok(BufferId(self.buffers.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of learnable scalars.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].0
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].1
    }

    pub fn shared(&self, id: ParamId) -> Arc<Tensor<T>> {
        Arc::clone(&self.params[id.0].1)
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        Arc::make_mut(&mut self.params[id.0].1)
    }

    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let slot = &mut self.params[id.0];
        if slot.1.shape() != value.shape() {
            return Err(Error::Invalid(format!(
                "parameter {} has shape {:?}, got {:?}",
                slot.0,
                slot.1.shape(),
                value.shape()
            )));
        }
        slot.1 = Arc::new(value);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.params.iter().enumerate().map(|(i, (n, t))| (ParamId(i), n.as_str(), t.as_ref()))
    }

    pub fn buffer(&self, id: BufferId) -> &Tensor<T> {
        &self.buffers[id.0].1
    }

    pub fn buffer_mut(&mut self, id: BufferId) -> &mut Tensor<T> {
        &mut self.buffers[id.0].1
    }

    pub fn buffer_id(&self, name: &str) -> Option<BufferId> {
        self.buffer_names.get(name).map(|&i| BufferId(i))
    }

    pub fn buffers(&self) -> impl Iterator<Item = (BufferId, &str, &Tensor<T>)> {
        self.buffers.iter().enumerate().map(|(i, (n, t))| (BufferId(i), n.as_str(), t))
    }

    /// Same names and values in another precision.
    pub fn cast<U: Element>(&self) -> ParamStore<U> {
        ParamStore {
            params: self.params.iter().map(|(n, t)| (n.clone(), Arc::new(t.cast()))).collect(),
            buffers: self.buffers.iter().map(|(n, t)| (n.clone(), t.cast())).collect(),
            names: self.names.clone(),
            buffer_names: self.buffer_names.clone(),
        }
    }

    /// Folds batch statistics into running statistics:
    /// `running <- (1 - momentum) * running + momentum * batch`, using the
    /// unbiased batch variance.
    pub fn apply_batch_stats(&mut self, updates: &[BatchNormUpdate<T>], momentum: f64) {
        let m = T::from_f64(momentum);
        let keep = T::one() - m;
        for u in updates {
            let n = u.stats.count;
            let correction = if n > 1 { T::from_f64(n as f64 / (n as f64 - 1.0)) } else { T::one() };
            for (r, &b) in self.buffers[u.mean.0].1.data_mut().iter_mut().zip(&u.stats.mean) {
                *r = keep * *r + m * b;
            }
            for (r, &b) in self.buffers[u.var.0].1.data_mut().iter_mut().zip(&u.stats.var) {
                *r = keep * *r + m * b * correction;
            }
        }
    }
}

/// Seeded parameter initialisation. Values are drawn in `f64` and then
/// converted, so every precision sees the same initial model.
pub struct Init<'a, T> {
    pub store: &'a mut ParamStore<T>,
    rng: ChaCha8Rng,
}

impl<'a, T: Element> Init<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, seed: u64) -> Self {
        Init { store, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// He-uniform: U(-b, b) with `b = sqrt(6 / fan_in)`.
    pub fn he_uniform(&mut self, name: String, shape: Vec<usize>, fan_in: usize) -> Result<ParamId> {
        let bound = (6.0 / fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::from_f64(self.rng.gen_range(-bound..bound))).collect();
        self.store.add_param(name, Tensor::new(shape, data)?)
    }

    pub fn constant(&mut self, name: String, shape: Vec<usize>, value: f64) -> Result<ParamId> {
        self.store.add_param(name, Tensor::full(shape, T::from_f64(value))?)
    }

    pub fn buffer(&mut self, name: String, shape: Vec<usize>, value: f64) -> Result<BufferId> {
        self.store.add_buffer(name, Tensor::full(shape, T::from_f64(value))?)
    }
}

/// Batch statistics produced by one normalisation layer in training mode.
#[derive(Clone, Debug)]
pub struct BatchNormUpdate<T> {
    pub mean: BufferId,
    pub var: BufferId,
    pub stats: BatchStats<T>,
}

/// Per-call evaluation context: binds parameters to tape leaves, carries the
/// training flag and the dropout seed stream, and collects normalisation
/// statistics.
pub struct Forward<'s, T: Element> {
    tape: Tape<T>,
    store: &'s ParamStore<T>,
    leaves: RefCell<Vec<Option<Var<T>>>>,
    training: bool,
    dropout_seed: u64,
    dropout_calls: Cell<u64>,
    bn_updates: RefCell<Vec<BatchNormUpdate<T>>>,
}

impl<'s, T: Element> Forward<'s, T> {
    pub fn new(tape: Tape<T>, store: &'s ParamStore<T>, training: bool, dropout_seed: u64) -> Self {
        Forward {
            tape,
            store,
            leaves: RefCell::new(vec![None; store.len()]),
            training,
            dropout_seed,
            dropout_calls: Cell::new(0),
            bn_updates: RefCell::new(Vec::new()),
        }
    }

    /// Recording tape, dropout and batch statistics on.
    pub fn train(store: &'s ParamStore<T>, dropout_seed: u64) -> Self {
        Self::new(Tape::new(), store, true, dropout_seed)
    }

    /// Non-recording tape, dropout off, running statistics.
    pub fn eval(store: &'s ParamStore<T>) -> Self {
        Self::new(Tape::inference(), store, false, 0)
    }

    pub fn tape(&self) -> &Tape<T> {
        &self.tape
    }

    pub fn training(&self) -> bool {
        self.training
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    pub fn input(&self, x: Tensor<T>) -> Var<T> {
        self.tape.constant(x)
    }

    /// The variable standing for parameter `id` in this evaluation.
    pub fn param(&self, id: ParamId) -> Var<T> {
        let mut leaves = self.leaves.borrow_mut();
        leaves[id.0].get_or_insert_with(|| self.tape.leaf_shared(self.store.shared(id))).clone()
    }

    /// Uses `var` in place of the stored value of `id` (e.g. to differentiate
    /// with respect to parameters inside a gradient check).
    pub fn bind(&self, id: ParamId, var: Var<T>) {
        self.leaves.borrow_mut()[id.0] = Some(var);
    }

    pub fn buffer(&self, id: BufferId) -> &Tensor<T> {
        self.store.buffer(id)
    }

    /// Dropout in training mode, identity otherwise. Each call draws a fresh
    /// mask from the context's seed stream.
    pub fn dropout(&self, x: &Var<T>, p: f64) -> Result<Var<T>> {
        if !self.training || p == 0.0 {
            return Ok(x.clone());
        }
        let call = self.dropout_calls.get();
        self.dropout_calls.set(call + 1);
        let seed = self.dropout_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(call);
        Ok(x.dropout(p, seed)?)
    }

    pub(crate) fn push_bn_update(&self, update: BatchNormUpdate<T>) {
        self.bn_updates.borrow_mut().push(update);
    }

    pub fn take_bn_updates(&self) -> Vec<BatchNormUpdate<T>> {
        std::mem::take(&mut self.bn_updates.borrow_mut())
    }

    /// Gradient for each parameter that took part in the evaluation, in
    /// parameter order. Unused parameters are reported as `None`.
    pub fn param_grads(&self, grads: &mut Gradients<T>) -> Vec<Option<Tensor<T>>> {
        self.leaves.borrow().iter().map(|leaf| leaf.as_ref().and_then(|v| grads.take(v))).collect()
    }
}
