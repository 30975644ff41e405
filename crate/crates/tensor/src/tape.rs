//! Reverse-mode automatic differentiation over a recorded tape.
//!
//! A [`Tape`] is an append-only list of nodes. Each differentiable operation
//! applied to a [`Var`] pushes one node holding references to its input nodes
//! and a closure that maps the output gradient to input gradients. Because
//! inputs are always recorded before the operation that consumes them, the
//! node list is topologically ordered and a single reverse sweep visits every
//! node exactly once.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Maps the gradient of an operation's output to the gradients of its inputs.
/// The `needed` slice flags which inputs are tracked; entries for untracked
/// inputs may be `None`.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    inputs: Vec<Option<usize>>,
    backward: Option<BackwardFn<T>>,
}

struct TapeInner<T> {
    nodes: RefCell<Vec<Node<T>>>,
    recording: bool,
}

/// Handle to a computation graph. Cloning the handle shares the graph.
pub struct Tape<T>(Rc<TapeInner<T>>);

impl<T> Clone for Tape<T> {
    fn clone(&self) -> Self {
        Tape(Rc::clone(&self.0))
    }
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    /// A tape that records operations for a later [`Tape::backward`].
    pub fn new() -> Self {
        Tape(Rc::new(TapeInner { nodes: RefCell::new(Vec::new()), recording: true }))
    }

    /// A tape that records nothing. Intermediate values are freed as soon as
    /// the last `Var` referencing them is dropped.
    pub fn inference() -> Self {
        Tape(Rc::new(TapeInner { nodes: RefCell::new(Vec::new()), recording: false }))
    }

    pub fn is_recording(&self) -> bool {
        self.0.recording
    }

    pub fn len(&self) -> usize {
        self.0.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same(&self, other: &Tape<T>) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    /// A value that does not take part in differentiation.
    pub fn constant(&self, value: Tensor<T>) -> Var<T> {
        self.constant_shared(Arc::new(value))
    }

    pub fn constant_shared(&self, value: Arc<Tensor<T>>) -> Var<T> {
        Var { tape: self.clone(), value, node: None }
    }

    /// A leaf that receives a gradient. On an inference tape this is a constant.
    pub fn leaf(&self, value: Tensor<T>) -> Var<T> {
        self.leaf_shared(Arc::new(value))
    }

    pub fn leaf_shared(&self, value: Arc<Tensor<T>>) -> Var<T> {
        let node = if self.0.recording {
            let mut nodes = self.0.nodes.borrow_mut();
            nodes.push(Node { inputs: Vec::new(), backward: None });
            Some(nodes.len() - 1)
        } else {
            None
        };
        Var { tape: self.clone(), value, node }
    }

    /// Records an operation result. When nothing upstream is tracked the
    /// result is an untracked constant and no node is pushed.
    pub(crate) fn record(
        &self,
        value: Tensor<T>,
        inputs: &[&Var<T>],
        backward: impl Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>> + 'static,
    ) -> Var<T> {
        for v in inputs {
            assert!(self.same(&v.tape), "operands recorded on different tapes");
        }
        let tracked = self.0.recording && inputs.iter().any(|v| v.node.is_some());
        let node = if tracked {
            let mut nodes = self.0.nodes.borrow_mut();
            nodes.push(Node {
                inputs: inputs.iter().map(|v| v.node).collect(),
                backward: Some(Box::new(backward)),
            });
            Some(nodes.len() - 1)
        } else {
            None
        };
        Var { tape: self.clone(), value: Arc::new(value), node }
    }

    /// Gradients of the scalar `loss` with respect to every tracked leaf.
    ///
    /// Contributions are accumulated in node-index order so repeated calls on
    /// the same tape produce bit-identical results.
    pub fn backward(&self, loss: &Var<T>) -> Result<Gradients<T>> {
        if loss.value.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss.value.shape()
            )));
        }
        if !self.same(&loss.tape) {
            return Err(TensorError::Contract("loss belongs to another tape".into()));
        }
        let nodes = self.0.nodes.borrow();
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        let Some(root) = loss.node else {
            return Ok(Gradients { tape: self.clone(), grads });
        };
        grads[root] = Some(Tensor::ones(loss.value.shape().to_vec())?);
        for idx in (0..=root).rev() {
            let node = &nodes[idx];
            let Some(backward) = &node.backward else {
                continue;
            };
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let needed: Vec<bool> = node.inputs.iter().map(Option::is_some).collect();
            let input_grads = backward(&g, &needed);
            debug_assert_eq!(input_grads.len(), node.inputs.len());
            for (slot, ig) in node.inputs.iter().zip(input_grads) {
                let (Some(parent), Some(ig)) = (slot, ig) else {
                    continue;
                };
                match &mut grads[*parent] {
                    Some(acc) => acc.add_assign(&ig),
                    empty => *empty = Some(ig),
                }
            }
        }
        Ok(Gradients { tape: self.clone(), grads })
    }
}

/// Gradients produced by one backward sweep, looked up by the leaf `Var`.
pub struct Gradients<T> {
    tape: Tape<T>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, var: &Var<T>) -> Option<&Tensor<T>> {
        if !self.tape.same(&var.tape) {
            return None;
        }
        var.node.and_then(|n| self.grads.get(n)).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: &Var<T>) -> Option<Tensor<T>> {
        if !self.tape.same(&var.tape) {
            return None;
        }
        var.node.and_then(|n| self.grads.get_mut(n)).and_then(Option::take)
    }
}

/// A value on a tape. Cloning is cheap (shared storage).
pub struct Var<T> {
    tape: Tape<T>,
    value: Arc<Tensor<T>>,
    node: Option<usize>,
}

impl<T> Clone for Var<T> {
    fn clone(&self) -> Self {
        Var { tape: self.tape.clone(), value: Arc::clone(&self.value), node: self.node }
    }
}

impl<T: Element> fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var").field("shape", &self.value.shape()).field("node", &self.node).finish()
    }
}

impl<T: Element> Var<T> {
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn shared_value(&self) -> Arc<Tensor<T>> {
        Arc::clone(&self.value)
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn tape(&self) -> &Tape<T> {
        &self.tape
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    /// Node index on the tape, when tracked.
    pub fn node(&self) -> Option<usize> {
        self.node
    }

    /// Same value, cut off from the graph.
    pub fn detach(&self) -> Var<T> {
        Var { tape: self.tape.clone(), value: Arc::clone(&self.value), node: None }
    }

    pub(crate) fn record(
        &self,
        value: Tensor<T>,
        others: &[&Var<T>],
        backward: impl Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>> + 'static,
    ) -> Var<T> {
        let mut inputs: Vec<&Var<T>> = Vec::with_capacity(1 + others.len());
        inputs.push(self);
        inputs.extend_from_slice(others);
        self.tape.record(value, &inputs, backward)
    }
}
