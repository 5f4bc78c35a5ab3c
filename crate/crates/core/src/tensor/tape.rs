use std::sync::atomic::{AtomicU64, Ordering};

use super::ops::Op;
use super::{Element, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a tensor recorded on a specific [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    pub(crate) idx: usize,
}

pub(crate) struct Node<T: Element> {
    pub value: Tensor<T>,
    pub op: Op<T>,
    /// True when a gradient can flow into this node from the loss.
    pub tracked: bool,
}

/// Define-by-run record of every operation in one forward pass.
///
/// Nodes are appended in execution order, so the node list is already a
/// topological order; `backward` walks it in reverse.
pub struct Tape<T: Element = f32> {
    id: u64,
    pub(crate) nodes: Vec<Node<T>>,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor. It receives a gradient iff `requires_grad` is set.
    pub fn leaf(&mut self, mut tensor: Tensor<T>) -> Var {
        let tracked = tensor.requires_grad();
        tensor.set_grad(None);
        self.push_unchecked(tensor, Op::Leaf, tracked)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_grad(false))
    }

    /// Copy of `v` cut off from gradient flow.
    pub fn detach(&mut self, v: Var) -> Result<Var> {
        let value = self.node(v)?.value.clone();
        Ok(self.constant(value))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.node(v).expect("variable belongs to this tape").value
    }

    /// Gradient stored on a leaf by the last `backward` call.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.node(v).ok().and_then(|n| n.value.grad())
    }

    pub fn take_leaf(&mut self, v: Var) -> Result<Tensor<T>> {
        self.check(v)?;
        Ok(std::mem::replace(&mut self.nodes[v.idx].value, Tensor::zeros((0, 0, 0, 0))))
    }

    pub(crate) fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(Error::contract("tape", "variable was not recorded on this tape"));
        }
        Ok(())
    }

    pub(crate) fn node(&self, v: Var) -> Result<&Node<T>> {
        self.check(v)?;
        Ok(&self.nodes[v.idx])
    }

    pub(crate) fn push_unchecked(&mut self, value: Tensor<T>, op: Op<T>, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    pub(crate) fn push(&mut self, op_name: &'static str, value: Tensor<T>, op: Op<T>) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        let tracked = op.inputs().iter().any(|&i| self.nodes[i].tracked);
        Ok(self.push_unchecked(value, op, tracked))
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Afterwards every leaf with `requires_grad` holds `dloss/dleaf` (zeros if it
    /// did not contribute). Calling it again recomputes from scratch.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check(loss)?;
        if self.nodes[loss.idx].value.numel() != 1 {
            return Err(Error::contract(
                "backward",
                format!("loss must be a scalar, got shape {}", self.nodes[loss.idx].value.shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.idx] = Some(vec![T::one()]);

        for idx in (0..=loss.idx).rev() {
            let node = &self.nodes[idx];
            if !node.tracked || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            node.op.propagate(&self.nodes, &node.value, &g, &mut grads);
        }

        for (node, g) in self.nodes.iter_mut().zip(grads) {
            if matches!(node.op, Op::Leaf) && node.value.requires_grad() {
                let n = node.value.numel();
                node.value.set_grad(Some(g.unwrap_or_else(|| vec![T::zero(); n])));
            }
        }
        Ok(())
    }
}
