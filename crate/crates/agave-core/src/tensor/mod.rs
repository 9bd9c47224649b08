//! Dense n-dimensional tensors with exact reverse-mode differentiation.
//!
//! A [`Graph`] is a tape: every forward call appends a node holding the
//! operation's output values together with the information needed to run its
//! backward rule. Handles into the tape are plain [`TensorId`] indices.
//! Evaluation and reduction orders are fixed (left-to-right, row-major), so
//! re-running a forward pass on identical inputs reproduces bit-identical
//! outputs.
//!
//! The engine is generic over the element type: `f32` is the training
//! precision, `f64` is used by the finite-difference gradient checks.

mod backward;
mod conv;
mod gradcheck;
mod ops;

pub use gradcheck::{grad_check, GradCheckInput};

use std::fmt;

use num_traits::Float;
use thiserror::Error;

/// Element type of the engine: `f32` or `f64`.
pub trait Scalar:
    Float
    + num_traits::NumAssign
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub usize);

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("backward requires a scalar output, got {numel} elements")]
    NotScalar { numel: usize },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Recorded operation; inputs are tape indices, attributes are whatever the
/// backward rule needs.
#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Div(TensorId, TensorId),
    Maximum(TensorId, TensorId),
    Neg(TensorId),
    Exp(TensorId),
    Log(TensorId),
    Sigmoid(TensorId),
    Tanh(TensorId),
    Elu(TensorId),
    Softplus(TensorId),
    /// `step * floor(x / step)`; derivative defined as zero.
    QuantizeFloor(TensorId),
    MatMul(TensorId, TensorId),
    Conv2d {
        input: TensorId,
        kernel: TensorId,
        stride: usize,
        pad: usize,
    },
    Transpose(TensorId),
    Reshape(TensorId),
    Broadcast(TensorId),
    Concat {
        inputs: Vec<TensorId>,
        axis: usize,
    },
    Slice {
        input: TensorId,
        ranges: Vec<(usize, usize)>,
    },
    Pad {
        input: TensorId,
        pads: Vec<(usize, usize)>,
    },
    Sum {
        input: TensorId,
        axis: Option<usize>,
    },
    Mean {
        input: TensorId,
        axis: Option<usize>,
    },
    LogSumExp {
        input: TensorId,
        axis: usize,
    },
    /// Log-mass of a discretized logistic over `bins` color levels.
    /// `y` holds quantized values in [0, 255]; gradients flow to `mu` and
    /// `scale` only.
    DiscLogistic {
        y: TensorId,
        mu: TensorId,
        scale: TensorId,
        bins: u32,
    },
}

pub(crate) struct Node<S> {
    pub data: Vec<S>,
    pub shape: Vec<usize>,
    pub requires_grad: bool,
    pub grad: Option<Vec<S>>,
    pub op: Op,
}

/// Tape of executed operations. Confined to one execution context; batch
/// parallelism happens across independent graphs.
pub struct Graph<S: Scalar> {
    pub(crate) nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert a leaf tensor. `requires_grad` leaves receive gradients from
    /// [`Graph::backward`].
    pub fn leaf(
        &mut self,
        data: Vec<S>,
        shape: Vec<usize>,
        requires_grad: bool,
    ) -> Result<TensorId> {
        if data.len() != numel(&shape) {
            return Err(TensorError::ShapeMismatch(format!(
                "leaf data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(self.push(data, shape, requires_grad, Op::Leaf))
    }

    /// Leaf without gradient tracking.
    pub fn constant(&mut self, data: Vec<S>, shape: Vec<usize>) -> Result<TensorId> {
        self.leaf(data, shape, false)
    }

    /// One-element constant of shape `[1]`.
    pub fn scalar(&mut self, v: f64) -> TensorId {
        self.push(vec![S::of(v)], vec![1], false, Op::Leaf)
    }

    pub(crate) fn push(
        &mut self,
        data: Vec<S>,
        shape: Vec<usize>,
        requires_grad: bool,
        op: Op,
    ) -> TensorId {
        debug_assert_eq!(data.len(), numel(&shape));
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node {
            data,
            shape,
            requires_grad,
            grad: None,
            op,
        });
        id
    }

    pub fn data(&self, id: TensorId) -> &[S] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn numel(&self, id: TensorId) -> usize {
        self.nodes[id.0].data.len()
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Value of a one-element tensor.
    pub fn value(&self, id: TensorId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].data.len(), 1);
        self.nodes[id.0].data[0].f64()
    }

    /// Gradient accumulated by the last [`Graph::backward`] call, if any
    /// reached this node.
    pub fn grad(&self, id: TensorId) -> Option<&[S]> {
        self.nodes[id.0].grad.as_deref()
    }

    /// Gradient of a leaf; a leaf the output does not depend on gets zeros.
    pub fn grad_or_zeros(&self, id: TensorId) -> Vec<S> {
        match self.nodes[id.0].grad.as_deref() {
            Some(g) => g.to_vec(),
            None => vec![S::zero(); self.nodes[id.0].data.len()],
        }
    }

    pub(crate) fn out_requires_grad(&self, inputs: &[TensorId]) -> bool {
        inputs.iter().any(|id| self.nodes[id.0].requires_grad)
    }
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1];
    }
    s
}

/// Shape of `a` broadcast against `b` under right-aligned numpy rules.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let nd = a.len().max(b.len());
    let mut out = vec![0usize; nd];
    for i in 0..nd {
        let da = if i < nd - a.len() { 1 } else { a[i - (nd - a.len())] };
        let db = if i < nd - b.len() { 1 } else { b[i - (nd - b.len())] };
        if da != db && da != 1 && db != 1 {
            return Err(TensorError::ShapeMismatch(format!(
                "cannot broadcast {a:?} against {b:?}"
            )));
        }
        out[i] = da.max(db);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_rejects_bad_length() {
        let mut g: Graph<f64> = Graph::new();
        assert!(matches!(
            g.leaf(vec![1.0, 2.0], vec![3], true),
            Err(TensorError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn broadcast_shape_rules() {
        assert_eq!(broadcast_shape(&[2, 3], &[2, 3]).unwrap(), vec![2, 3]);
        assert_eq!(broadcast_shape(&[1], &[4, 2]).unwrap(), vec![4, 2]);
        assert_eq!(
            broadcast_shape(&[1, 3, 1, 1], &[2, 3, 4, 5]).unwrap(),
            vec![2, 3, 4, 5]
        );
        assert!(broadcast_shape(&[2], &[3]).is_err());
    }

    #[test]
    fn strides_are_row_major() {
        assert_eq!(strides(&[2, 3, 4]), vec![12, 4, 1]);
        assert_eq!(strides(&[5]), vec![1]);
    }
}
