//! Reverse-mode differentiation over dense tensors.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its output
//! value and, when any input requires a gradient, a backward rule. Node ids
//! are assigned in creation order, which is therefore a topological order,
//! and [`Graph::backward`] visits each node exactly once walking it in
//! reverse. Graphs are built fresh for every forward pass.

mod conv;
mod elementwise;
mod gru;
mod linalg;
mod shape;
mod signal;

pub use conv::{conv1d_out_len, conv_transpose1d_out_len, Conv1dSpec, Conv2dSpec};
pub use elementwise::Unary;
pub use gru::GruWeights;
pub use signal::ola_frames;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule of one recorded operation.
pub(crate) trait Backward<S: Scalar> {
    /// Accumulate input gradients given the gradient `gout` of this node.
    fn backward(&self, out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>);
}

/// Gradient sink handed to [`Backward::backward`].
pub(crate) struct BackwardPass<'a, S: Scalar> {
    values: &'a [Tensor<S>],
    requires: &'a [bool],
    grads: &'a mut [Option<Vec<S>>],
}

impl<S: Scalar> BackwardPass<'_, S> {
    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.values[v.0]
    }

    pub fn needs(&self, v: Var) -> bool {
        self.requires[v.0]
    }

    /// Mutable gradient buffer of `v`, zero-initialized on first touch.
    pub fn grad_mut(&mut self, v: Var) -> &mut [S] {
        let n = self.values[v.0].len();
        self.grads[v.0].get_or_insert_with(|| vec![S::zero(); n])
    }

    pub fn add(&mut self, v: Var, g: &[S]) {
        if !self.needs(v) {
            return;
        }
        let buf = self.grad_mut(v);
        for (b, &x) in buf.iter_mut().zip(g) {
            *b += x;
        }
    }

    /// Like [`add`](Self::add) but takes ownership, avoiding a copy on first touch.
    pub fn add_owned(&mut self, v: Var, g: Vec<S>) {
        if !self.needs(v) {
            return;
        }
        match &mut self.grads[v.0] {
            Some(buf) => {
                for (b, x) in buf.iter_mut().zip(g) {
                    *b += x;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }
}

pub struct Graph<S: Scalar> {
    values: Vec<Tensor<S>>,
    requires: Vec<bool>,
    leaf: Vec<bool>,
    ops: Vec<Option<Box<dyn Backward<S>>>>,
    grads: Vec<Option<Vec<S>>>,
    backward_done: bool,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            requires: Vec::new(),
            leaf: Vec::new(),
            ops: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push_node(&mut self, value: Tensor<S>, requires: bool, leaf: bool, op: Option<Box<dyn Backward<S>>>) -> Var {
        self.values.push(value);
        self.requires.push(requires);
        self.leaf.push(leaf);
        self.ops.push(op);
        self.grads.push(None);
        Var(self.values.len() - 1)
    }

    /// Leaf that does not participate in differentiation.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push_node(value, false, true, None)
    }

    /// Leaf whose gradient is populated by [`backward`](Self::backward).
    pub fn leaf(&mut self, value: Tensor<S>) -> Var {
        self.push_node(value, true, true, None)
    }

    pub fn scalar(&mut self, value: S) -> Var {
        self.constant(Tensor::scalar(value))
    }

    /// Record an operation. The backward rule is kept only if some input
    /// requires a gradient.
    pub(crate) fn push_op<B: Backward<S> + 'static>(&mut self, value: Tensor<S>, inputs: &[Var], op: B) -> Var {
        let requires = inputs.iter().any(|v| self.requires[v.0]);
        let op: Option<Box<dyn Backward<S>>> = if requires { Some(Box::new(op)) } else { None };
        self.push_node(value, requires, false, op)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.values[v.0].shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.requires[v.0]
    }

    /// Gradient of a leaf after [`backward`](Self::backward).
    pub fn grad(&self, v: Var) -> Option<&[S]> {
        self.grads[v.0].as_deref()
    }

    /// Gradient of a leaf, zero-filled when the leaf did not influence the loss.
    pub fn grad_or_zeros(&self, v: Var) -> Vec<S> {
        self.grad(v)
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![S::zero(); self.values[v.0].len()])
    }

    /// A constant copy of `v`'s current value (stops gradient flow).
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.values[v.0].clone();
        self.constant(t)
    }

    pub fn backward_done(&self) -> bool {
        self.backward_done
    }

    /// Populate gradients of every leaf that requires one.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        if self.values[loss.0].len() != 1 {
            return Err(Error::NonScalarLoss(self.values[loss.0].shape().to_vec()));
        }
        self.backward_done = true;
        if !self.requires[loss.0] {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![S::one()]);

        let Graph {
            values,
            requires,
            leaf,
            ops,
            grads,
            ..
        } = self;
        for idx in (0..=loss.0).rev() {
            if leaf[idx] {
                continue;
            }
            let Some(op) = ops[idx].as_ref() else {
                continue;
            };
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            let mut pass = BackwardPass {
                values,
                requires,
                grads,
            };
            op.backward(&values[idx], &gout, &mut pass);
        }
        // Saved activations are no longer needed.
        for op in ops.iter_mut() {
            *op = None;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0, -2.0, 3.5]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn inner_product_gradient_is_twice_x() {
        let mut g = Graph::<f64>::new();
        let data = vec![0.5, -1.5, 2.0, 4.0];
        let x = g.leaf(Tensor::from_vec(data.clone()));
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        g.backward(s).unwrap();
        let expect: Vec<f64> = data.iter().map(|v| 2.0 * v).collect();
        assert_eq!(g.grad(x).unwrap(), expect.as_slice());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let y = g.scale(x, 2.0);
        assert!(matches!(g.backward(y), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn second_backward_is_an_error() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.backward(s), Err(Error::BackwardTwice));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let c = g.constant(Tensor::from_vec(vec![3.0, 4.0]));
        let y = g.mul(x, c).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[3.0, 4.0]);
        assert!(g.grad(c).is_none());
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec(vec![2.0]));
        let y = g.mul(x, x).unwrap();
        let d = g.detach(y);
        let z = g.mul(d, x).unwrap();
        let s = g.sum(z);
        g.backward(s).unwrap();
        // d/dx (const(x^2) * x) = x^2
        assert_eq!(g.grad(x).unwrap(), &[4.0]);
    }
}
