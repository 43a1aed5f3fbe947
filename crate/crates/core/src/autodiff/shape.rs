//! Data-movement ops: reshape, slicing, concatenation, padding, transposes.

use super::{Backward, BackwardPass, Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Split a shape around `axis` into `(outer, axis_len, inner)`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

struct ReshapeOp {
    x: Var,
}

impl<S: Scalar> Backward<S> for ReshapeOp {
    fn backward(&self, _out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        pass.add(self.x, gout);
    }
}

struct NarrowOp {
    x: Var,
    axis: usize,
    start: usize,
}

impl<S: Scalar> Backward<S> for NarrowOp {
    fn backward(&self, out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        let in_shape = pass.value(self.x).shape().to_vec();
        let (outer, full, inner) = split_axis(&in_shape, self.axis);
        let len = out.shape()[self.axis];
        let gx = pass.grad_mut(self.x);
        for o in 0..outer {
            let src = &gout[o * len * inner..(o + 1) * len * inner];
            let dst = &mut gx[(o * full + self.start) * inner..(o * full + self.start + len) * inner];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
}

struct ConcatOp {
    xs: Vec<Var>,
    axis: usize,
}

impl<S: Scalar> Backward<S> for ConcatOp {
    fn backward(&self, out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        let (outer, total, inner) = split_axis(out.shape(), self.axis);
        let mut offset = 0;
        for &x in &self.xs {
            let len = pass.value(x).shape()[self.axis];
            if pass.needs(x) {
                let mut gx = Vec::with_capacity(outer * len * inner);
                for o in 0..outer {
                    let base = (o * total + offset) * inner;
                    gx.extend_from_slice(&gout[base..base + len * inner]);
                }
                pass.add_owned(x, gx);
            }
            offset += len;
        }
    }
}

struct PadOp {
    x: Var,
    axis: usize,
    before: usize,
}

impl<S: Scalar> Backward<S> for PadOp {
    fn backward(&self, out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        let (outer, total, inner) = split_axis(out.shape(), self.axis);
        let len = pass.value(self.x).shape()[self.axis];
        let mut gx = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * total + self.before) * inner;
            gx.extend_from_slice(&gout[base..base + len * inner]);
        }
        pass.add_owned(self.x, gx);
    }
}

fn swap_last2_data<S: Scalar>(data: &[S], batch: usize, rows: usize, cols: usize) -> Vec<S> {
    let mut out = vec![S::zero(); data.len()];
    for b in 0..batch {
        let src = &data[b * rows * cols..(b + 1) * rows * cols];
        let dst = &mut out[b * rows * cols..(b + 1) * rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                dst[c * rows + r] = src[r * cols + c];
            }
        }
    }
    out
}

struct SwapLast2Op {
    x: Var,
    batch: usize,
    rows: usize,
    cols: usize,
}

impl<S: Scalar> Backward<S> for SwapLast2Op {
    fn backward(&self, _out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        let g = swap_last2_data(gout, self.batch, self.cols, self.rows);
        pass.add_owned(self.x, g);
    }
}

impl<S: Scalar> Graph<S> {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push_op(out, &[x], ReshapeOp { x }))
    }

    /// Slice `len` entries of `axis` starting at `start`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        if axis >= t.rank() || start + len > t.shape()[axis] {
            return Err(Error::invalid(
                "narrow",
                format!(
                    "range {start}..{} out of bounds for axis {axis} of {:?}",
                    start + len,
                    t.shape()
                ),
            ));
        }
        let (outer, full, inner) = split_axis(t.shape(), axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            data.extend_from_slice(&t.data()[base..base + len * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = len;
        let out = Tensor::new(&shape, data)?;
        Ok(self.push_op(out, &[x], NarrowOp { x, axis, start }))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs.first().ok_or_else(|| Error::invalid("concat", "no inputs"))?;
        let base_shape = self.value(*first).shape().to_vec();
        if axis >= base_shape.len() {
            return Err(Error::invalid("concat", format!("axis {axis} out of range")));
        }
        let mut total = 0;
        for &x in xs {
            let s = self.value(x).shape();
            let compatible = s.len() == base_shape.len()
                && s.iter()
                    .zip(&base_shape)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: base_shape.clone(),
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base_shape, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &x in xs {
                let t = self.value(x);
                let len = t.shape()[axis];
                data.extend_from_slice(&t.data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = base_shape;
        shape[axis] = total;
        let out = Tensor::new(&shape, data)?;
        Ok(self.push_op(out, xs, ConcatOp { xs: xs.to_vec(), axis }))
    }

    /// Zero-pad `axis` with `before` and `after` entries.
    pub fn pad(&mut self, x: Var, axis: usize, before: usize, after: usize) -> Result<Var> {
        let t = self.value(x);
        if axis >= t.rank() {
            return Err(Error::invalid("pad", format!("axis {axis} out of range")));
        }
        let (outer, len, inner) = split_axis(t.shape(), axis);
        let total = before + len + after;
        let mut data = vec![S::zero(); outer * total * inner];
        for o in 0..outer {
            let dst = (o * total + before) * inner;
            data[dst..dst + len * inner].copy_from_slice(&t.data()[o * len * inner..(o + 1) * len * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = total;
        let out = Tensor::new(&shape, data)?;
        Ok(self.push_op(out, &[x], PadOp { x, axis, before }))
    }

    /// Swap the two trailing axes: `[.., r, c] -> [.., c, r]`.
    pub fn swap_last2(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let rank = t.rank();
        if rank < 2 {
            return Err(Error::invalid("swap_last2", "rank < 2"));
        }
        let (rows, cols) = (t.shape()[rank - 2], t.shape()[rank - 1]);
        let batch = t.len() / (rows * cols).max(1);
        let data = swap_last2_data(t.data(), batch, rows, cols);
        let mut shape = t.shape().to_vec();
        shape.swap(rank - 2, rank - 1);
        let out = Tensor::new(&shape, data)?;
        Ok(self.push_op(out, &[x], SwapLast2Op { x, batch, rows, cols }))
    }
}
