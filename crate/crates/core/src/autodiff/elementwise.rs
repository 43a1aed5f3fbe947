//! Elementwise maps, binary arithmetic, broadcasts and reductions.

use super::{Backward, BackwardPass, Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Pointwise nonlinearities and maps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
    /// `2 * sigmoid(x)^ln(10) + 1e-7`: strictly positive, bounded above by 2.
    ExpSigmoid,
    Exp,
    /// `ln(x + eps)`
    Log(f64),
    Sqrt,
    Abs,
    Square,
}

pub(crate) const EXP_SIGMOID_FLOOR: f64 = 1e-7;
pub(crate) const EXP_SIGMOID_MAX: f64 = 2.0;

#[inline]
fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

impl Unary {
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Unary::LeakyRelu(a) => {
                if x > S::zero() {
                    x
                } else {
                    x * S::lit(a)
                }
            }
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::ExpSigmoid => S::lit(EXP_SIGMOID_MAX) * sigmoid(x).powf(S::LN_10()) + S::lit(EXP_SIGMOID_FLOOR),
            Unary::Exp => x.exp(),
            Unary::Log(eps) => (x + S::lit(eps)).ln(),
            Unary::Sqrt => x.sqrt(),
            Unary::Abs => x.abs(),
            Unary::Square => x * x,
        }
    }

    /// Derivative given input `x` and output `y`.
    fn derivative<S: Scalar>(self, x: S, y: S) -> S {
        let one = S::one();
        match self {
            Unary::LeakyRelu(a) => {
                if x > S::zero() {
                    one
                } else {
                    S::lit(a)
                }
            }
            Unary::Sigmoid => y * (one - y),
            Unary::Tanh => one - y * y,
            Unary::ExpSigmoid => (y - S::lit(EXP_SIGMOID_FLOOR)) * S::LN_10() * (one - sigmoid(x)),
            Unary::Exp => y,
            Unary::Log(eps) => one / (x + S::lit(eps)),
            Unary::Sqrt => {
                if y > S::zero() {
                    one / (y + y)
                } else {
                    S::zero()
                }
            }
            Unary::Abs => {
                if x > S::zero() {
                    one
                } else if x < S::zero() {
                    -one
                } else {
                    S::zero()
                }
            }
            Unary::Square => x + x,
        }
    }
}

struct UnaryOp {
    x: Var,
    kind: Unary,
}

impl<S: Scalar> Backward<S> for UnaryOp {
    fn backward(&self, out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        let g: Vec<S> = {
            let x = pass.value(self.x).data();
            gout.iter()
                .zip(x.iter().zip(out.data()))
                .map(|(&g, (&x, &y))| g * self.kind.derivative(x, y))
                .collect()
        };
        pass.add_owned(self.x, g);
    }
}

#[derive(Clone, Copy)]
enum BinKind {
    Add,
    Sub,
    Mul,
    Div,
}

struct BinaryOp {
    a: Var,
    b: Var,
    kind: BinKind,
}

impl<S: Scalar> Backward<S> for BinaryOp {
    fn backward(&self, out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        match self.kind {
            BinKind::Add => {
                pass.add(self.a, gout);
                pass.add(self.b, gout);
            }
            BinKind::Sub => {
                pass.add(self.a, gout);
                if pass.needs(self.b) {
                    let neg: Vec<S> = gout.iter().map(|&g| -g).collect();
                    pass.add_owned(self.b, neg);
                }
            }
            BinKind::Mul => {
                if pass.needs(self.a) {
                    let b = pass.value(self.b).data();
                    let ga: Vec<S> = gout.iter().zip(b).map(|(&g, &b)| g * b).collect();
                    pass.add_owned(self.a, ga);
                }
                if pass.needs(self.b) {
                    let a = pass.value(self.a).data();
                    let gb: Vec<S> = gout.iter().zip(a).map(|(&g, &a)| g * a).collect();
                    pass.add_owned(self.b, gb);
                }
            }
            BinKind::Div => {
                let b = pass.value(self.b).data();
                let ga: Vec<S> = gout.iter().zip(b).map(|(&g, &b)| g / b).collect();
                if pass.needs(self.b) {
                    let gb: Vec<S> = ga.iter().zip(out.data()).map(|(&gab, &y)| -gab * y).collect();
                    pass.add_owned(self.b, gb);
                }
                pass.add_owned(self.a, ga);
            }
        }
    }
}

struct ScaleOp {
    x: Var,
    c: f64,
}

impl<S: Scalar> Backward<S> for ScaleOp {
    fn backward(&self, _out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        let c = S::lit(self.c);
        pass.add_owned(self.x, gout.iter().map(|&g| g * c).collect());
    }
}

struct PassThrough {
    x: Var,
}

impl<S: Scalar> Backward<S> for PassThrough {
    fn backward(&self, _out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        pass.add(self.x, gout);
    }
}

/// `x[.., d] + b[d]`
struct AddRowOp {
    x: Var,
    b: Var,
}

impl<S: Scalar> Backward<S> for AddRowOp {
    fn backward(&self, _out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        pass.add(self.x, gout);
        if pass.needs(self.b) {
            let d = pass.value(self.b).len();
            let gb = pass.grad_mut(self.b);
            for row in gout.chunks_exact(d) {
                for (acc, &g) in gb.iter_mut().zip(row) {
                    *acc += g;
                }
            }
        }
    }
}

/// `x[r, c] * s[r]` (per-row scale)
struct MulColOp {
    x: Var,
    s: Var,
}

impl<S: Scalar> Backward<S> for MulColOp {
    fn backward(&self, _out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        let rows = pass.value(self.s).len();
        let cols = gout.len() / rows;
        if pass.needs(self.x) {
            let s = pass.value(self.s).data();
            let mut gx = vec![S::zero(); gout.len()];
            for r in 0..rows {
                for c in 0..cols {
                    gx[r * cols + c] = gout[r * cols + c] * s[r];
                }
            }
            pass.add_owned(self.x, gx);
        }
        if pass.needs(self.s) {
            let x = pass.value(self.x).data();
            let gs: Vec<S> = (0..rows)
                .map(|r| (0..cols).map(|c| gout[r * cols + c] * x[r * cols + c]).sum())
                .collect();
            pass.add_owned(self.s, gs);
        }
    }
}

struct SumOp {
    x: Var,
    scale: f64,
}

impl<S: Scalar> Backward<S> for SumOp {
    fn backward(&self, _out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        let n = pass.value(self.x).len();
        let g = gout[0] * S::lit(self.scale);
        pass.add_owned(self.x, vec![g; n]);
    }
}

struct SumLastOp {
    x: Var,
}

impl<S: Scalar> Backward<S> for SumLastOp {
    fn backward(&self, _out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        let n = pass.value(self.x).len();
        let d = n / gout.len();
        let mut g = Vec::with_capacity(n);
        for &go in gout {
            g.extend(std::iter::repeat_n(go, d));
        }
        pass.add_owned(self.x, g);
    }
}

impl<S: Scalar> Graph<S> {
    pub fn unary(&mut self, x: Var, kind: Unary) -> Var {
        let out = self.value(x).map(|v| kind.apply(v));
        self.push_op(out, &[x], UnaryOp { x, kind })
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(x, Unary::LeakyRelu(slope))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Tanh)
    }

    pub fn exp_sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Unary::ExpSigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Exp)
    }

    /// `ln(x + eps)`
    pub fn log_eps(&mut self, x: Var, eps: f64) -> Var {
        self.unary(x, Unary::Log(eps))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sqrt)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Abs)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Square)
    }

    fn binary(&mut self, a: Var, b: Var, kind: BinKind, op: &'static str) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch {
                op,
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data: Vec<S> = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| match kind {
                BinKind::Add => x + y,
                BinKind::Sub => x - y,
                BinKind::Mul => x * y,
                BinKind::Div => x / y,
            })
            .collect();
        let out = Tensor::new(ta.shape(), data)?;
        Ok(self.push_op(out, &[a, b], BinaryOp { a, b, kind }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinKind::Add, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinKind::Sub, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinKind::Mul, "mul")
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinKind::Div, "div")
    }

    /// Sum of several same-shape tensors.
    pub fn add_all(&mut self, xs: &[Var]) -> Result<Var> {
        let (&first, rest) = xs.split_first().ok_or_else(|| Error::invalid("add_all", "no inputs"))?;
        rest.iter().try_fold(first, |acc, &x| self.add(acc, x))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let cs = S::lit(c);
        let out = self.value(x).map(|v| v * cs);
        self.push_op(out, &[x], ScaleOp { x, c })
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let cs = S::lit(c);
        let out = self.value(x).map(|v| v + cs);
        self.push_op(out, &[x], PassThrough { x })
    }

    /// Broadcast-add a bias vector along the last axis.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        let d = tb.len();
        if tb.rank() != 1 || tx.shape().last() != Some(&d) {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                lhs: tx.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let mut data = tx.data().to_vec();
        for row in data.chunks_exact_mut(d) {
            for (v, &bb) in row.iter_mut().zip(tb.data()) {
                *v += bb;
            }
        }
        let out = Tensor::new(tx.shape(), data)?;
        Ok(self.push_op(out, &[x, b], AddRowOp { x, b }))
    }

    /// Scale each row of a rank-2 `x[r, c]` by `s[r]`.
    pub fn mul_col(&mut self, x: Var, s: Var) -> Result<Var> {
        let (tx, ts) = (self.value(x), self.value(s));
        if tx.rank() != 2 || ts.rank() != 1 || tx.shape()[0] != ts.len() {
            return Err(Error::ShapeMismatch {
                op: "mul_col",
                lhs: tx.shape().to_vec(),
                rhs: ts.shape().to_vec(),
            });
        }
        let cols = tx.shape()[1];
        let mut data = tx.data().to_vec();
        for (row, &sv) in data.chunks_exact_mut(cols).zip(ts.data()) {
            for v in row {
                *v *= sv;
            }
        }
        let out = Tensor::new(tx.shape(), data)?;
        Ok(self.push_op(out, &[x, s], MulColOp { x, s }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push_op(out, &[x], SumOp { x, scale: 1.0 })
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let n = t.len().max(1);
        let out = Tensor::scalar(t.sum() / S::lit(n as f64));
        self.push_op(
            out,
            &[x],
            SumOp {
                x,
                scale: 1.0 / n as f64,
            },
        )
    }

    /// Sum over the last axis: `[.., d] -> [..]`.
    pub fn sum_last(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let Some((&d, lead)) = t.shape().split_last() else {
            return Err(Error::invalid("sum_last", "rank-0 input"));
        };
        let data: Vec<S> = if d == 0 {
            vec![S::zero(); lead.iter().product()]
        } else {
            t.data().chunks_exact(d).map(|r| r.iter().copied().sum()).collect()
        };
        let out = Tensor::new(lead, data)?;
        Ok(self.push_op(out, &[x], SumLastOp { x }))
    }

    /// Mean absolute difference, the building block of every L1 objective.
    pub fn l1_mean(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let ad = self.abs(d);
        Ok(self.mean(ad))
    }

    /// Frobenius norm.
    pub fn norm(&mut self, x: Var) -> Var {
        let sq = self.square(x);
        let s = self.sum(sq);
        self.sqrt(s)
    }
}
