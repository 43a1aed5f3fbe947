use super::{Backward, BackwardPass, Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `c[m, n] += a[m, k] * b[k, n]`
pub(crate) fn gemm_nn<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == S::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c[m, k] += g[m, n] * b[k, n]^T`
pub(crate) fn gemm_nt<S: Scalar>(g: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = S::zero();
            for (&x, &y) in grow.iter().zip(brow) {
                acc += x * y;
            }
            c[i * k + p] += acc;
        }
    }
}

/// `c[k, n] += a[m, k]^T * g[m, n]`
pub(crate) fn gemm_tn<S: Scalar>(a: &[S], g: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == S::zero() {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &gv) in crow.iter_mut().zip(grow) {
                *cv += av * gv;
            }
        }
    }
}

struct MatMulOp {
    a: Var,
    b: Var,
    bias: Option<Var>,
    m: usize,
    k: usize,
    n: usize,
}

impl<S: Scalar> Backward<S> for MatMulOp {
    fn backward(&self, _out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        let (m, k, n) = (self.m, self.k, self.n);
        if pass.needs(self.a) {
            let mut ga = vec![S::zero(); m * k];
            gemm_nt(gout, pass.value(self.b).data(), &mut ga, m, k, n);
            pass.add_owned(self.a, ga);
        }
        if pass.needs(self.b) {
            let mut gb = vec![S::zero(); k * n];
            gemm_tn(pass.value(self.a).data(), gout, &mut gb, m, k, n);
            pass.add_owned(self.b, gb);
        }
        if let Some(bias) = self.bias {
            if pass.needs(bias) {
                let gb = pass.grad_mut(bias);
                for row in gout.chunks_exact(n) {
                    for (acc, &g) in gb.iter_mut().zip(row) {
                        *acc += g;
                    }
                }
            }
        }
    }
}

impl<S: Scalar> Graph<S> {
    fn matmul_impl(&mut self, a: Var, b: Var, bias: Option<Var>, op: &'static str) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::ShapeMismatch {
                op,
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut c = vec![S::zero(); m * n];
        if let Some(bias) = bias {
            let tbias = self.value(bias);
            if tbias.shape() != [n] {
                return Err(Error::ShapeMismatch {
                    op,
                    lhs: vec![n],
                    rhs: tbias.shape().to_vec(),
                });
            }
            for row in c.chunks_exact_mut(n) {
                row.copy_from_slice(tbias.data());
            }
        }
        let (ta, tb) = (self.value(a), self.value(b));
        gemm_nn(ta.data(), tb.data(), &mut c, m, k, n);
        let out = Tensor::new(&[m, n], c)?;
        let mut inputs = vec![a, b];
        inputs.extend(bias);
        Ok(self.push_op(out, &inputs, MatMulOp { a, b, bias, m, k, n }))
    }

    /// `a[m, k] @ b[k, n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, None, "matmul")
    }

    /// `x[rows, din] @ w[din, dout] + b[dout]`
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        self.matmul_impl(x, w, Some(b), "linear")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::testkit::check_gradients;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, data).unwrap()
    }

    #[test]
    fn linear_identity_weight() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[1, 2], &[1.0, 2.0]));
        let w = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let b = g.constant(t(&[2], &[0.0, 0.0]));
        let y = g.linear(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0]);
    }

    #[test]
    fn linear_weighted_sum_plus_bias() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[1, 2], &[1.0, 1.0]));
        let w = g.constant(t(&[2, 1], &[2.0, 3.0]));
        let b = g.constant(t(&[1], &[1.0]));
        let y = g.linear(x, w, b).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1]);
        assert_eq!(g.value(y).data(), &[6.0]);
    }

    #[test]
    fn linear_shape_error_names_shapes() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[3, 4]));
        let w = g.constant(Tensor::zeros(&[5, 2]));
        let b = g.constant(Tensor::zeros(&[2]));
        let msg = g.linear(x, w, b).unwrap_err().to_string();
        assert!(msg.contains("[3, 4]") && msg.contains("[5, 2]"), "{msg}");
    }

    #[test]
    fn linear_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let mut rng = Rng::new(seed);
            let x = Tensor::new(&[3, 5], rng.uniform_vec(15, -1.0, 1.0)).unwrap();
            let w = Tensor::new(&[5, 4], rng.uniform_vec(20, -1.0, 1.0)).unwrap();
            let b = Tensor::new(&[4], rng.uniform_vec(4, -1.0, 1.0)).unwrap();
            let r = check_gradients(&[x, w, b], |g, v| {
                let y = g.linear(v[0], v[1], v[2])?;
                Ok(g.sum(y))
            })
            .unwrap();
            assert!(r.max_rel_err < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn matmul_gradient_through_nonlinearity() {
        for seed in 0..5 {
            let mut rng = Rng::new(50 + seed);
            let a = Tensor::new(&[4, 3], rng.uniform_vec(12, -1.0, 1.0)).unwrap();
            let b = Tensor::new(&[3, 2], rng.uniform_vec(6, -1.0, 1.0)).unwrap();
            let r = check_gradients(&[a, b], |g, v| {
                let y = g.matmul(v[0], v[1])?;
                let y = g.tanh(y);
                Ok(g.norm(y))
            })
            .unwrap();
            assert!(r.max_rel_err < 1e-6, "{r:?}");
        }
    }
}
