//! Parameterized layers. Each layer stores only [`ParamId`]s and
//! hyperparameters; values come from a [`Binder`] at forward time.
//!
//! Initialization is uniform in `±1/sqrt(fan_in)` unless stated otherwise.

use super::params::{Binder, ParamBuilder, ParamId};
use crate::autodiff::{Conv1dSpec, Conv2dSpec, Graph, GruWeights, Var};
use crate::error::Result;
use crate::scalar::Scalar;

fn fan_in_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in.max(1) as f64).sqrt()
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    pub fn new<S: Scalar>(p: &mut ParamBuilder<'_, S>, din: usize, dout: usize) -> Self {
        let bound = fan_in_bound(din);
        Self {
            w: p.uniform("w", &[din, dout], bound),
            b: p.uniform("b", &[dout], bound),
            din,
            dout,
        }
    }

    /// `x[rows, din] -> [rows, dout]`
    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, p: &mut Binder<'_, S>, x: Var) -> Result<Var> {
        let (w, b) = (p.var(g, self.w), p.var(g, self.b));
        g.linear(x, w, b)
    }
}

/// Stack of linear layers, each followed by a leaky ReLU.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub slope: f64,
}

impl Mlp {
    pub fn new<S: Scalar>(p: &mut ParamBuilder<'_, S>, din: usize, hidden: usize, depth: usize, slope: f64) -> Self {
        let layers = (0..depth)
            .map(|i| Linear::new(&mut p.sub(&format!("l{i}")), if i == 0 { din } else { hidden }, hidden))
            .collect();
        Self { layers, slope }
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, p: &mut Binder<'_, S>, mut x: Var) -> Result<Var> {
        for l in &self.layers {
            x = l.forward(g, p, x)?;
            x = g.leaky_relu(x, self.slope);
        }
        Ok(x)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.dout)
    }
}

#[derive(Clone, Debug)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub spec: Conv1dSpec,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
}

impl Conv1d {
    pub fn new<S: Scalar>(
        p: &mut ParamBuilder<'_, S>,
        cin: usize,
        cout: usize,
        kernel: usize,
        spec: Conv1dSpec,
    ) -> Self {
        let bound = fan_in_bound(cin * kernel);
        Self {
            w: p.uniform("w", &[cout, cin, kernel], bound),
            b: p.uniform("b", &[cout], bound),
            spec,
            cin,
            cout,
            kernel,
        }
    }

    /// Same as [`new`](Self::new) with all weights and biases zero.
    pub fn zeros<S: Scalar>(
        p: &mut ParamBuilder<'_, S>,
        cin: usize,
        cout: usize,
        kernel: usize,
        spec: Conv1dSpec,
    ) -> Self {
        Self {
            w: p.constant("w", &[cout, cin, kernel], 0.0),
            b: p.constant("b", &[cout], 0.0),
            spec,
            cin,
            cout,
            kernel,
        }
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, p: &mut Binder<'_, S>, x: Var) -> Result<Var> {
        let (w, b) = (p.var(g, self.w), p.var(g, self.b));
        g.conv1d(x, w, Some(b), self.spec)
    }
}

#[derive(Clone, Debug)]
pub struct ConvTranspose1d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub padding: usize,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
}

impl ConvTranspose1d {
    pub fn new<S: Scalar>(
        p: &mut ParamBuilder<'_, S>,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        // Each output sample receives about kernel / stride taps per input channel.
        let bound = fan_in_bound(cin * kernel.div_ceil(stride));
        Self {
            w: p.uniform("w", &[cin, cout, kernel], bound),
            b: p.uniform("b", &[cout], bound),
            stride,
            padding,
            cin,
            cout,
            kernel,
        }
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, p: &mut Binder<'_, S>, x: Var) -> Result<Var> {
        let (w, b) = (p.var(g, self.w), p.var(g, self.b));
        g.conv_transpose1d(x, w, Some(b), self.stride, self.padding)
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub spec: Conv2dSpec,
    pub cin: usize,
    pub cout: usize,
    pub kernel: (usize, usize),
}

impl Conv2d {
    pub fn new<S: Scalar>(
        p: &mut ParamBuilder<'_, S>,
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        spec: Conv2dSpec,
    ) -> Self {
        let bound = fan_in_bound(cin * kernel.0 * kernel.1);
        Self {
            w: p.uniform("w", &[cout, cin, kernel.0, kernel.1], bound),
            b: p.uniform("b", &[cout], bound),
            spec,
            cin,
            cout,
            kernel,
        }
    }

    pub fn zeros<S: Scalar>(
        p: &mut ParamBuilder<'_, S>,
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        spec: Conv2dSpec,
    ) -> Self {
        Self {
            w: p.constant("w", &[cout, cin, kernel.0, kernel.1], 0.0),
            b: p.constant("b", &[cout], 0.0),
            spec,
            cin,
            cout,
            kernel,
        }
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, p: &mut Binder<'_, S>, x: Var) -> Result<Var> {
        let (w, b) = (p.var(g, self.w), p.var(g, self.b));
        g.conv2d(x, w, Some(b), self.spec)
    }
}

/// Single-layer GRU with a zero initial state.
#[derive(Clone, Debug)]
pub struct Gru {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub hidden: usize,
}

impl Gru {
    pub fn new<S: Scalar>(p: &mut ParamBuilder<'_, S>, din: usize, hidden: usize) -> Self {
        let bound = fan_in_bound(hidden);
        Self {
            w_ih: p.uniform("w_ih", &[din, 3 * hidden], bound),
            w_hh: p.uniform("w_hh", &[hidden, 3 * hidden], bound),
            b_ih: p.uniform("b_ih", &[3 * hidden], bound),
            b_hh: p.uniform("b_hh", &[3 * hidden], bound),
            hidden,
        }
    }

    /// `x[steps, din] -> [steps, hidden]`
    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, p: &mut Binder<'_, S>, x: Var) -> Result<Var> {
        let wts = GruWeights {
            w_ih: p.var(g, self.w_ih),
            w_hh: p.var(g, self.w_hh),
            b_ih: p.var(g, self.b_ih),
            b_hh: p.var(g, self.b_hh),
        };
        let h0 = g.constant(crate::tensor::Tensor::zeros(&[self.hidden]));
        g.gru(x, h0, wts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamStore;
    use crate::rng::Rng;
    use crate::tensor::Tensor;

    #[test]
    fn layer_shapes() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = Rng::new(1);
        let mut b = ParamBuilder::new(&mut store, &mut rng);
        let mlp = Mlp::new(&mut b.sub("mlp"), 3, 8, 3, 0.1);
        let conv = Conv1d::new(&mut b.sub("c"), 2, 4, 3, Conv1dSpec::same(3, 1));
        let up = ConvTranspose1d::new(&mut b.sub("u"), 4, 2, 12, 6, 3);
        let gru = Gru::new(&mut b.sub("g"), 8, 5);
        let c2 = Conv2d::new(&mut b.sub("c2"), 1, 3, (3, 9), Conv2dSpec::default());

        let mut g = Graph::new();
        let mut p = Binder::new(&store, true);
        let x = g.constant(Tensor::zeros(&[7, 3]));
        let h = mlp.forward(&mut g, &mut p, x).unwrap();
        assert_eq!(g.shape(h), &[7, 8]);
        let r = gru.forward(&mut g, &mut p, h).unwrap();
        assert_eq!(g.shape(r), &[7, 5]);
        let s = g.constant(Tensor::zeros(&[2, 50]));
        let y = conv.forward(&mut g, &mut p, s).unwrap();
        assert_eq!(g.shape(y), &[4, 50]);
        let z = up.forward(&mut g, &mut p, y).unwrap();
        assert_eq!(g.shape(z), &[2, 300]);
        let im = g.constant(Tensor::zeros(&[1, 10, 20]));
        let o = c2.forward(&mut g, &mut p, im).unwrap();
        assert_eq!(g.shape(o), &[3, 8, 12]);
    }
}
