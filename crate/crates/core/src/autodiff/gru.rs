//! Fused single-layer GRU over a sequence, with backpropagation through time.
//!
//! Gate layout in the packed `3H` axis is `[reset, update, candidate]`:
//!
//! ```text
//! r = sigmoid(x W_r + b_ir + h W_hr + b_hr)
//! z = sigmoid(x W_z + b_iz + h W_hz + b_hz)
//! n = tanh(x W_n + b_in + r * (h W_hn + b_hn))
//! h' = (1 - z) * n + z * h
//! ```

use super::linalg::{gemm_nn, gemm_nt, gemm_tn};
use super::{Backward, BackwardPass, Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GruWeights {
    /// `[din, 3H]`
    pub w_ih: Var,
    /// `[H, 3H]`
    pub w_hh: Var,
    /// `[3H]`
    pub b_ih: Var,
    /// `[3H]`
    pub b_hh: Var,
}

#[inline]
fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

struct GruOp<S> {
    x: Var,
    h0: Var,
    wts: GruWeights,
    steps: usize,
    hidden: usize,
    /// Per-step gate activations, each `[steps, H]`.
    r: Vec<S>,
    z: Vec<S>,
    n: Vec<S>,
    /// `h W_hn + b_hn` per step.
    ghn: Vec<S>,
}

impl<S: Scalar> Backward<S> for GruOp<S> {
    fn backward(&self, out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        let (b, h) = (self.steps, self.hidden);
        let h3 = 3 * h;
        let hs = out.data();
        let h0 = pass.value(self.h0).data().to_vec();
        let w_hh = pass.value(self.wts.w_hh).data().to_vec();
        let prev = |t: usize| -> &[S] {
            if t == 0 {
                &h0
            } else {
                &hs[(t - 1) * h..t * h]
            }
        };

        // Pre-activation gradients for the input and hidden projections.
        let mut dgi = vec![S::zero(); b * h3];
        let mut dgh = vec![S::zero(); b * h3];
        let mut dh_next = vec![S::zero(); h];
        let one = S::one();
        for t in (0..b).rev() {
            let hp = prev(t);
            let rows = t * h..(t + 1) * h;
            let (r, z, n, ghn) = (
                &self.r[rows.clone()],
                &self.z[rows.clone()],
                &self.n[rows.clone()],
                &self.ghn[rows],
            );
            let gi = &mut dgi[t * h3..(t + 1) * h3];
            let gh = &mut dgh[t * h3..(t + 1) * h3];
            for j in 0..h {
                let dh = gout[t * h + j] + dh_next[j];
                let dn = dh * (one - z[j]);
                let dz = dh * (hp[j] - n[j]);
                let da_n = dn * (one - n[j] * n[j]);
                let dr = da_n * ghn[j];
                let da_r = dr * r[j] * (one - r[j]);
                let da_z = dz * z[j] * (one - z[j]);
                gi[j] = da_r;
                gi[h + j] = da_z;
                gi[2 * h + j] = da_n;
                gh[j] = da_r;
                gh[h + j] = da_z;
                gh[2 * h + j] = da_n * r[j];
                dh_next[j] = dh * z[j];
            }
            gemm_nt(gh, &w_hh, &mut dh_next, 1, h, h3);
        }

        if pass.needs(self.h0) {
            pass.add_owned(self.h0, dh_next);
        }
        if pass.needs(self.wts.w_hh) {
            let mut hprev = Vec::with_capacity(b * h);
            for t in 0..b {
                hprev.extend_from_slice(prev(t));
            }
            let mut gw = vec![S::zero(); h * h3];
            gemm_tn(&hprev, &dgh, &mut gw, b, h, h3);
            pass.add_owned(self.wts.w_hh, gw);
        }
        for (bias, grads) in [(self.wts.b_ih, &dgi), (self.wts.b_hh, &dgh)] {
            if pass.needs(bias) {
                let gb = pass.grad_mut(bias);
                for row in grads.chunks_exact(h3) {
                    for (acc, &g) in gb.iter_mut().zip(row) {
                        *acc += g;
                    }
                }
            }
        }
        let din = pass.value(self.x).shape()[1];
        if pass.needs(self.wts.w_ih) {
            let mut gw = vec![S::zero(); din * h3];
            gemm_tn(pass.value(self.x).data(), &dgi, &mut gw, b, din, h3);
            pass.add_owned(self.wts.w_ih, gw);
        }
        if pass.needs(self.x) {
            let mut gx = vec![S::zero(); b * din];
            gemm_nt(&dgi, pass.value(self.wts.w_ih).data(), &mut gx, b, din, h3);
            pass.add_owned(self.x, gx);
        }
    }
}

impl<S: Scalar> Graph<S> {
    /// Run the GRU over `x[steps, din]` from initial state `h0[H]`,
    /// returning every hidden state `[steps, H]`.
    pub fn gru(&mut self, x: Var, h0: Var, wts: GruWeights) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let h = self.value(h0).len();
        let h3 = 3 * h;
        let mismatch = |lhs: &[usize], rhs: &[usize]| Error::ShapeMismatch {
            op: "gru",
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        };
        if xs.len() != 2 || self.shape(wts.w_ih) != [xs[1], h3] {
            return Err(mismatch(&xs, self.shape(wts.w_ih)));
        }
        if self.shape(wts.w_hh) != [h, h3] {
            return Err(mismatch(&[h, h3], self.shape(wts.w_hh)));
        }
        for bias in [wts.b_ih, wts.b_hh] {
            if self.shape(bias) != [h3] {
                return Err(mismatch(&[h3], self.shape(bias)));
            }
        }
        let (b, din) = (xs[0], xs[1]);

        let mut gi = vec![S::zero(); b * h3];
        for row in gi.chunks_exact_mut(h3) {
            row.copy_from_slice(self.value(wts.b_ih).data());
        }
        gemm_nn(self.value(x).data(), self.value(wts.w_ih).data(), &mut gi, b, din, h3);

        let w_hh = self.value(wts.w_hh).data();
        let b_hh = self.value(wts.b_hh).data();
        let mut hcur = self.value(h0).data().to_vec();
        let mut out = Vec::with_capacity(b * h);
        let (mut rs, mut zs, mut ns, mut ghns) = (
            Vec::with_capacity(b * h),
            Vec::with_capacity(b * h),
            Vec::with_capacity(b * h),
            Vec::with_capacity(b * h),
        );
        let mut gh = vec![S::zero(); h3];
        for t in 0..b {
            gh.copy_from_slice(b_hh);
            gemm_nn(&hcur, w_hh, &mut gh, 1, h, h3);
            let gi_t = &gi[t * h3..(t + 1) * h3];
            for j in 0..h {
                let r = sigmoid(gi_t[j] + gh[j]);
                let z = sigmoid(gi_t[h + j] + gh[h + j]);
                let ghn = gh[2 * h + j];
                let n = (gi_t[2 * h + j] + r * ghn).tanh();
                hcur[j] = (S::one() - z) * n + z * hcur[j];
                rs.push(r);
                zs.push(z);
                ns.push(n);
                ghns.push(ghn);
            }
            out.extend_from_slice(&hcur);
        }
        let value = Tensor::new(&[b, h], out)?;
        let inputs = [x, h0, wts.w_ih, wts.w_hh, wts.b_ih, wts.b_hh];
        Ok(self.push_op(
            value,
            &inputs,
            GruOp {
                x,
                h0,
                wts,
                steps: b,
                hidden: h,
                r: rs,
                z: zs,
                n: ns,
                ghn: ghns,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::testkit::check_gradients;

    fn rand_t(rng: &mut Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape, rng.uniform_vec(n, -scale, scale)).unwrap()
    }

    fn bind(v: &[Var]) -> GruWeights {
        GruWeights {
            w_ih: v[2],
            w_hh: v[3],
            b_ih: v[4],
            b_hh: v[5],
        }
    }

    #[test]
    fn zero_weights_stay_at_zero() {
        let mut g = Graph::<f64>::new();
        let mut rng = Rng::new(1);
        let x = g.constant(rand_t(&mut rng, &[5, 4], 1.0));
        let h0 = g.constant(Tensor::zeros(&[3]));
        let wts = GruWeights {
            w_ih: g.constant(Tensor::zeros(&[4, 9])),
            w_hh: g.constant(Tensor::zeros(&[3, 9])),
            b_ih: g.constant(Tensor::zeros(&[9])),
            b_hh: g.constant(Tensor::zeros(&[9])),
        };
        let y = g.gru(x, h0, wts).unwrap();
        assert_eq!(g.shape(y), &[5, 3]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_equals_cell_formula() {
        let mut rng = Rng::new(2);
        let (din, h) = (2, 3);
        let x = rand_t(&mut rng, &[1, din], 1.0);
        let h0 = rand_t(&mut rng, &[h], 1.0);
        let w_ih = rand_t(&mut rng, &[din, 3 * h], 1.0);
        let w_hh = rand_t(&mut rng, &[h, 3 * h], 1.0);
        let b_ih = rand_t(&mut rng, &[3 * h], 1.0);
        let b_hh = rand_t(&mut rng, &[3 * h], 1.0);
        let mut g = Graph::<f64>::new();
        let vars: Vec<Var> = [&x, &h0, &w_ih, &w_hh, &b_ih, &b_hh]
            .iter()
            .map(|t| g.constant((*t).clone()))
            .collect();
        let wts = bind(&vars);
        let y = g.gru(vars[0], vars[1], wts).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let proj = |j: usize| -> (f64, f64) {
            let xi: f64 = (0..din).map(|i| x.data()[i] * w_ih.data()[i * 3 * h + j]).sum::<f64>() + b_ih.data()[j];
            let hi: f64 = (0..h).map(|i| h0.data()[i] * w_hh.data()[i * 3 * h + j]).sum::<f64>() + b_hh.data()[j];
            (xi, hi)
        };
        for j in 0..h {
            let (xr, hr) = proj(j);
            let (xz, hz) = proj(h + j);
            let (xn, hn) = proj(2 * h + j);
            let r = sig(xr + hr);
            let z = sig(xz + hz);
            let n = (xn + r * hn).tanh();
            let expect = (1.0 - z) * n + z * h0.data()[j];
            assert!((g.value(y).data()[j] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn gradients_through_time() {
        for seed in 0..5 {
            let mut rng = Rng::new(100 + seed);
            let (b, din, h) = (4, 2, 3);
            let inputs = vec![
                rand_t(&mut rng, &[b, din], 1.0),
                rand_t(&mut rng, &[h], 0.5),
                rand_t(&mut rng, &[din, 3 * h], 0.8),
                rand_t(&mut rng, &[h, 3 * h], 0.8),
                rand_t(&mut rng, &[3 * h], 0.5),
                rand_t(&mut rng, &[3 * h], 0.5),
            ];
            let probe = rand_t(&mut rng, &[b, h], 1.0);
            let r = check_gradients(&inputs, |g, v| {
                let wts = bind(v);
                let y = g.gru(v[0], v[1], wts)?;
                let p = g.constant(probe.clone());
                let yp = g.mul(y, p)?;
                Ok(g.sum(yp))
            })
            .unwrap();
            assert!(r.max_rel_err < 1e-5, "{r:?}");
        }
    }
}
