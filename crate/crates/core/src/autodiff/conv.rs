//! 1-D convolution, 1-D transposed convolution and 2-D convolution.
//!
//! Cross-correlation convention throughout (kernels are not flipped).
//! Inputs carry no batch axis: `[channels, length]` and
//! `[channels, height, width]`.

use super::{Backward, BackwardPass, Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv1dSpec {
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl Default for Conv1dSpec {
    fn default() -> Self {
        Self {
            stride: 1,
            dilation: 1,
            padding: 0,
        }
    }
}

impl Conv1dSpec {
    /// Stride-1 convolution that preserves length for odd kernels.
    pub fn same(kernel: usize, dilation: usize) -> Self {
        Self {
            stride: 1,
            dilation,
            padding: dilation * (kernel - 1) / 2,
        }
    }
}

/// `floor((L + 2p - d(K-1) - 1) / s) + 1`, or `None` when that is not positive.
pub fn conv1d_out_len(len: usize, kernel: usize, spec: Conv1dSpec) -> Option<usize> {
    let span = spec.dilation * (kernel - 1) + 1;
    let padded = len + 2 * spec.padding;
    if padded < span {
        return None;
    }
    Some((padded - span) / spec.stride + 1)
}

/// `(L - 1) s - 2p + K`, or `None` when that is not positive.
pub fn conv_transpose1d_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if len == 0 {
        return None;
    }
    let full = (len - 1) * stride + kernel;
    (full > 2 * padding).then(|| full - 2 * padding)
}

/// Output index range `[t0, t1)` for which `t * stride + offset` lies in `[0, len)`.
#[inline]
fn valid_range(offset: isize, stride: usize, len: usize, out_len: usize) -> (usize, usize) {
    let s = stride as isize;
    let t0 = if offset >= 0 { 0 } else { (-offset + s - 1) / s };
    let last = len as isize - 1 - offset;
    if last < 0 {
        return (0, 0);
    }
    let t1 = (last / s + 1).min(out_len as isize);
    if t0 >= t1 {
        (0, 0)
    } else {
        (t0 as usize, t1 as usize)
    }
}

#[inline]
fn axpy_strided<S: Scalar>(dst: &mut [S], src: &[S], a: S, t0: usize, t1: usize, stride: usize, offset: isize) {
    if stride == 1 {
        let s0 = (t0 as isize + offset) as usize;
        let src = &src[s0..s0 + (t1 - t0)];
        for (d, &x) in dst[t0..t1].iter_mut().zip(src) {
            *d += a * x;
        }
    } else {
        for t in t0..t1 {
            dst[t] += a * src[(t as isize * stride as isize + offset) as usize];
        }
    }
}

#[inline]
fn dot_strided<S: Scalar>(g: &[S], src: &[S], t0: usize, t1: usize, stride: usize, offset: isize) -> S {
    if stride == 1 {
        let s0 = (t0 as isize + offset) as usize;
        let src = &src[s0..s0 + (t1 - t0)];
        let mut acc = S::zero();
        for (&a, &b) in g[t0..t1].iter().zip(src) {
            acc += a * b;
        }
        acc
    } else {
        let mut acc = S::zero();
        for t in t0..t1 {
            acc += g[t] * src[(t as isize * stride as isize + offset) as usize];
        }
        acc
    }
}

/// Scatter `dst[t * stride + offset] += a * src[t]` over `[t0, t1)`.
#[inline]
fn scatter_strided<S: Scalar>(dst: &mut [S], src: &[S], a: S, t0: usize, t1: usize, stride: usize, offset: isize) {
    if stride == 1 {
        let d0 = (t0 as isize + offset) as usize;
        for (d, &x) in dst[d0..d0 + (t1 - t0)].iter_mut().zip(&src[t0..t1]) {
            *d += a * x;
        }
    } else {
        for t in t0..t1 {
            dst[(t as isize * stride as isize + offset) as usize] += a * src[t];
        }
    }
}

struct Conv1dGeom {
    cin: usize,
    cout: usize,
    k: usize,
    len: usize,
    out_len: usize,
    spec: Conv1dSpec,
}

impl Conv1dGeom {
    #[inline]
    fn offset(&self, k: usize) -> isize {
        (k * self.spec.dilation) as isize - self.spec.padding as isize
    }
}

/// Tile width for the time axis; keeps the working rows in cache.
const TILE: usize = 4096;

fn conv1d_forward<S: Scalar>(x: &[S], w: &[S], bias: Option<&[S]>, geo: &Conv1dGeom) -> Vec<S> {
    let mut out = vec![S::zero(); geo.cout * geo.out_len];
    if let Some(b) = bias {
        for (row, &bv) in out.chunks_exact_mut(geo.out_len).zip(b) {
            row.fill(bv);
        }
    }
    let mut tile_start = 0;
    while tile_start < geo.out_len {
        let tile_end = (tile_start + TILE).min(geo.out_len);
        for o in 0..geo.cout {
            let orow = &mut out[o * geo.out_len..(o + 1) * geo.out_len];
            for i in 0..geo.cin {
                let xrow = &x[i * geo.len..(i + 1) * geo.len];
                let wbase = (o * geo.cin + i) * geo.k;
                for k in 0..geo.k {
                    let wv = w[wbase + k];
                    let off = geo.offset(k);
                    let (t0, t1) = valid_range(off, geo.spec.stride, geo.len, geo.out_len);
                    let (t0, t1) = (t0.max(tile_start), t1.min(tile_end));
                    if t0 < t1 {
                        axpy_strided(orow, xrow, wv, t0, t1, geo.spec.stride, off);
                    }
                }
            }
        }
        tile_start = tile_end;
    }
    out
}

struct Conv1dOp {
    x: Var,
    w: Var,
    bias: Option<Var>,
    geo: Conv1dGeom,
}

impl<S: Scalar> Backward<S> for Conv1dOp {
    fn backward(&self, _out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        let geo = &self.geo;
        if let Some(b) = self.bias {
            if pass.needs(b) {
                let gb: Vec<S> = gout
                    .chunks_exact(geo.out_len)
                    .map(|r| r.iter().copied().sum())
                    .collect();
                pass.add_owned(b, gb);
            }
        }
        if pass.needs(self.w) {
            let x = pass.value(self.x).data();
            let mut gw = vec![S::zero(); geo.cout * geo.cin * geo.k];
            for o in 0..geo.cout {
                let grow = &gout[o * geo.out_len..(o + 1) * geo.out_len];
                for i in 0..geo.cin {
                    let xrow = &x[i * geo.len..(i + 1) * geo.len];
                    for k in 0..geo.k {
                        let off = geo.offset(k);
                        let (t0, t1) = valid_range(off, geo.spec.stride, geo.len, geo.out_len);
                        gw[(o * geo.cin + i) * geo.k + k] = dot_strided(grow, xrow, t0, t1, geo.spec.stride, off);
                    }
                }
            }
            pass.add_owned(self.w, gw);
        }
        if pass.needs(self.x) {
            let w = pass.value(self.w).data();
            let mut gx = vec![S::zero(); geo.cin * geo.len];
            for i in 0..geo.cin {
                let gxrow = &mut gx[i * geo.len..(i + 1) * geo.len];
                for o in 0..geo.cout {
                    let grow = &gout[o * geo.out_len..(o + 1) * geo.out_len];
                    for k in 0..geo.k {
                        let wv = w[(o * geo.cin + i) * geo.k + k];
                        let off = geo.offset(k);
                        let (t0, t1) = valid_range(off, geo.spec.stride, geo.len, geo.out_len);
                        scatter_strided(gxrow, grow, wv, t0, t1, geo.spec.stride, off);
                    }
                }
            }
            pass.add_owned(self.x, gx);
        }
    }
}

struct ConvT1dGeom {
    cin: usize,
    cout: usize,
    k: usize,
    len: usize,
    out_len: usize,
    stride: usize,
    padding: usize,
}

struct ConvTranspose1dOp {
    x: Var,
    w: Var,
    bias: Option<Var>,
    geo: ConvT1dGeom,
}

impl<S: Scalar> Backward<S> for ConvTranspose1dOp {
    fn backward(&self, _out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        let geo = &self.geo;
        if let Some(b) = self.bias {
            if pass.needs(b) {
                let gb: Vec<S> = gout
                    .chunks_exact(geo.out_len)
                    .map(|r| r.iter().copied().sum())
                    .collect();
                pass.add_owned(b, gb);
            }
        }
        // out[o][t*s + k - p] += w[i,o,k] x[i][t]; the adjoint reads gout at
        // the same strided positions.
        let need_w = pass.needs(self.w);
        let need_x = pass.needs(self.x);
        let x = pass.value(self.x).data().to_vec();
        let w = pass.value(self.w).data().to_vec();
        let mut gw = if need_w { vec![S::zero(); w.len()] } else { Vec::new() };
        let mut gx = if need_x { vec![S::zero(); x.len()] } else { Vec::new() };
        for i in 0..geo.cin {
            let xrow = &x[i * geo.len..(i + 1) * geo.len];
            for o in 0..geo.cout {
                let grow = &gout[o * geo.out_len..(o + 1) * geo.out_len];
                for k in 0..geo.k {
                    let off = k as isize - geo.padding as isize;
                    let (t0, t1) = valid_range(off, geo.stride, geo.out_len, geo.len);
                    let widx = (i * geo.cout + o) * geo.k + k;
                    if need_w {
                        gw[widx] += dot_strided(xrow, grow, t0, t1, geo.stride, off);
                    }
                    if need_x {
                        let gxrow = &mut gx[i * geo.len..(i + 1) * geo.len];
                        axpy_strided(gxrow, grow, w[widx], t0, t1, geo.stride, off);
                    }
                }
            }
        }
        if need_w {
            pass.add_owned(self.w, gw);
        }
        if need_x {
            pass.add_owned(self.x, gx);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: (usize, usize),
    pub dilation: (usize, usize),
    pub padding: (usize, usize),
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Self {
            stride: (1, 1),
            dilation: (1, 1),
            padding: (0, 0),
        }
    }
}

struct Conv2dGeom {
    cin: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    spec: Conv2dSpec,
}

impl Conv2dGeom {
    /// Visit every `(output row, input row)` pair for kernel row `kh`.
    #[inline]
    fn rows(&self, kh: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let off = (kh * self.spec.dilation.0) as isize - self.spec.padding.0 as isize;
        let (y0, y1) = valid_range(off, self.spec.stride.0, self.h, self.oh);
        (y0..y1).map(move |y| (y, (y as isize * self.spec.stride.0 as isize + off) as usize))
    }

    #[inline]
    fn col_offset(&self, kw: usize) -> isize {
        (kw * self.spec.dilation.1) as isize - self.spec.padding.1 as isize
    }
}

fn conv2d_forward<S: Scalar>(x: &[S], w: &[S], bias: Option<&[S]>, g: &Conv2dGeom) -> Vec<S> {
    let oplane = g.oh * g.ow;
    let iplane = g.h * g.w;
    let mut out = vec![S::zero(); g.cout * oplane];
    if let Some(b) = bias {
        for (plane, &bv) in out.chunks_exact_mut(oplane).zip(b) {
            plane.fill(bv);
        }
    }
    for o in 0..g.cout {
        for i in 0..g.cin {
            let xplane = &x[i * iplane..(i + 1) * iplane];
            for kh in 0..g.kh {
                for kw in 0..g.kw {
                    let wv = w[((o * g.cin + i) * g.kh + kh) * g.kw + kw];
                    let off = g.col_offset(kw);
                    let (c0, c1) = valid_range(off, g.spec.stride.1, g.w, g.ow);
                    if c0 >= c1 {
                        continue;
                    }
                    for (y, iy) in g.rows(kh) {
                        let orow = &mut out[o * oplane + y * g.ow..o * oplane + (y + 1) * g.ow];
                        let xrow = &xplane[iy * g.w..(iy + 1) * g.w];
                        axpy_strided(orow, xrow, wv, c0, c1, g.spec.stride.1, off);
                    }
                }
            }
        }
    }
    out
}

struct Conv2dOp {
    x: Var,
    w: Var,
    bias: Option<Var>,
    geo: Conv2dGeom,
}

impl<S: Scalar> Backward<S> for Conv2dOp {
    fn backward(&self, _out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        let g = &self.geo;
        let oplane = g.oh * g.ow;
        let iplane = g.h * g.w;
        if let Some(b) = self.bias {
            if pass.needs(b) {
                let gb: Vec<S> = gout.chunks_exact(oplane).map(|r| r.iter().copied().sum()).collect();
                pass.add_owned(b, gb);
            }
        }
        let need_w = pass.needs(self.w);
        let need_x = pass.needs(self.x);
        let x = pass.value(self.x).data();
        let w = pass.value(self.w).data();
        let mut gw = if need_w { vec![S::zero(); w.len()] } else { Vec::new() };
        let mut gx = if need_x { vec![S::zero(); x.len()] } else { Vec::new() };
        for o in 0..g.cout {
            for i in 0..g.cin {
                let xplane = &x[i * iplane..(i + 1) * iplane];
                for kh in 0..g.kh {
                    for kw in 0..g.kw {
                        let widx = ((o * g.cin + i) * g.kh + kh) * g.kw + kw;
                        let off = g.col_offset(kw);
                        let (c0, c1) = valid_range(off, g.spec.stride.1, g.w, g.ow);
                        if c0 >= c1 {
                            continue;
                        }
                        let mut acc = S::zero();
                        for (y, iy) in g.rows(kh) {
                            let grow = &gout[o * oplane + y * g.ow..o * oplane + (y + 1) * g.ow];
                            if need_w {
                                let xrow = &xplane[iy * g.w..(iy + 1) * g.w];
                                acc += dot_strided(grow, xrow, c0, c1, g.spec.stride.1, off);
                            }
                            if need_x {
                                let gxrow = &mut gx[i * iplane + iy * g.w..i * iplane + (iy + 1) * g.w];
                                scatter_strided(gxrow, grow, w[widx], c0, c1, g.spec.stride.1, off);
                            }
                        }
                        if need_w {
                            gw[widx] += acc;
                        }
                    }
                }
            }
        }
        if need_w {
            pass.add_owned(self.w, gw);
        }
        if need_x {
            pass.add_owned(self.x, gx);
        }
    }
}

impl<S: Scalar> Graph<S> {
    fn check_bias(&self, bias: Option<Var>, cout: usize, op: &'static str) -> Result<()> {
        if let Some(b) = bias {
            let s = self.shape(b);
            if s != [cout] {
                return Err(Error::ShapeMismatch {
                    op,
                    lhs: vec![cout],
                    rhs: s.to_vec(),
                });
            }
        }
        Ok(())
    }

    /// `x[C_in, L] * w[C_out, C_in, K] (+ bias[C_out]) -> [C_out, L_out]`
    pub fn conv1d(&mut self, x: Var, w: Var, bias: Option<Var>, spec: Conv1dSpec) -> Result<Var> {
        if spec.stride == 0 || spec.dilation == 0 {
            return Err(Error::invalid("conv1d", "stride and dilation must be >= 1"));
        }
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 2 || ws.len() != 3 || ws[1] != xs[0] || ws[2] == 0 {
            return Err(Error::ShapeMismatch {
                op: "conv1d",
                lhs: xs.to_vec(),
                rhs: ws.to_vec(),
            });
        }
        let (cin, len, cout, k) = (xs[0], xs[1], ws[0], ws[2]);
        self.check_bias(bias, cout, "conv1d")?;
        let out_len = conv1d_out_len(len, k, spec).ok_or(Error::InputTooShort {
            op: "conv1d",
            len,
            need: spec.dilation * (k - 1) + 1 - (2 * spec.padding).min(spec.dilation * (k - 1)),
        })?;
        let geo = Conv1dGeom {
            cin,
            cout,
            k,
            len,
            out_len,
            spec,
        };
        let data = conv1d_forward(
            self.value(x).data(),
            self.value(w).data(),
            bias.map(|b| self.value(b).data()),
            &geo,
        );
        let out = Tensor::new(&[cout, out_len], data)?;
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        Ok(self.push_op(out, &inputs, Conv1dOp { x, w, bias, geo }))
    }

    /// `x[C_in, L] (*T) w[C_in, C_out, K] (+ bias[C_out]) -> [C_out, (L-1)s - 2p + K]`
    pub fn conv_transpose1d(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        if stride == 0 {
            return Err(Error::invalid("conv_transpose1d", "stride must be >= 1"));
        }
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 2 || ws.len() != 3 || ws[0] != xs[0] || ws[2] == 0 {
            return Err(Error::ShapeMismatch {
                op: "conv_transpose1d",
                lhs: xs.to_vec(),
                rhs: ws.to_vec(),
            });
        }
        let (cin, len, cout, k) = (xs[0], xs[1], ws[1], ws[2]);
        if len == 0 {
            return Err(Error::InputTooShort {
                op: "conv_transpose1d",
                len,
                need: 1,
            });
        }
        self.check_bias(bias, cout, "conv_transpose1d")?;
        let out_len = conv_transpose1d_out_len(len, k, stride, padding)
            .ok_or_else(|| Error::invalid("conv_transpose1d", "padding removes the whole output"))?;
        let geo = ConvT1dGeom {
            cin,
            cout,
            k,
            len,
            out_len,
            stride,
            padding,
        };
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut data = vec![S::zero(); cout * out_len];
        if let Some(b) = bias {
            for (row, &bv) in data.chunks_exact_mut(out_len).zip(self.value(b).data()) {
                row.fill(bv);
            }
        }
        for i in 0..cin {
            let xrow = &xv[i * len..(i + 1) * len];
            for o in 0..cout {
                let orow = &mut data[o * out_len..(o + 1) * out_len];
                for k in 0..geo.k {
                    let off = k as isize - padding as isize;
                    let (t0, t1) = valid_range(off, stride, out_len, len);
                    scatter_strided(orow, xrow, wv[(i * cout + o) * geo.k + k], t0, t1, stride, off);
                }
            }
        }
        let out = Tensor::new(&[cout, out_len], data)?;
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        Ok(self.push_op(out, &inputs, ConvTranspose1dOp { x, w, bias, geo }))
    }

    /// `x[C_in, H, W] * w[C_out, C_in, KH, KW] (+ bias) -> [C_out, H_out, W_out]`
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, spec: Conv2dSpec) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 3 || ws.len() != 4 || ws[1] != xs[0] || ws[2] == 0 || ws[3] == 0 {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: xs.to_vec(),
                rhs: ws.to_vec(),
            });
        }
        if spec.stride.0 == 0 || spec.stride.1 == 0 || spec.dilation.0 == 0 || spec.dilation.1 == 0 {
            return Err(Error::invalid("conv2d", "stride and dilation must be >= 1"));
        }
        let (cin, h, wd, cout, kh, kw) = (xs[0], xs[1], xs[2], ws[0], ws[2], ws[3]);
        self.check_bias(bias, cout, "conv2d")?;
        let along = |len, k, s, d, p| {
            conv1d_out_len(
                len,
                k,
                Conv1dSpec {
                    stride: s,
                    dilation: d,
                    padding: p,
                },
            )
        };
        let too_short = || Error::InputTooShort {
            op: "conv2d",
            len: h.min(wd),
            need: kh.max(kw),
        };
        let oh = along(h, kh, spec.stride.0, spec.dilation.0, spec.padding.0).ok_or_else(too_short)?;
        let ow = along(wd, kw, spec.stride.1, spec.dilation.1, spec.padding.1).ok_or_else(too_short)?;
        let geo = Conv2dGeom {
            cin,
            cout,
            kh,
            kw,
            h,
            w: wd,
            oh,
            ow,
            spec,
        };
        let data = conv2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            bias.map(|b| self.value(b).data()),
            &geo,
        );
        let out = Tensor::new(&[cout, oh, ow], data)?;
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        Ok(self.push_op(out, &inputs, Conv2dOp { x, w, bias, geo }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::testkit::check_gradients;
    use proptest::prelude::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, data).unwrap()
    }

    fn rand_t(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape, rng.uniform_vec(n, -1.0, 1.0)).unwrap()
    }

    /// Direct definition, used as an independent oracle.
    fn conv1d_naive(x: &Tensor<f64>, w: &Tensor<f64>, spec: Conv1dSpec) -> Vec<f64> {
        let (cin, len) = (x.shape()[0], x.shape()[1]);
        let (cout, k) = (w.shape()[0], w.shape()[2]);
        let out_len = conv1d_out_len(len, k, spec).unwrap();
        let mut out = vec![0.0; cout * out_len];
        for o in 0..cout {
            for t in 0..out_len {
                let mut acc = 0.0;
                for i in 0..cin {
                    for kk in 0..k {
                        let pos = (t * spec.stride + kk * spec.dilation) as isize - spec.padding as isize;
                        if pos >= 0 && (pos as usize) < len {
                            acc += w.data()[(o * cin + i) * k + kk] * x.data()[i * len + pos as usize];
                        }
                    }
                }
                out[o * out_len + t] = acc;
            }
        }
        out
    }

    #[test]
    fn conv1d_identity_and_adjacent_sums() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[1, 3], &[1.0, 2.0, 3.0]));
        let k = g.constant(t(&[1, 1, 1], &[1.0]));
        let y = g.conv1d(x, k, None, Conv1dSpec::default()).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0]);

        let x = g.constant(t(&[1, 4], &[1.0, 2.0, 3.0, 4.0]));
        let k = g.constant(t(&[1, 1, 2], &[1.0, 1.0]));
        let y = g.conv1d(x, k, None, Conv1dSpec::default()).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 5.0, 7.0]);
    }

    #[test]
    fn conv1d_too_short_input() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[1, 3]));
        let k = g.constant(Tensor::zeros(&[1, 1, 5]));
        let err = g.conv1d(x, k, None, Conv1dSpec::default()).unwrap_err();
        assert!(matches!(err, Error::InputTooShort { .. }));
    }

    #[test]
    fn conv1d_matches_naive_definition() {
        let mut rng = Rng::new(9);
        for &(stride, dilation, padding) in &[(1, 1, 0), (2, 1, 1), (3, 2, 4), (1, 5, 7)] {
            let spec = Conv1dSpec {
                stride,
                dilation,
                padding,
            };
            let x = rand_t(&mut rng, &[3, 29]);
            let w = rand_t(&mut rng, &[4, 3, 3]);
            let mut g = Graph::<f64>::new();
            let (xv, wv) = (g.constant(x.clone()), g.constant(w.clone()));
            let y = g.conv1d(xv, wv, None, spec).unwrap();
            let expect = conv1d_naive(&x, &w, spec);
            for (a, b) in g.value(y).data().iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_transpose_examples() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[1, 1], &[1.0]));
        let k = g.constant(t(&[1, 1, 3], &[1.0, 1.0, 1.0]));
        let y = g.conv_transpose1d(x, k, None, 2, 0).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 1.0, 1.0]);

        let x = g.constant(Tensor::zeros(&[1, 100]));
        let k = g.constant(Tensor::zeros(&[1, 1, 12]));
        let y = g.conv_transpose1d(x, k, None, 6, 0).unwrap();
        assert_eq!(g.shape(y), &[1, 606]);

        let x = g.constant(Tensor::zeros(&[1, 0]));
        assert!(g.conv_transpose1d(x, k, None, 6, 0).is_err());
    }

    #[test]
    fn conv_transpose_is_adjoint_of_conv() {
        for seed in 0..5 {
            let mut rng = Rng::new(seed);
            let (cin, cout, k, stride, len) = (3, 2, 5, 3, 40);
            let spec = Conv1dSpec {
                stride,
                dilation: 1,
                padding: 0,
            };
            let x = rand_t(&mut rng, &[cin, len]);
            let w = rand_t(&mut rng, &[cout, cin, k]);
            let out_len = conv1d_out_len(len, k, spec).unwrap();
            let y = rand_t(&mut rng, &[cout, out_len]);
            let mut g = Graph::<f64>::new();
            let (xv, wv, yv) = (g.constant(x.clone()), g.constant(w.clone()), g.constant(y.clone()));
            let cx = g.conv1d(xv, wv, None, spec).unwrap();
            // The conv kernel [C_out, C_in, K] read as [C_in', C_out', K] with
            // C_in' = C_out maps the output space back onto the input space.
            let cty = g.conv_transpose1d(yv, wv, None, stride, 0).unwrap();
            let lhs: f64 = g.value(cx).data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
            let back = g.value(cty);
            // Samples past the last full window never reach the conv output,
            // and the transposed conv stops short of them.
            let blen = back.shape()[1];
            let rhs: f64 = (0..cin)
                .map(|i| {
                    (0..len.min(blen))
                        .map(|t| x.data()[i * len + t] * back.data()[i * blen + t])
                        .sum::<f64>()
                })
                .sum();
            assert!((lhs - rhs).abs() / lhs.abs().max(1e-12) < 1e-10, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn conv1d_gradients_with_dilation() {
        for seed in 0..5 {
            let mut rng = Rng::new(20 + seed);
            let x = rand_t(&mut rng, &[2, 17]);
            let w = rand_t(&mut rng, &[3, 2, 3]);
            let b = rand_t(&mut rng, &[3]);
            let spec = Conv1dSpec {
                stride: 1,
                dilation: 3,
                padding: 2,
            };
            let r = check_gradients(&[x, w, b], |g, v| {
                let y = g.conv1d(v[0], v[1], Some(v[2]), spec)?;
                let y = g.tanh(y);
                Ok(g.sum(y))
            })
            .unwrap();
            assert!(r.max_rel_err < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn conv1d_strided_gradients() {
        for seed in 0..5 {
            let mut rng = Rng::new(40 + seed);
            let x = rand_t(&mut rng, &[2, 23]);
            let w = rand_t(&mut rng, &[2, 2, 4]);
            let spec = Conv1dSpec {
                stride: 2,
                dilation: 1,
                padding: 1,
            };
            let r = check_gradients(&[x, w], |g, v| {
                let y = g.conv1d(v[0], v[1], None, spec)?;
                let y = g.square(y);
                Ok(g.sum(y))
            })
            .unwrap();
            assert!(r.max_rel_err < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn conv_transpose_gradients() {
        for seed in 0..5 {
            let mut rng = Rng::new(60 + seed);
            let x = rand_t(&mut rng, &[2, 7]);
            let w = rand_t(&mut rng, &[2, 3, 6]);
            let b = rand_t(&mut rng, &[3]);
            let r = check_gradients(&[x, w, b], |g, v| {
                let y = g.conv_transpose1d(v[0], v[1], Some(v[2]), 3, 1)?;
                let y = g.sigmoid(y);
                Ok(g.sum(y))
            })
            .unwrap();
            assert!(r.max_rel_err < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn conv2d_gradients() {
        for seed in 0..5 {
            let mut rng = Rng::new(80 + seed);
            let x = rand_t(&mut rng, &[2, 9, 11]);
            let w = rand_t(&mut rng, &[3, 2, 3, 4]);
            let b = rand_t(&mut rng, &[3]);
            let spec = Conv2dSpec {
                stride: (1, 2),
                dilation: (2, 1),
                padding: (2, 1),
            };
            let r = check_gradients(&[x, w, b], |g, v| {
                let y = g.conv2d(v[0], v[1], Some(v[2]), spec)?;
                let y = g.tanh(y);
                Ok(g.sum(y))
            })
            .unwrap();
            assert!(r.max_rel_err < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn conv2d_kernel_width_one_is_columnwise_conv1d() {
        let mut rng = Rng::new(5);
        let x = rand_t(&mut rng, &[1, 12, 3]);
        let w = rand_t(&mut rng, &[2, 1, 5, 1]);
        let spec = Conv2dSpec {
            stride: (3, 1),
            dilation: (1, 1),
            padding: (2, 0),
        };
        let mut g = Graph::<f64>::new();
        let (xv, wv) = (g.constant(x.clone()), g.constant(w.clone()));
        let y = g.conv2d(xv, wv, None, spec).unwrap();
        let y = g.value(y).clone();
        for col in 0..3 {
            let column: Vec<f64> = (0..12).map(|r| x.data()[r * 3 + col]).collect();
            let xc = Tensor::new(&[1, 12], column).unwrap();
            let wc = w.clone().reshape(&[2, 1, 5]).unwrap();
            let c1 = conv1d_naive(
                &xc,
                &wc,
                Conv1dSpec {
                    stride: 3,
                    dilation: 1,
                    padding: 2,
                },
            );
            let oh = y.shape()[1];
            for o in 0..2 {
                for r in 0..oh {
                    let a = y.data()[(o * oh + r) * 3 + col];
                    assert!((a - c1[o * oh + r]).abs() < 1e-12);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn conv1d_output_length_formula(
            len in 1usize..60, k in 1usize..8, stride in 1usize..5,
            dilation in 1usize..4, padding in 0usize..6,
        ) {
            let spec = Conv1dSpec { stride, dilation, padding };
            let expect = (len as i64 + 2 * padding as i64 - dilation as i64 * (k as i64 - 1) - 1)
                .div_euclid(stride as i64) + 1;
            let mut g = Graph::<f64>::new();
            let x = g.constant(Tensor::zeros(&[1, len]));
            let w = g.constant(Tensor::zeros(&[1, 1, k]));
            match g.conv1d(x, w, None, spec) {
                Ok(y) => prop_assert_eq!(g.shape(y)[1] as i64, expect),
                Err(_) => prop_assert!(expect <= 0 || (len + 2 * padding) < dilation * (k - 1) + 1),
            }
        }

        #[test]
        fn conv_transpose_output_length_formula(len in 1usize..60, k in 1usize..12, stride in 1usize..7) {
            let mut g = Graph::<f64>::new();
            let x = g.constant(Tensor::zeros(&[1, len]));
            let w = g.constant(Tensor::zeros(&[1, 1, k]));
            let y = g.conv_transpose1d(x, w, None, stride, 0).unwrap();
            prop_assert_eq!(g.shape(y)[1], (len - 1) * stride + k);
        }
    }
}
