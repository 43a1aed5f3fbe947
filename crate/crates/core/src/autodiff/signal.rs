//! Differentiable signal ops: STFT, complex magnitude, row interpolation and
//! normalization, frame-wise FIR filtering with overlap-add, and causal
//! FFT convolution.

use rustfft::num_complex::Complex;
use rustfft::FftDirection;

use super::{Backward, BackwardPass, Graph, Var};
use crate::dsp::{convolve, correlate_valid, hann_periodic, stft_complex, StftConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

struct StftOp {
    x: Var,
    cfg: StftConfig,
    frames: usize,
}

impl<S: Scalar> Backward<S> for StftOp {
    fn backward(&self, _out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        let cfg = self.cfg;
        let n = cfg.fft_size;
        let bins = cfg.bins();
        let pad = cfg.pad();
        let len = pass.value(self.x).len();
        let window: Vec<S> = cfg.window();
        let plan = S::fft_plan(n, FftDirection::Inverse);
        let zero = Complex::new(S::zero(), S::zero());
        let mut buf = vec![zero; n];
        let mut scratch = vec![zero; plan.get_inplace_scratch_len()];
        let mut gpad = vec![S::zero(); len + 2 * pad];
        for f in 0..self.frames {
            // d/dx[n] of sum_k (g_re Re X_k + g_im Im X_k) is
            // w[n] Re(sum_k G_k e^{+2 pi i k n / N}) with G_k = g_re + i g_im.
            buf.fill(zero);
            for k in 0..bins {
                let i = (f * bins + k) * 2;
                buf[k] = Complex::new(gout[i], gout[i + 1]);
            }
            plan.process_with_scratch(&mut buf, &mut scratch);
            let dst = &mut gpad[f * cfg.hop..f * cfg.hop + n];
            for ((d, c), &w) in dst.iter_mut().zip(&buf).zip(&window) {
                *d += c.re * w;
            }
        }
        let gx = pass.grad_mut(self.x);
        for (j, &g) in gpad.iter().enumerate() {
            let src = if j < pad {
                pad - j
            } else if j < pad + len {
                j - pad
            } else {
                len - 2 - (j - pad - len)
            };
            gx[src] += g;
        }
    }
}

struct ComplexMagOp {
    x: Var,
    power: bool,
}

impl<S: Scalar> Backward<S> for ComplexMagOp {
    fn backward(&self, out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        let x = pass.value(self.x).data();
        let mut gx = vec![S::zero(); x.len()];
        for (i, (&g, &m)) in gout.iter().zip(out.data()).enumerate() {
            let (re, im) = (x[2 * i], x[2 * i + 1]);
            if self.power {
                gx[2 * i] = g * (re + re);
                gx[2 * i + 1] = g * (im + im);
            } else if m > S::zero() {
                gx[2 * i] = g * re / m;
                gx[2 * i + 1] = g * im / m;
            }
        }
        pass.add_owned(self.x, gx);
    }
}

/// Source rows and weight for linear interpolation of `rows` frames onto
/// `len` outputs with aligned end points.
pub(crate) fn lerp_plan(rows: usize, len: usize) -> Vec<(usize, usize, f64)> {
    let scale = if len > 1 {
        (rows - 1) as f64 / (len - 1) as f64
    } else {
        0.0
    };
    let pos: Vec<f64> = (0..len).map(|t| t as f64 * scale).collect();
    lerp_plan_at(rows, &pos)
}

/// Source rows and weight for fractional row positions, clamped to the
/// valid range.
pub(crate) fn lerp_plan_at(rows: usize, positions: &[f64]) -> Vec<(usize, usize, f64)> {
    positions
        .iter()
        .map(|&p| {
            let pos = p.clamp(0.0, (rows - 1) as f64);
            let i0 = (pos.floor() as usize).min(rows - 1);
            let i1 = (i0 + 1).min(rows - 1);
            (i0, i1, if i1 == i0 { 0.0 } else { pos - i0 as f64 })
        })
        .collect()
}

struct LerpOp {
    x: Var,
    plan: Vec<(usize, usize, f64)>,
    cols: usize,
}

impl<S: Scalar> Backward<S> for LerpOp {
    fn backward(&self, _out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        let d = self.cols;
        let gx = pass.grad_mut(self.x);
        for (t, &(i0, i1, w)) in self.plan.iter().enumerate() {
            let (w1, w0) = (S::lit(w), S::lit(1.0 - w));
            for c in 0..d {
                let g = gout[t * d + c];
                gx[i0 * d + c] += w0 * g;
                gx[i1 * d + c] += w1 * g;
            }
        }
    }
}

struct NormalizeRowsOp {
    x: Var,
    sums: Vec<f64>,
}

impl<S: Scalar> Backward<S> for NormalizeRowsOp {
    fn backward(&self, out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        let cols = out.shape()[1];
        let mut gx = vec![S::zero(); gout.len()];
        for (r, &s) in self.sums.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            let s = S::lit(s);
            let row = r * cols..(r + 1) * cols;
            let (g, y) = (&gout[row.clone()], &out.data()[row.clone()]);
            let dot: S = g.iter().zip(y).map(|(&a, &b)| a * b).sum();
            for (dst, &gv) in gx[row].iter_mut().zip(g) {
                *dst = (gv - dot) / s;
            }
        }
        pass.add_owned(self.x, gx);
    }
}

/// Geometry of the frame-wise FIR: frame `f` is centred on `f * hop` and
/// spans `frame` samples; filters have taps at lags `-half..=half`.
struct OlaGeom {
    len: usize,
    frames: usize,
    frame: usize,
    hop: usize,
    half: usize,
}

impl OlaGeom {
    fn segment<S: Scalar>(&self, f: usize, signal: &[S], window: &[S]) -> (isize, Vec<S>) {
        let start = (f * self.hop) as isize - (self.frame / 2) as isize;
        let seg = (0..self.frame)
            .map(|i| {
                let j = start + i as isize;
                if j >= 0 && (j as usize) < self.len {
                    signal[j as usize] * window[i]
                } else {
                    S::zero()
                }
            })
            .collect();
        (start, seg)
    }
}

struct OlaFirOp<S> {
    h: Var,
    signal: Vec<S>,
    geo: OlaGeom,
}

impl<S: Scalar> Backward<S> for OlaFirOp<S> {
    fn backward(&self, _out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        let geo = &self.geo;
        let taps = 2 * geo.half + 1;
        let window: Vec<S> = hann_periodic(geo.frame);
        let mut gh = vec![S::zero(); geo.frames * taps];
        for f in 0..geo.frames {
            let (start, seg) = geo.segment(f, &self.signal, &window);
            let row = &mut gh[f * taps..(f + 1) * taps];
            for (i, &s) in seg.iter().enumerate() {
                if s == S::zero() {
                    continue;
                }
                let j = start + i as isize;
                for (l, acc) in row.iter_mut().enumerate() {
                    let t = j + l as isize - geo.half as isize;
                    if t >= 0 && (t as usize) < geo.len {
                        *acc += gout[t as usize] * s;
                    }
                }
            }
        }
        pass.add_owned(self.h, gh);
    }
}

struct CausalConvOp {
    x: Var,
    k: Var,
}

impl<S: Scalar> Backward<S> for CausalConvOp {
    fn backward(&self, out: &Tensor<S>, gout: &[S], pass: &mut BackwardPass<'_, S>) {
        let len = out.len();
        if pass.needs(self.x) {
            let g = correlate_valid(gout, pass.value(self.k).data(), len);
            pass.add_owned(self.x, g);
        }
        if pass.needs(self.k) {
            let klen = pass.value(self.k).len();
            let g = correlate_valid(gout, pass.value(self.x).data(), klen);
            pass.add_owned(self.k, g);
        }
    }
}

impl<S: Scalar> Graph<S> {
    /// Centre-padded STFT of a 1-D signal, `[frames, bins, 2]`.
    pub fn stft(&mut self, x: Var, cfg: StftConfig) -> Result<Var> {
        if self.value(x).rank() != 1 {
            return Err(Error::invalid(
                "stft",
                format!("expected 1-D signal, got {:?}", self.shape(x)),
            ));
        }
        let (frames, data) = stft_complex(self.value(x).data(), cfg)?;
        let out = Tensor::new(&[frames, cfg.bins(), 2], data)?;
        Ok(self.push_op(out, &[x], StftOp { x, cfg, frames }))
    }

    fn complex_mag(&mut self, x: Var, power: bool) -> Result<Var> {
        let t = self.value(x);
        let Some((&2, lead)) = t.shape().split_last() else {
            return Err(Error::invalid(
                "complex_abs",
                format!("trailing axis must be 2, got {:?}", t.shape()),
            ));
        };
        let data: Vec<S> = t
            .data()
            .chunks_exact(2)
            .map(|p| {
                if power {
                    p[0] * p[0] + p[1] * p[1]
                } else {
                    p[0].hypot(p[1])
                }
            })
            .collect();
        let out = Tensor::new(lead, data)?;
        Ok(self.push_op(out, &[x], ComplexMagOp { x, power }))
    }

    /// `|z|` over a trailing `(re, im)` axis; the gradient at `z = 0` is zero.
    pub fn complex_abs(&mut self, x: Var) -> Result<Var> {
        self.complex_mag(x, false)
    }

    /// `|z|^2` over a trailing `(re, im)` axis.
    pub fn complex_power(&mut self, x: Var) -> Result<Var> {
        self.complex_mag(x, true)
    }

    /// Linearly interpolate rows of `x[rows, d]` onto `len` rows, first and
    /// last rows aligned with the first and last inputs.
    pub fn lerp_rows(&mut self, x: Var, len: usize) -> Result<Var> {
        let rows = self.value(x).shape().first().copied().unwrap_or(0);
        if rows == 0 || len == 0 {
            return Err(Error::invalid(
                "lerp_rows",
                format!("cannot interpolate {:?} to {len} rows", self.shape(x)),
            ));
        }
        let plan = lerp_plan(rows, len);
        self.lerp_with_plan(x, plan)
    }

    /// Linearly interpolate rows of `x[rows, d]` at fractional row
    /// positions; positions outside `[0, rows - 1]` are clamped.
    pub fn lerp_rows_at(&mut self, x: Var, positions: &[f64]) -> Result<Var> {
        let rows = self.value(x).shape().first().copied().unwrap_or(0);
        if rows == 0 || positions.is_empty() {
            return Err(Error::invalid(
                "lerp_rows_at",
                format!("cannot interpolate {:?}", self.shape(x)),
            ));
        }
        let plan = lerp_plan_at(rows, positions);
        self.lerp_with_plan(x, plan)
    }

    fn lerp_with_plan(&mut self, x: Var, plan: Vec<(usize, usize, f64)>) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 2 {
            return Err(Error::invalid(
                "lerp_rows",
                format!("expected rank 2, got {:?}", t.shape()),
            ));
        }
        let d = t.shape()[1];
        let len = plan.len();
        let src = t.data();
        let mut data = Vec::with_capacity(len * d);
        for &(i0, i1, w) in &plan {
            let (w1, w0) = (S::lit(w), S::lit(1.0 - w));
            for c in 0..d {
                data.push(w0 * src[i0 * d + c] + w1 * src[i1 * d + c]);
            }
        }
        let out = Tensor::new(&[len, d], data)?;
        Ok(self.push_op(out, &[x], LerpOp { x, plan, cols: d }))
    }

    /// Divide each row of `x[r, c]` by its sum; rows summing to zero stay zero.
    pub fn normalize_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 2 {
            return Err(Error::invalid(
                "normalize_rows",
                format!("expected rank 2, got {:?}", t.shape()),
            ));
        }
        let cols = t.shape()[1];
        let mut sums = Vec::with_capacity(t.shape()[0]);
        let mut data = t.data().to_vec();
        for row in data.chunks_exact_mut(cols.max(1)) {
            let s: S = row.iter().copied().sum();
            sums.push(s.to_f64_lossy());
            if s == S::zero() {
                continue;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let out = Tensor::new(t.shape(), data)?;
        Ok(self.push_op(out, &[x], NormalizeRowsOp { x, sums }))
    }

    /// Time-varying FIR filtering by overlap-add.
    ///
    /// `signal` is cut into Hann-windowed frames of `frame` samples centred
    /// on multiples of `hop`; frame `f` is filtered by row `f` of
    /// `h[frames, 2 * half + 1]` (lags `-half..=half`) and the results are
    /// summed. With `hop = frame / 2` the windows sum to one, so identical
    /// unit-impulse filters reproduce `signal` exactly.
    pub fn overlap_add_fir(&mut self, h: Var, signal: &[S], frame: usize, hop: usize) -> Result<Var> {
        let hs = self.shape(h).to_vec();
        let frames = ola_frames(signal.len(), hop, frame);
        if hs.len() != 2 || hs[1].is_multiple_of(2) || hs[0] != frames {
            return Err(Error::ShapeMismatch {
                op: "overlap_add_fir",
                lhs: vec![frames, hs.get(1).copied().unwrap_or(0)],
                rhs: hs,
            });
        }
        let geo = OlaGeom {
            len: signal.len(),
            frames,
            frame,
            hop,
            half: hs[1] / 2,
        };
        let taps = hs[1];
        let window: Vec<S> = hann_periodic(frame);
        let hv = self.value(h).data();
        let mut y = vec![S::zero(); geo.len];
        for f in 0..frames {
            let (start, seg) = geo.segment(f, signal, &window);
            let row = &hv[f * taps..(f + 1) * taps];
            for (i, &s) in seg.iter().enumerate() {
                if s == S::zero() {
                    continue;
                }
                let j = start + i as isize;
                for (l, &hl) in row.iter().enumerate() {
                    let t = j + l as isize - geo.half as isize;
                    if t >= 0 && (t as usize) < geo.len {
                        y[t as usize] += hl * s;
                    }
                }
            }
        }
        let out = Tensor::from_vec(y);
        Ok(self.push_op(
            out,
            &[h],
            OlaFirOp {
                h,
                signal: signal.to_vec(),
                geo,
            },
        ))
    }

    /// `y[t] = sum_j k[j] x[t - j]` for `t` in `0..len(x)` (FFT-based).
    pub fn causal_convolve(&mut self, x: Var, k: Var) -> Result<Var> {
        if self.value(x).rank() != 1 || self.value(k).rank() != 1 {
            return Err(Error::ShapeMismatch {
                op: "causal_convolve",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(k).to_vec(),
            });
        }
        let len = self.value(x).len();
        let mut full = convolve(self.value(x).data(), self.value(k).data());
        full.resize(len, S::zero());
        let out = Tensor::from_vec(full);
        Ok(self.push_op(out, &[x, k], CausalConvOp { x, k }))
    }
}

/// Frames needed so that every sample of a `len`-sample signal is covered
/// by windows of `frame` samples centred on multiples of `hop`.
pub fn ola_frames(len: usize, hop: usize, frame: usize) -> usize {
    (len + frame / 2 - 1) / hop + 1
}
