use rustfft::num_complex::Complex;
use rustfft::FftDirection;

use crate::scalar::Scalar;

pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

fn spectrum<S: Scalar>(x: &[S], n: usize) -> Vec<Complex<S>> {
    let mut buf: Vec<Complex<S>> = x.iter().map(|&v| Complex::new(v, S::zero())).collect();
    buf.resize(n, Complex::new(S::zero(), S::zero()));
    S::fft_plan(n, FftDirection::Forward).process(&mut buf);
    buf
}

/// Full linear convolution, length `a.len() + b.len() - 1`.
pub fn convolve<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 {
        let mut out = vec![S::zero(); out_len];
        for (i, &av) in a.iter().enumerate() {
            for (o, &bv) in out[i..i + b.len()].iter_mut().zip(b) {
                *o += av * bv;
            }
        }
        return out;
    }
    let n = next_pow2(out_len);
    let fa = spectrum(a, n);
    let mut prod: Vec<Complex<S>> = spectrum(b, n).iter().zip(&fa).map(|(x, y)| x * y).collect();
    S::fft_plan(n, FftDirection::Inverse).process(&mut prod);
    let scale = S::one() / S::lit(n as f64);
    prod[..out_len].iter().map(|c| c.re * scale).collect()
}

/// `out[t] = sum_j g[t + j] k[j]` for `t in 0..out_len`, with `g` read as
/// zero past its end.
pub fn correlate_valid<S: Scalar>(g: &[S], k: &[S], out_len: usize) -> Vec<S> {
    if k.is_empty() {
        return vec![S::zero(); out_len];
    }
    let rev: Vec<S> = k.iter().rev().copied().collect();
    let full = convolve(g, &rev);
    let off = k.len() - 1;
    (0..out_len)
        .map(|t| full.get(t + off).copied().unwrap_or(S::zero()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn naive(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for i in 0..a.len() {
            for j in 0..b.len() {
                out[i + j] += a[i] * b[j];
            }
        }
        out
    }

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let mut rng = Rng::new(3);
        let a: Vec<f64> = rng.uniform_vec(300, -1.0, 1.0);
        let b: Vec<f64> = rng.uniform_vec(77, -1.0, 1.0);
        let fast = convolve(&a, &b);
        for (x, y) in fast.iter().zip(naive(&a, &b)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn correlation_matches_definition() {
        let mut rng = Rng::new(4);
        let g: Vec<f64> = rng.uniform_vec(90, -1.0, 1.0);
        let k: Vec<f64> = rng.uniform_vec(40, -1.0, 1.0);
        let c = correlate_valid(&g, &k, 90);
        for t in 0..90 {
            let expect: f64 = (0..40).filter(|j| t + j < 90).map(|j| g[t + j] * k[j]).sum();
            assert!((c[t] - expect).abs() < 1e-12);
        }
    }
}
