//! Rational-ratio polyphase resampling with a Kaiser-windowed sinc filter.

use super::AudioBuffer;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Stopband attenuation of the anti-aliasing filter, in dB.
const ATTENUATION_DB: f64 = 90.0;
/// Transition band width as a fraction of the lower Nyquist frequency.
const TRANSITION: f64 = 0.02;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Precomputed filter for one `(source, target)` rate pair.
#[derive(Clone, Debug)]
pub struct Resampler {
    up: usize,
    down: usize,
    centre: usize,
    taps: Vec<f64>,
}

impl Resampler {
    pub fn new(source_rate: u32, target_rate: u32) -> Result<Self> {
        if source_rate == 0 || target_rate == 0 {
            return Err(Error::invalid(
                "resample",
                format!("rates must be positive, got {source_rate} -> {target_rate}"),
            ));
        }
        let g = gcd(source_rate as u64, target_rate as u64);
        let up = (target_rate as u64 / g) as usize;
        let down = (source_rate as u64 / g) as usize;
        let fs_high = source_rate as f64 * up as f64;
        let nyquist = source_rate.min(target_rate) as f64 / 2.0;
        let width = TRANSITION * nyquist;
        let cutoff = nyquist - width / 2.0;

        // Kaiser design formulas for the given attenuation and transition width.
        let beta = 0.1102 * (ATTENUATION_DB - 8.7);
        let dw = std::f64::consts::TAU * width / fs_high;
        let mut n = ((ATTENUATION_DB - 7.95) / (2.285 * dw)).ceil() as usize + 1;
        n |= 1;
        let centre = n / 2;
        let fc = cutoff / fs_high;
        let i0b = bessel_i0(beta);
        let taps = (0..n)
            .map(|i| {
                let m = i as f64 - centre as f64;
                let sinc = if m == 0.0 {
                    2.0 * fc
                } else {
                    (std::f64::consts::TAU * fc * m).sin() / (std::f64::consts::PI * m)
                };
                let r = m / centre as f64;
                let win = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b;
                sinc * win * up as f64
            })
            .collect();
        Ok(Self { up, down, centre, taps })
    }

    pub fn output_len(&self, len: usize) -> usize {
        ((len as f64) * self.up as f64 / self.down as f64).round() as usize
    }

    pub fn process<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let out_len = self.output_len(x.len());
        let (up, c) = (self.up as isize, self.centre as isize);
        let ntaps = self.taps.len() as isize;
        (0..out_len)
            .map(|m| {
                // Output sample m sits at position m * down on the upsampled
                // grid; input k contributes through tap k * up - m * down + c.
                let p = (m * self.down) as isize;
                let k0 = (p - c).div_euclid(up) + isize::from((p - c).rem_euclid(up) != 0);
                let k1 = (p - c + ntaps - 1).div_euclid(up);
                let (k0, k1) = (k0.max(0), k1.min(x.len() as isize - 1));
                let mut acc = 0.0;
                for k in k0..=k1 {
                    acc += self.taps[(k * up - p + c) as usize] * x[k as usize].to_f64_lossy();
                }
                S::lit(acc)
            })
            .collect()
    }
}

/// Resample to `target_rate`; the output has `round(len * target / source)` samples.
pub fn resample<S: Scalar>(x: &AudioBuffer<S>, target_rate: u32) -> Result<AudioBuffer<S>> {
    if x.sample_rate == target_rate {
        return Ok(x.clone());
    }
    let r = Resampler::new(x.sample_rate, target_rate)?;
    Ok(AudioBuffer::new(r.process(&x.samples), target_rate))
}
