//! YIN fundamental-frequency estimation.

use rustfft::num_complex::Complex;
use rustfft::FftDirection;

use super::fft::next_pow2;
use super::stft::feature_frames;
use super::AudioBuffer;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const F0_MIN: f64 = 50.0;
pub const F0_MAX: f64 = 1200.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct YinConfig {
    pub hop: usize,
    pub threshold: f64,
    pub f_min: f64,
    pub f_max: f64,
}

impl YinConfig {
    pub fn new(hop: usize) -> Self {
        Self {
            hop,
            threshold: 0.15,
            f_min: F0_MIN,
            f_max: F0_MAX,
        }
    }
}

struct YinFrame {
    tau_min: usize,
    tau_max: usize,
    window: usize,
    nfft: usize,
}

impl YinFrame {
    fn new(sr: f64, cfg: &YinConfig) -> Self {
        let tau_max = (sr / cfg.f_min).ceil() as usize;
        let tau_min = ((sr / cfg.f_max).floor() as usize).max(2);
        // The integration window spans one longest period, so each frame
        // reads two periods of the lowest admissible pitch.
        let window = tau_max;
        Self {
            tau_min,
            tau_max,
            window,
            nfft: next_pow2(window + tau_max + 1),
        }
    }

    /// Difference function `d(tau)` for `tau in 0..=tau_max`, or `None` for silence.
    fn difference(&self, seg: &[f64]) -> Option<Vec<f64>> {
        let (w, tmax) = (self.window, self.tau_max);
        let e0: f64 = seg[..w].iter().map(|v| v * v).sum();
        if e0 <= 1e-10 * w as f64 {
            return None;
        }
        let mut prefix = vec![0.0; seg.len() + 1];
        for (i, v) in seg.iter().enumerate() {
            prefix[i + 1] = prefix[i] + v * v;
        }
        let zero = Complex::new(0.0, 0.0);
        let mut a: Vec<Complex<f64>> = seg[..w].iter().map(|&v| Complex::new(v, 0.0)).collect();
        a.resize(self.nfft, zero);
        let mut b: Vec<Complex<f64>> = seg.iter().map(|&v| Complex::new(v, 0.0)).collect();
        b.resize(self.nfft, zero);
        let fwd = f64::fft_plan(self.nfft, FftDirection::Forward);
        fwd.process(&mut a);
        fwd.process(&mut b);
        let mut r: Vec<Complex<f64>> = a.iter().zip(&b).map(|(x, y)| x.conj() * y).collect();
        f64::fft_plan(self.nfft, FftDirection::Inverse).process(&mut r);
        let scale = 1.0 / self.nfft as f64;
        Some(
            (0..=tmax)
                .map(|tau| {
                    let et = prefix[tau + w] - prefix[tau];
                    (e0 + et - 2.0 * r[tau].re * scale).max(0.0)
                })
                .collect(),
        )
    }

    fn estimate(&self, seg: &[f64], sr: f64, cfg: &YinConfig) -> f64 {
        let Some(d) = self.difference(seg) else {
            return 0.0;
        };
        // Cumulative mean normalized difference.
        let mut cmnd = vec![1.0; d.len()];
        let mut running = 0.0;
        for tau in 1..d.len() {
            running += d[tau];
            cmnd[tau] = if running > 0.0 {
                d[tau] * tau as f64 / running
            } else {
                1.0
            };
        }
        let mut tau = self.tau_min;
        while tau <= self.tau_max && cmnd[tau] >= cfg.threshold {
            tau += 1;
        }
        if tau > self.tau_max {
            return 0.0;
        }
        while tau < self.tau_max && cmnd[tau + 1] < cmnd[tau] {
            tau += 1;
        }
        let mut refined = tau as f64;
        if tau > 1 && tau < self.tau_max {
            let (a, b, c) = (d[tau - 1], d[tau], d[tau + 1]);
            let den = a - 2.0 * b + c;
            if den > 0.0 {
                let shift = 0.5 * (a - c) / den;
                if shift.abs() < 1.0 {
                    refined += shift;
                }
            }
        }
        let f0 = sr / refined;
        if (cfg.f_min..=cfg.f_max).contains(&f0) {
            f0
        } else {
            0.0
        }
    }
}

/// Per-frame f0 in Hz (0 for unvoiced), frames centred on multiples of `hop`.
pub fn yin_pitch<S: Scalar>(x: &AudioBuffer<S>, cfg: &YinConfig) -> Tensor<S> {
    let sr = x.sample_rate as f64;
    let geo = YinFrame::new(sr, cfg);
    let frames = feature_frames(x.len(), cfg.hop);
    let span = geo.window + geo.tau_max;
    let half = geo.window / 2;
    let mut seg = vec![0.0; span];
    let out: Vec<S> = (0..frames)
        .map(|f| {
            let start = (f * cfg.hop) as isize - half as isize;
            for (i, s) in seg.iter_mut().enumerate() {
                let j = start + i as isize;
                *s = if j >= 0 && (j as usize) < x.len() {
                    x.samples[j as usize].to_f64_lossy()
                } else {
                    0.0
                };
            }
            S::lit(geo.estimate(&seg, sr, cfg))
        })
        .collect();
    Tensor::from_vec(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn sine(freq: f64, sr: u32, n: usize) -> AudioBuffer<f64> {
        let s = (0..n)
            .map(|t| 0.5 * (std::f64::consts::TAU * freq * t as f64 / sr as f64).sin())
            .collect();
        AudioBuffer::new(s, sr)
    }

    #[test]
    fn sine_pitch_within_one_hertz() {
        let f = yin_pitch(&sine(440.0, 48000, 48000), &YinConfig::new(240));
        assert_eq!(f.len(), 200);
        for &v in &f.data()[4..196] {
            assert!((v - 440.0).abs() < 1.0, "{v}");
        }
    }

    #[test]
    fn low_and_high_pitches() {
        for hz in [80.0, 220.0, 1000.0] {
            let f = yin_pitch(&sine(hz, 48000, 24000), &YinConfig::new(240));
            for &v in &f.data()[8..92] {
                assert!((v - hz).abs() / hz < 0.005, "{hz}: {v}");
            }
        }
    }

    #[test]
    fn white_noise_is_mostly_unvoiced() {
        let mut rng = Rng::new(5);
        let x = AudioBuffer::new(rng.uniform_vec::<f64>(48000, -1.0, 1.0), 48000);
        let f = yin_pitch(&x, &YinConfig::new(240));
        let unvoiced = f.data().iter().filter(|&&v| v == 0.0).count();
        assert!(unvoiced as f64 >= 0.9 * f.len() as f64, "{unvoiced}");
    }

    #[test]
    fn silence_is_unvoiced() {
        let f = yin_pitch(&AudioBuffer::new(vec![0.0f64; 9600], 48000), &YinConfig::new(240));
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn estimates_stay_in_range() {
        let mut rng = Rng::new(6);
        let mut s: Vec<f64> = sine(300.0, 48000, 24000).samples;
        for v in s.iter_mut() {
            *v += 0.3 * rng.normal();
        }
        let f = yin_pitch(&AudioBuffer::new(s, 48000), &YinConfig::new(240));
        assert!(f.data().iter().all(|&v| v == 0.0 || (F0_MIN..=F0_MAX).contains(&v)));
    }
}
