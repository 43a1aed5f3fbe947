use serde::{Deserialize, Serialize};

use super::stft::{feature_frames, stft_complex, StftConfig};
use super::AudioBuffer;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Floor added before every logarithm of a magnitude or mel energy.
pub const LOG_FLOOR: f64 = 1e-5;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub stft: StftConfig,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
}

impl MelConfig {
    /// 48 kHz conditioning analysis: 1024-point FFT, 20 ms window, 5 ms hop,
    /// 120 mel bands.
    pub fn analysis_48k() -> Self {
        Self {
            sample_rate: 48000,
            stft: StftConfig::new(1024, 240, 960),
            n_mels: 120,
            f_min: 0.0,
            f_max: 24000.0,
        }
    }

    /// 8 kHz analysis with the same 20 ms / 5 ms framing and 80 bands.
    pub fn analysis_8k() -> Self {
        Self {
            sample_rate: 8000,
            stft: StftConfig::new(256, 40, 160),
            n_mels: 80,
            f_min: 0.0,
            f_max: 4000.0,
        }
    }
}

/// Triangular HTK-scale filters, `[n_mels, bins]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFilterbank<S> {
    pub matrix: Tensor<S>,
    pub f_min: f64,
    pub f_max: f64,
}

impl<S: Scalar> MelFilterbank<S> {
    pub fn new(cfg: &MelConfig) -> Result<Self> {
        let nyquist = cfg.sample_rate as f64 / 2.0;
        if cfg.n_mels == 0 || !(0.0..cfg.f_max).contains(&cfg.f_min) || cfg.f_max > nyquist {
            return Err(Error::invalid(
                "mel_filterbank",
                format!(
                    "need 0 <= f_min < f_max <= {nyquist} and n_mels > 0, got {}..{} with {} bands",
                    cfg.f_min, cfg.f_max, cfg.n_mels
                ),
            ));
        }
        let bins = cfg.stft.bins();
        let bin_hz = cfg.sample_rate as f64 / cfg.stft.fft_size as f64;
        let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let mut m = vec![S::zero(); cfg.n_mels * bins];
        for b in 0..cfg.n_mels {
            let (left, centre, right) = (edges[b], edges[b + 1], edges[b + 2]);
            let row = &mut m[b * bins..(b + 1) * bins];
            let mut any = false;
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                let up = (f - left) / (centre - left);
                let down = (right - f) / (right - centre);
                let v = up.min(down).max(0.0);
                if v > 0.0 {
                    any = true;
                }
                *w = S::lit(v);
            }
            // Low bands narrower than one FFT bin would otherwise be empty;
            // they read the bin nearest their centre instead.
            if !any {
                let k = ((centre / bin_hz).round() as usize).min(bins - 1);
                row[k] = S::one();
            }
        }
        Ok(Self {
            matrix: Tensor::new(&[cfg.n_mels, bins], m)?,
            f_min: cfg.f_min,
            f_max: cfg.f_max,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.matrix.shape()[0]
    }

    /// Project power rows `[frames, bins]` onto the filterbank.
    pub fn apply(&self, power: &[S], frames: usize) -> Vec<S> {
        let (n_mels, bins) = (self.matrix.shape()[0], self.matrix.shape()[1]);
        let mut out = vec![S::zero(); frames * n_mels];
        for f in 0..frames {
            let p = &power[f * bins..(f + 1) * bins];
            for b in 0..n_mels {
                let w = self.matrix.row(b);
                out[f * n_mels + b] = w.iter().zip(p).map(|(&a, &x)| a * x).sum();
            }
        }
        out
    }
}

/// Log-mel features `[B, n_mels]`, `ln(M |X|^2 + 1e-5)`, with `B = len / hop`.
pub fn mel_spectrogram<S: Scalar>(x: &AudioBuffer<S>, cfg: &MelConfig) -> Result<Tensor<S>> {
    if x.sample_rate != cfg.sample_rate {
        return Err(Error::invalid(
            "mel_spectrogram",
            format!("expected {} Hz audio, got {} Hz", cfg.sample_rate, x.sample_rate),
        ));
    }
    let fb = MelFilterbank::new(cfg)?;
    let (_, c) = stft_complex(&x.samples, cfg.stft)?;
    let frames = feature_frames(x.len(), cfg.stft.hop);
    let bins = cfg.stft.bins();
    let power: Vec<S> = c[..frames * bins * 2]
        .chunks_exact(2)
        .map(|p| p[0] * p[0] + p[1] * p[1])
        .collect();
    let floor = S::lit(LOG_FLOOR);
    let out: Vec<S> = fb.apply(&power, frames).into_iter().map(|v| (v + floor).ln()).collect();
    Tensor::new(&[frames, fb.n_mels()], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, sr: u32, n: usize, amp: f64) -> AudioBuffer<f64> {
        let s = (0..n)
            .map(|t| amp * (std::f64::consts::TAU * freq * t as f64 / sr as f64).sin())
            .collect();
        AudioBuffer::new(s, sr)
    }

    #[test]
    fn mel_scale_round_trip() {
        for hz in [0.0, 100.0, 1000.0, 24000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 1000.0).abs() < 0.1);
    }

    #[test]
    fn filterbank_rows_are_nonnegative_and_nonempty() {
        for cfg in [MelConfig::analysis_48k(), MelConfig::analysis_8k()] {
            let fb = MelFilterbank::<f64>::new(&cfg).unwrap();
            assert_eq!(fb.matrix.shape(), &[cfg.n_mels, cfg.stft.bins()]);
            for b in 0..cfg.n_mels {
                let row = fb.matrix.row(b);
                assert!(row.iter().all(|&v| v >= 0.0));
                assert!(row.iter().sum::<f64>() > 0.0, "row {b}");
            }
            let ones = vec![1.0; cfg.stft.bins()];
            assert!(fb.apply(&ones, 1).iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn filter_peaks_ascend() {
        let fb = MelFilterbank::<f64>::new(&MelConfig::analysis_48k()).unwrap();
        let peak = |b: usize| {
            let r = fb.matrix.row(b);
            (0..r.len()).max_by(|&x, &y| r[x].total_cmp(&r[y])).unwrap()
        };
        for b in 1..120 {
            assert!(peak(b) >= peak(b - 1));
        }
    }

    #[test]
    fn silence_gives_log_floor() {
        let x = AudioBuffer::new(vec![0.0f64; 48000], 48000);
        let m = mel_spectrogram(&x, &MelConfig::analysis_48k()).unwrap();
        assert_eq!(m.shape(), &[200, 120]);
        assert!(m.data().iter().all(|&v| v == LOG_FLOOR.ln()));
    }

    #[test]
    fn doubling_amplitude_quadruples_mel_energy() {
        let cfg = MelConfig::analysis_48k();
        let a = mel_spectrogram(&sine(330.0, 48000, 9600, 0.2), &cfg).unwrap();
        let b = mel_spectrogram(&sine(330.0, 48000, 9600, 0.4), &cfg).unwrap();
        let floor = LOG_FLOOR;
        for (&x, &y) in a.data().iter().zip(b.data()) {
            let (lx, ly) = (x.exp() - floor, y.exp() - floor);
            if lx > 1e-6 {
                assert!((ly / lx - 4.0).abs() < 1e-6, "{ly} / {lx}");
            }
        }
    }

    #[test]
    fn rejects_wrong_rate() {
        let x = AudioBuffer::new(vec![0.0f64; 8000], 8000);
        assert!(mel_spectrogram(&x, &MelConfig::analysis_48k()).is_err());
    }
}
