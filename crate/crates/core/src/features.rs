//! Frame-rate conditioning features and their extraction from 48 kHz audio.

use crate::dsp::{loudness, mel_spectrogram, yin_pitch, AudioBuffer, MelConfig, YinConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-frame conditioning at a 5 ms hop: log-mel `[B, n_mels]`, pitch in
/// Hz `[B]` (0 = unvoiced) and loudness in `[0, 1]` `[B]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFrames<S> {
    pub mel: Tensor<S>,
    pub f0: Tensor<S>,
    pub loudness: Tensor<S>,
}

impl<S: Scalar> FeatureFrames<S> {
    pub fn new(mel: Tensor<S>, f0: Tensor<S>, loudness: Tensor<S>) -> Result<Self> {
        let f = Self { mel, f0, loudness };
        f.validate()?;
        Ok(f)
    }

    pub fn num_frames(&self) -> usize {
        self.f0.len()
    }

    pub fn n_mels(&self) -> usize {
        self.mel.shape().get(1).copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.f0.len();
        if self.mel.rank() != 2 || self.mel.shape()[0] != b || self.f0.rank() != 1 || self.loudness.shape() != [b] {
            return Err(Error::invalid(
                "features",
                format!(
                    "frame counts differ: mel {:?}, f0 {:?}, loudness {:?}",
                    self.mel.shape(),
                    self.f0.shape(),
                    self.loudness.shape()
                ),
            ));
        }
        Ok(())
    }

    /// Frames `start..start + len`.
    pub fn crop(&self, start: usize, len: usize) -> Result<Self> {
        let b = self.num_frames();
        if start + len > b || len == 0 {
            return Err(Error::invalid(
                "features",
                format!("crop {start}+{len} outside {b} frames"),
            ));
        }
        let m = self.n_mels();
        Self::new(
            Tensor::new(&[len, m], self.mel.data()[start * m..(start + len) * m].to_vec())?,
            Tensor::from_vec(self.f0.data()[start..start + len].to_vec()),
            Tensor::from_vec(self.loudness.data()[start..start + len].to_vec()),
        )
    }

    pub fn f0_hz(&self) -> Vec<f64> {
        self.f0.to_f64_vec()
    }

    pub fn cast<T: Scalar>(&self) -> FeatureFrames<T> {
        FeatureFrames {
            mel: self.mel.cast(),
            f0: self.f0.cast(),
            loudness: self.loudness.cast(),
        }
    }
}

/// Raw (unnormalized) features of a 48 kHz clip: `len / 240` frames.
pub fn extract_features<S: Scalar>(audio: &AudioBuffer<S>, mel: &MelConfig) -> Result<FeatureFrames<S>> {
    let m = mel_spectrogram(audio, mel)?;
    let f0 = yin_pitch(audio, &YinConfig::new(mel.stft.hop));
    let loud = loudness(audio, mel.stft)?;
    FeatureFrames::new(m, f0, loud)
}

/// Per-dimension mel mean and standard deviation over a corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct MelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Dimensions whose spread is below this are only centred, not scaled.
pub const STD_FLOOR: f64 = 1e-5;

impl MelStats {
    /// Statistics over every frame of every clip.
    pub fn compute<'a, S: Scalar + 'a>(mels: impl IntoIterator<Item = &'a Tensor<S>>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        let rows = |t: &'a Tensor<S>| -> Vec<Vec<f64>> {
            let d = t.shape().get(1).copied().unwrap_or(0).max(1);
            t.to_f64_vec().chunks(d).map(<[f64]>::to_vec).collect()
        };
        let mut all = Vec::new();
        for t in mels {
            all.extend(rows(t));
        }
        for r in &all {
            if sum.is_empty() {
                sum = vec![0.0; r.len()];
                sq = vec![0.0; r.len()];
            }
            if r.len() != sum.len() {
                return Err(Error::invalid("mel_stats", "clips have different mel sizes"));
            }
            for (s, &v) in sum.iter_mut().zip(r) {
                *s += v;
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::invalid("mel_stats", "no frames"));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        // Two-pass variance for accuracy.
        for r in &all {
            for ((q, &v), &m) in sq.iter_mut().zip(r).zip(&mean) {
                *q += (v - m) * (v - m);
            }
        }
        let std = sq.iter().map(|q| (q / count as f64).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn identity(dims: usize) -> Self {
        Self {
            mean: vec![0.0; dims],
            std: vec![1.0; dims],
        }
    }

    fn scale(&self, i: usize) -> f64 {
        if self.std[i] < STD_FLOOR {
            1.0
        } else {
            self.std[i]
        }
    }

    pub fn normalize<S: Scalar>(&self, mel: &Tensor<S>) -> Result<Tensor<S>> {
        self.apply(mel, |v, i| (v - self.mean[i]) / self.scale(i))
    }

    pub fn denormalize<S: Scalar>(&self, mel: &Tensor<S>) -> Result<Tensor<S>> {
        self.apply(mel, |v, i| v * self.scale(i) + self.mean[i])
    }

    fn apply<S: Scalar>(&self, mel: &Tensor<S>, f: impl Fn(f64, usize) -> f64) -> Result<Tensor<S>> {
        let d = self.mean.len();
        if mel.rank() != 2 || mel.shape()[1] != d {
            return Err(Error::invalid(
                "mel_stats",
                format!("mel {:?} vs {d} stats", mel.shape()),
            ));
        }
        let data = mel
            .data()
            .iter()
            .enumerate()
            .map(|(k, &v)| S::lit(f(v.to_f64_lossy(), k % d)))
            .collect();
        Tensor::new(mel.shape(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn one_second_gives_200_frames() {
        let x: Vec<f64> = (0..48000)
            .map(|t| 0.5 * (std::f64::consts::TAU * 220.0 * t as f64 / 48000.0).sin())
            .collect();
        let f = extract_features(&AudioBuffer::new(x, 48000), &MelConfig::analysis_48k()).unwrap();
        assert_eq!(f.num_frames(), 200);
        assert_eq!(f.mel.shape(), &[200, 120]);
        let voiced: Vec<f64> = f.f0_hz().into_iter().filter(|&v| v > 0.0).collect();
        assert!(voiced.len() > 180);
        assert!(voiced.iter().all(|v| (v - 220.0).abs() < 2.0));
    }

    #[test]
    fn normalization_is_zero_mean_unit_std() {
        let mut rng = Rng::new(1);
        let clips: Vec<Tensor<f64>> = (0..3)
            .map(|i| {
                let n = 50 + 10 * i;
                let data = rng
                    .normal_vec::<f64>(n * 4)
                    .into_iter()
                    .map(|v| 3.0 * v - 2.0)
                    .collect();
                Tensor::new(&[n, 4], data).unwrap()
            })
            .collect();
        let stats = MelStats::compute(&clips).unwrap();
        let normed: Vec<Tensor<f64>> = clips.iter().map(|c| stats.normalize(c).unwrap()).collect();
        let check = MelStats::compute(&normed).unwrap();
        assert!(check.mean.iter().all(|m| m.abs() < 1e-6));
        assert!(check.std.iter().all(|s| (s - 1.0).abs() < 1e-6));
        let back = stats.denormalize(&normed[1]).unwrap();
        let err = back
            .data()
            .iter()
            .zip(clips[1].data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn crop_and_mismatch() {
        let f = FeatureFrames::new(
            Tensor::<f64>::zeros(&[10, 3]),
            Tensor::zeros(&[10]),
            Tensor::zeros(&[10]),
        )
        .unwrap();
        assert_eq!(f.crop(2, 5).unwrap().num_frames(), 5);
        assert!(f.crop(8, 5).is_err());
        assert!(FeatureFrames::new(
            Tensor::<f64>::zeros(&[10, 3]),
            Tensor::zeros(&[9]),
            Tensor::zeros(&[10])
        )
        .is_err());
    }
}
