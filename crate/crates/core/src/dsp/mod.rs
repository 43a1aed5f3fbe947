//! Non-learned signal processing: windows, FFT helpers, STFT, mel
//! filterbanks, loudness, pitch, resampling and band splitting.
//!
//! Everything here is a pure function of its inputs. The differentiable
//! versions used inside training graphs live in [`crate::autodiff`] and
//! share the forward kernels defined here.

mod bands;
mod fft;
mod loudness;
mod mel;
mod pitch;
mod resample;
mod stft;
mod window;

pub use bands::{band_ranges, band_split};
pub use fft::{convolve, correlate_valid, next_pow2};
pub use loudness::{a_weighting_db, loudness, loudness_db, LOUDNESS_FLOOR_DB};
pub use mel::{hz_to_mel, mel_spectrogram, mel_to_hz, MelConfig, MelFilterbank, LOG_FLOOR};
pub use pitch::{yin_pitch, YinConfig, F0_MAX, F0_MIN};
pub use resample::{resample, Resampler};
pub use stft::{feature_frames, reflect_pad, stft_complex, stft_magnitude, Spectrogram, StftConfig};
pub use window::{centered_window, hann_periodic};

use crate::scalar::Scalar;

/// Mono samples with their sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioBuffer<S> {
    pub samples: Vec<S>,
    pub sample_rate: u32,
}

impl<S: Scalar> AudioBuffer<S> {
    pub fn new(samples: Vec<S>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let ss: f64 = self.samples.iter().map(|&x| x.to_f64_lossy().powi(2)).sum();
        (ss / self.samples.len() as f64).sqrt()
    }
}
