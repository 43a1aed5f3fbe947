use rustfft::num_complex::Complex;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use super::window::centered_window;
use super::AudioBuffer;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// STFT framing: `(fft_size, hop, win_length)` with a Hann window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub win_length: usize,
}

impl StftConfig {
    pub const fn new(fft_size: usize, hop: usize, win_length: usize) -> Self {
        Self {
            fft_size,
            hop,
            win_length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size == 0 || self.hop == 0 || self.win_length == 0 {
            return Err(Error::invalid("stft", "sizes must be positive"));
        }
        if self.win_length > self.fft_size || self.hop > self.win_length {
            return Err(Error::invalid(
                "stft",
                format!(
                    "need hop <= win_length <= fft_size, got hop {} win {} fft {}",
                    self.hop, self.win_length, self.fft_size
                ),
            ));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frame count under centre padding: `floor(len / hop) + 1`.
    pub fn frames(&self, len: usize) -> usize {
        len / self.hop + 1
    }

    pub fn pad(&self) -> usize {
        self.fft_size / 2
    }

    pub fn window<S: Scalar>(&self) -> Vec<S> {
        centered_window(self.win_length, self.fft_size)
    }

    /// Shortest signal this configuration accepts.
    pub fn min_len(&self) -> usize {
        self.win_length.max(self.pad() + 1)
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        self.validate()?;
        if len < self.min_len() {
            return Err(Error::InputTooShort {
                op: "stft",
                len,
                need: self.min_len(),
            });
        }
        Ok(())
    }
}

/// Number of conditioning frames for a clip: one per full hop.
///
/// The STFT itself yields one extra frame centred on the final sample; the
/// conditioning features drop it so that a clip of `B` hops has exactly
/// `B` frames and `B * hop` samples.
pub fn feature_frames(len: usize, hop: usize) -> usize {
    len / hop
}

/// Mirror `pad` samples at both ends, excluding the edge sample itself.
pub fn reflect_pad<S: Scalar>(x: &[S], pad: usize) -> Result<Vec<S>> {
    if pad >= x.len() && pad > 0 {
        return Err(Error::InputTooShort {
            op: "reflect_pad",
            len: x.len(),
            need: pad + 1,
        });
    }
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    out.extend((0..pad).map(|i| x[n - 2 - i]));
    Ok(out)
}

/// Complex STFT laid out `[frames, bins, 2]` (real, imaginary).
pub fn stft_complex<S: Scalar>(x: &[S], cfg: StftConfig) -> Result<(usize, Vec<S>)> {
    cfg.check_len(x.len())?;
    let n = cfg.fft_size;
    let bins = cfg.bins();
    let frames = cfg.frames(x.len());
    let padded = reflect_pad(x, cfg.pad())?;
    let window: Vec<S> = cfg.window();
    let plan = S::fft_plan(n, FftDirection::Forward);
    let mut buf = vec![Complex::new(S::zero(), S::zero()); n];
    let mut scratch = vec![Complex::new(S::zero(), S::zero()); plan.get_inplace_scratch_len()];
    let mut out = Vec::with_capacity(frames * bins * 2);
    for f in 0..frames {
        let seg = &padded[f * cfg.hop..f * cfg.hop + n];
        for ((b, &s), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new(s * w, S::zero());
        }
        plan.process_with_scratch(&mut buf, &mut scratch);
        for c in &buf[..bins] {
            out.push(c.re);
            out.push(c.im);
        }
    }
    Ok((frames, out))
}

/// Linear magnitude spectrogram `[frames, bins]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram<S> {
    pub frames: Tensor<S>,
    pub config: StftConfig,
    pub sample_rate: u32,
}

impl<S: Scalar> Spectrogram<S> {
    pub fn num_frames(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn bins(&self) -> usize {
        self.frames.shape()[1]
    }
}

pub fn stft_magnitude<S: Scalar>(x: &AudioBuffer<S>, cfg: StftConfig) -> Result<Spectrogram<S>> {
    let (frames, c) = stft_complex(&x.samples, cfg)?;
    let mags: Vec<S> = c.chunks_exact(2).map(|p| p[0].hypot(p[1])).collect();
    Ok(Spectrogram {
        frames: Tensor::new(&[frames, cfg.bins()], mags)?,
        config: cfg,
        sample_rate: x.sample_rate,
    })
}
