//! Inference: features plus checkpoint to a 48 kHz WAV.

use std::path::Path;
use std::time::Instant;

use hnwave_core::Rng;

use crate::checkpoint;
use crate::error::{CliError, Result};
use crate::featfile::FeatureFile;
use crate::wav::write_wav;

/// Real-time factor of the reference implementation on a V100 GPU, for
/// comparison only.
pub const PUBLISHED_RTF: f64 = 0.026;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthReport {
    pub samples: usize,
    pub seconds: f64,
    /// Synthesis time divided by audio duration.
    pub rtf: f64,
}

pub fn synth(ckpt: &Path, features: &Path, out: &Path, seed: u64) -> Result<SynthReport> {
    let (model, _) = checkpoint::load(ckpt)?;
    let f = FeatureFile::load(features)?;
    let g = &model.config.generator;
    if f.sample_rate != g.sample_rate || f.hop != g.hop || f.features.n_mels() != g.controller.mel_dims {
        return Err(CliError::user(format!(
            "{}: features are {} Hz / hop {} / {} mels, the checkpoint expects {} Hz / hop {} / {} mels",
            features.display(),
            f.sample_rate,
            f.hop,
            f.features.n_mels(),
            g.sample_rate,
            g.hop,
            g.controller.mel_dims
        )));
    }
    let t0 = Instant::now();
    let audio = model.synthesize(&f.features, &mut Rng::new(seed))?;
    let elapsed = t0.elapsed().as_secs_f64();
    let samples: Vec<f32> = audio.iter().map(|&v| v as f32).collect();
    write_wav(out, &samples, g.sample_rate)?;
    let seconds = samples.len() as f64 / g.sample_rate as f64;
    Ok(SynthReport {
        samples: samples.len(),
        seconds,
        rtf: elapsed / seconds.max(f64::MIN_POSITIVE),
    })
}
