//! WAV reading (16/24/32-bit PCM or 32-bit float, first channel) and
//! 32-bit float writing.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{CliError, Result};

/// First channel of a WAV file as samples in `[-1, 1]`, with its rate.
pub fn read_wav(path: &Path) -> Result<(Vec<f32>, u32)> {
    let reader = WavReader::open(path).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let bad = |e: hound::Error| CliError::user(format!("{}: {e}", path.display()));
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(bad)?,
        (SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| (v as f64 * scale) as f32))
                .collect::<std::result::Result<_, _>>()
                .map_err(bad)?
        }
        (fmt, bits) => {
            return Err(CliError::user(format!(
                "{}: unsupported sample format {fmt:?} {bits}-bit",
                path.display()
            )))
        }
    };
    let mono: Vec<f32> = interleaved
        .iter()
        .step_by(channels)
        .map(|v| v.clamp(-1.0, 1.0))
        .collect();
    if mono.iter().any(|v| !v.is_finite()) {
        return Err(CliError::user(format!("{}: non-finite samples", path.display())));
    }
    Ok((mono, spec.sample_rate))
}

/// Mono 32-bit float WAV. Reading it back is bit-exact.
pub fn write_wav(path: &Path, samples: &[f32], sample_rate: u32) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let fail = |e: hound::Error| CliError::user(format!("{}: {e}", path.display()));
    let mut w = WavWriter::create(path, spec).map_err(fail)?;
    for &s in samples {
        w.write_sample(s).map_err(fail)?;
    }
    w.finalize().map_err(fail)
}
