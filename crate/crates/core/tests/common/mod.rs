#![allow(dead_code)]

use hnwave_core::dsp::{resample, AudioBuffer, MelConfig};
use hnwave_core::features::{extract_features, MelStats};
use hnwave_core::train::Clip;
use std::f64::consts::TAU;

/// Three-partial tone at 48 kHz with 5 Hz vibrato around `f0`.
pub fn vibrato_tone(samples: usize, f0: f64) -> Vec<f64> {
    let mut phase = 0.0;
    (0..samples)
        .map(|t| {
            let f = f0 * (1.0 + 0.01 * (TAU * 5.0 * t as f64 / 48000.0).sin());
            phase += TAU * f / 48000.0;
            0.3 * (phase.sin() + 0.5 * (2.0 * phase).sin() + 0.25 * (3.0 * phase).sin())
        })
        .collect()
}

/// Analysed clip with clip-normalized mel, as the trainer sees it.
pub fn analysed_clip(samples: Vec<f64>) -> Clip<f64> {
    let audio = AudioBuffer::new(samples, 48000);
    let mut features = extract_features(&audio, &MelConfig::analysis_48k()).unwrap();
    let stats = MelStats::compute([&features.mel]).unwrap();
    features.mel = stats.normalize(&features.mel).unwrap();
    let low = resample(&audio, 8000).unwrap();
    Clip {
        features,
        audio: audio.samples,
        audio_low: low.samples,
    }
}
