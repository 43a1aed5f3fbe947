//! Synthetic singing-like material with known pitch, for training and
//! evaluation tests.

use std::f64::consts::TAU;

use crate::rng::Rng;

/// Sung-vowel stand-in at 48 kHz: a tilted harmonic source through a chest
/// resonance and three vowel formants, 5.5 Hz vibrato, a portamento from 220 Hz to 262 Hz
/// halfway through, breath noise, and 100 ms of near-silence at both ends.
/// Returns the audio and the true pitch (0 in the silent margins) at
/// `hop`-sample frame centres.
pub fn sung_vowel(samples: usize, hop: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let sr = 48000.0;
    let margin = (0.1 * sr) as usize;
    let mid = samples as f64 / 2.0;
    let pitch_at = |t: usize| -> f64 {
        if t < margin || t + margin >= samples {
            return 0.0;
        }
        let x = (t as f64 - mid) / (0.08 * sr);
        let glide = 1.0 / (1.0 + (-x).exp());
        let base = 220.0 * (262.0f64 / 220.0).powf(glide);
        base * (1.0 + 0.015 * (TAU * 5.5 * t as f64 / sr).sin())
    };
    let formant = |f: f64| -> f64 {
        [
            (250.0, 200.0, 1.0),
            (700.0, 130.0, 0.6),
            (1220.0, 150.0, 0.3),
            (2600.0, 250.0, 0.15),
        ]
        .iter()
        .map(|&(c, w, a): &(f64, f64, f64)| a * (-((f - c) / w).powi(2)).exp())
        .sum::<f64>()
            + 0.05
    };
    let mut rng = Rng::new(seed);
    let mut phase = 0.0;
    let ramp = (0.05 * sr) as usize;
    let mut out = Vec::with_capacity(samples);
    for t in 0..samples {
        let f0 = pitch_at(t);
        let mut v = 0.0;
        if f0 > 0.0 {
            phase = (phase + TAU * f0 / sr) % TAU;
            let mut k = 1.0;
            while k * f0 < 0.45 * sr {
                v += formant(k * f0) * (k * phase).sin() / k.powf(0.7);
                k += 1.0;
            }
            let from_edge = (t - margin).min(samples - margin - 1 - t) as f64;
            v *= (from_edge / ramp as f64).min(1.0);
        }
        out.push(0.25 * v + 0.002 * rng.normal());
    }
    let frames = samples / hop;
    let f0 = (0..frames)
        .map(|b| {
            // Frames touching a silent margin are unvoiced.
            let lo = (b * hop).saturating_sub(hop);
            let hi = (b * hop + hop).min(samples - 1);
            if pitch_at(lo) == 0.0 || pitch_at(hi) == 0.0 {
                0.0
            } else {
                pitch_at(b * hop)
            }
        })
        .collect();
    (out, f0)
}
