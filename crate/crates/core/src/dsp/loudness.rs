use super::stft::{feature_frames, stft_complex, StftConfig};
use super::AudioBuffer;
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Bottom of the loudness range; quieter frames map to 0.
pub const LOUDNESS_FLOOR_DB: f64 = -80.0;

/// IEC 61672 A-weighting in dB (0 dB at 1 kHz).
pub fn a_weighting_db(f: f64) -> f64 {
    if f <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let f2 = f * f;
    let num = 12194.0f64.powi(2) * f2 * f2;
    let den =
        (f2 + 20.6f64.powi(2)) * ((f2 + 107.7f64.powi(2)) * (f2 + 737.9f64.powi(2))).sqrt() * (f2 + 12194.0f64.powi(2));
    20.0 * (num / den).log10() + 2.0
}

/// A-weighted frame power in dB, referenced so a full-scale sine reads 0 dB.
///
/// Frames share the STFT framing of the mel features, `len / hop` of them.
pub fn loudness_db<S: Scalar>(x: &AudioBuffer<S>, cfg: StftConfig) -> Result<Tensor<S>> {
    let (_, c) = stft_complex(&x.samples, cfg)?;
    let frames = feature_frames(x.len(), cfg.hop);
    let bins = cfg.bins();
    let n = cfg.fft_size;
    let bin_hz = x.sample_rate as f64 / n as f64;
    let gains: Vec<f64> = (0..bins)
        .map(|k| {
            let two_sided = if k == 0 || (n.is_multiple_of(2) && k == bins - 1) {
                1.0
            } else {
                2.0
            };
            two_sided * 10f64.powf(a_weighting_db(k as f64 * bin_hz) / 10.0)
        })
        .collect();
    let w: Vec<f64> = cfg.window();
    let wsq: f64 = w.iter().map(|v| v * v).sum();
    let norm = 2.0 / (n as f64 * wsq);
    let out: Vec<S> = (0..frames)
        .map(|f| {
            let row = &c[f * bins * 2..(f + 1) * bins * 2];
            let p: f64 = row
                .chunks_exact(2)
                .zip(&gains)
                .map(|(z, g)| g * (z[0].to_f64_lossy().powi(2) + z[1].to_f64_lossy().powi(2)))
                .sum();
            S::lit(10.0 * (p * norm + 1e-10).log10())
        })
        .collect();
    Tensor::new(&[frames], out)
}

/// Loudness clipped to `[-80, 0]` dB and mapped affinely onto `[0, 1]`.
pub fn loudness<S: Scalar>(x: &AudioBuffer<S>, cfg: StftConfig) -> Result<Tensor<S>> {
    let db = loudness_db(x, cfg)?;
    let lo = S::lit(LOUDNESS_FLOOR_DB);
    Ok(db.map(|v| (v.max(lo).min(S::zero()) - lo) / -lo))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: StftConfig = StftConfig::new(1024, 240, 960);

    fn sine(freq: f64, amp: f64) -> AudioBuffer<f64> {
        let s = (0..24000)
            .map(|t| amp * (std::f64::consts::TAU * freq * t as f64 / 48000.0).sin())
            .collect();
        AudioBuffer::new(s, 48000)
    }

    #[test]
    fn a_weighting_reference_points() {
        assert!(a_weighting_db(1000.0).abs() < 0.01);
        assert!((a_weighting_db(100.0) + 19.1).abs() < 0.1);
        assert!((a_weighting_db(10000.0) + 2.5).abs() < 0.1);
    }

    #[test]
    fn silence_maps_to_zero() {
        let l = loudness(&AudioBuffer::new(vec![0.0f64; 9600], 48000), CFG).unwrap();
        assert_eq!(l.len(), 40);
        assert!(l.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_scale_kilohertz_sine_is_near_zero_db() {
        let db = loudness_db(&sine(1000.0, 1.0), CFG).unwrap();
        for &v in &db.data()[2..db.len() - 2] {
            assert!(v.abs() < 3.0, "{v}");
        }
    }

    #[test]
    fn halving_amplitude_drops_six_db() {
        let a = loudness_db(&sine(440.0, 0.8), CFG).unwrap();
        let b = loudness_db(&sine(440.0, 0.4), CFG).unwrap();
        let expect = 20.0 * 0.5f64.log10();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((y - x - expect).abs() < 1e-3, "{}", y - x);
        }
    }

    #[test]
    fn mapped_range() {
        let l = loudness(&sine(440.0, 0.3), CFG).unwrap();
        assert!(l.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
