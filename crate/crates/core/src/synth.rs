//! Differentiable harmonic-plus-noise synthesizer at the low (8 kHz) rate.
//!
//! Frame-rate controls are interpolated to samples, rendered by an additive
//! oscillator bank and a bank of time-varying zero-phase noise filters, and
//! optionally passed through a learned reverb. The pre-reverb harmonic and
//! noise streams are returned separately because the bridge network
//! consumes them as two channels.

use std::f64::consts::TAU;

use crate::autodiff::{ola_frames, Graph, Var};
use crate::config::SynthConfig;
use crate::error::{Error, Result};
use crate::nn::{Binder, ParamBuilder, ParamId};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Frame-rate controls, all post-activation.
#[derive(Clone, Copy, Debug)]
pub struct HnControls {
    /// `[B, 1]` global harmonic amplitude.
    pub harm_amp: Var,
    /// `[B, K]` unnormalized harmonic distribution.
    pub harm_dist: Var,
    /// `[B, bins]` noise filter magnitudes.
    pub noise_mags: Var,
}

impl HnControls {
    /// Split the harmonic head output `[B, 1 + K]` into amplitude and distribution.
    pub fn from_heads<S: Scalar>(g: &mut Graph<S>, harm: Var, noise: Var) -> Result<Self> {
        let k = g.shape(harm).get(1).copied().unwrap_or(0);
        if k < 2 {
            return Err(Error::invalid(
                "controls",
                format!("harmonic head shape {:?}", g.shape(harm)),
            ));
        }
        Ok(Self {
            harm_amp: g.narrow(harm, 1, 0, 1)?,
            harm_dist: g.narrow(harm, 1, 1, k - 1)?,
            noise_mags: noise,
        })
    }
}

/// Upsample `frames[B, D]` to `[len, D]` by linear interpolation with
/// aligned end points, enforcing `len == hop * B`.
pub fn interpolate_controls<S: Scalar>(g: &mut Graph<S>, frames: Var, len: usize, hop: usize) -> Result<Var> {
    let b = g.shape(frames).first().copied().unwrap_or(0);
    if len != hop * b {
        return Err(Error::Length(format!(
            "{len} samples for {b} frames, expected {}",
            hop * b
        )));
    }
    if b < 2 {
        return Err(Error::invalid(
            "interpolate_controls",
            format!("need at least 2 frames, got {b}"),
        ));
    }
    g.lerp_rows(frames, len)
}

/// Per-sample pitch. Neighbouring voiced frames are interpolated; across a
/// voiced/unvoiced boundary the nearer frame wins, so unvoiced regions stay
/// exactly zero.
pub fn samplewise_f0(f0: &[f64], len: usize) -> Vec<f64> {
    if f0.is_empty() || len == 0 {
        return vec![0.0; len];
    }
    let scale = if len > 1 {
        (f0.len() - 1) as f64 / (len - 1) as f64
    } else {
        0.0
    };
    (0..len)
        .map(|t| {
            let pos = t as f64 * scale;
            let i0 = (pos.floor() as usize).min(f0.len() - 1);
            let i1 = (i0 + 1).min(f0.len() - 1);
            let w = pos - i0 as f64;
            let (a, b) = (f0[i0].max(0.0), f0[i1].max(0.0));
            if a > 0.0 && b > 0.0 {
                a + (b - a) * w
            } else if w < 0.5 {
                a
            } else {
                b
            }
        })
        .collect()
}

/// Running oscillator phase of the fundamental: `phase[0] = start`,
/// `phase[t + 1] = phase[t] + 2π f0[t] / sr (mod 2π)`. Returns the phase
/// of every sample and the phase that the next sample would start with.
pub fn fundamental_phase(f0: &[f64], sample_rate: f64, start: f64) -> (Vec<f64>, f64) {
    let mut phase = start.rem_euclid(TAU);
    let mut out = Vec::with_capacity(f0.len());
    for &f in f0 {
        out.push(phase);
        phase = (phase + TAU * f / sample_rate).rem_euclid(TAU);
    }
    (out, phase)
}

/// Harmonics closer than this to Nyquist are dropped along with those above it.
pub const NYQUIST_GUARD_HZ: f64 = 20.0;

/// `sin(k φ[t])` and the anti-aliasing mask (`k f0[t] < sr / 2 - guard`
/// and voiced) for harmonics `k = 1..=harmonics`, both `[T, harmonics]`.
pub fn harmonic_tables<S: Scalar>(
    f0: &[f64],
    phase: &[f64],
    harmonics: usize,
    sample_rate: f64,
) -> (Tensor<S>, Tensor<S>) {
    let len = f0.len();
    let limit = sample_rate / 2.0 - NYQUIST_GUARD_HZ;
    let mut sines = Vec::with_capacity(len * harmonics);
    let mut mask = Vec::with_capacity(len * harmonics);
    for (&f, &ph) in f0.iter().zip(phase) {
        for k in 1..=harmonics {
            let kf = k as f64;
            let audible = f > 0.0 && kf * f < limit;
            sines.push(S::lit((kf * ph).rem_euclid(TAU).sin()));
            mask.push(if audible { S::one() } else { S::zero() });
        }
    }
    let shape = [len, harmonics];
    (
        Tensor::new(&shape, sines).expect("table shape"),
        Tensor::new(&shape, mask).expect("table shape"),
    )
}

/// Additive oscillator bank: `y[t] = A[t] Σ_k c_k[t] sin(k φ[t])`, with the
/// distribution masked above Nyquist and renormalized per sample.
/// `amp[T, 1]` and `dist[T, K]` are sample-rate controls.
pub fn harmonic_oscillator<S: Scalar>(
    g: &mut Graph<S>,
    amp: Var,
    dist: Var,
    f0: &[f64],
    sample_rate: f64,
    start_phase: f64,
) -> Result<(Var, f64)> {
    let ds = g.shape(dist).to_vec();
    if ds.len() != 2 || ds[0] != f0.len() || g.shape(amp) != [ds[0], 1] {
        return Err(Error::ShapeMismatch {
            op: "harmonic_oscillator",
            lhs: ds,
            rhs: g.shape(amp).to_vec(),
        });
    }
    let (phase, end) = fundamental_phase(f0, sample_rate, start_phase);
    let (sines, mask) = harmonic_tables::<S>(f0, &phase, ds[1], sample_rate);
    let (sines, mask) = (g.constant(sines), g.constant(mask));
    let masked = g.mul(dist, mask)?;
    let weights = g.normalize_rows(masked)?;
    let weighted = g.mul(weights, sines)?;
    let summed = g.sum_last(weighted)?;
    let amp = g.reshape(amp, &[ds[0]])?;
    Ok((g.mul(summed, amp)?, end))
}

/// Maps per-frame magnitude responses `[bins]` to zero-phase FIR taps:
/// a Hann-windowed inverse real DFT over lags `-(N/2 - 1)..=(N/2 - 1)`.
/// Returns `[bins, N - 1]` so that `taps = mags · basis`.
pub fn noise_filter_basis<S: Scalar>(frame: usize) -> Tensor<S> {
    let n = frame as f64;
    let bins = frame / 2 + 1;
    let half = frame / 2 - 1;
    let taps = 2 * half + 1;
    let mut data = Vec::with_capacity(bins * taps);
    for k in 0..bins {
        let weight = if k == 0 || k == frame / 2 { 1.0 } else { 2.0 };
        for l in 0..taps {
            let lag = l as f64 - half as f64;
            let window = 0.5 + 0.5 * (TAU * lag / n).cos();
            data.push(S::lit(window * weight * (TAU * k as f64 * lag / n).cos() / n));
        }
    }
    Tensor::new(&[bins, taps], data).expect("basis shape")
}

/// Filter uniform white noise in `[-1, 1)` with per-frame zero-phase FIRs
/// derived from `mags[B, frame/2 + 1]`, overlap-added with Hann windows at
/// 50% overlap, to `len` samples.
pub fn filtered_noise<S: Scalar>(g: &mut Graph<S>, mags: Var, len: usize, frame: usize, rng: &mut Rng) -> Result<Var> {
    let ms = g.shape(mags).to_vec();
    if ms.len() != 2 || ms[1] != frame / 2 + 1 || ms[0] < 2 || frame < 4 || !frame.is_multiple_of(2) {
        return Err(Error::invalid(
            "filtered_noise",
            format!("magnitudes {ms:?} do not fit a {frame}-sample filter frame"),
        ));
    }
    let hop = frame / 2;
    let frames = ola_frames(len, hop, frame);
    // Frame f is centred on sample f * hop; locate it on the control grid.
    let scale = if len > 1 {
        (ms[0] - 1) as f64 / (len - 1) as f64
    } else {
        0.0
    };
    let positions: Vec<f64> = (0..frames).map(|f| (f * hop).min(len - 1) as f64 * scale).collect();
    let per_frame = g.lerp_rows_at(mags, &positions)?;
    let basis = g.constant(noise_filter_basis(frame));
    let taps = g.matmul(per_frame, basis)?;
    let white: Vec<S> = rng.uniform_vec(len, -1.0, 1.0);
    g.overlap_add_fir(taps, &white, frame, hop)
}

/// Impulse response `[1, taps...]`: the first tap is the fixed dry path.
pub fn reverb_ir<S: Scalar>(g: &mut Graph<S>, taps: Var) -> Result<Var> {
    let one = g.constant(Tensor::from_vec(vec![S::one()]));
    g.concat(&[one, taps], 0)
}

/// Causal convolution with the impulse response, truncated to the input length.
pub fn reverb<S: Scalar>(g: &mut Graph<S>, dry: Var, ir: Var) -> Result<Var> {
    g.causal_convolve(dry, ir)
}

#[derive(Clone, Copy, Debug)]
pub struct SynthOutput {
    /// Post-reverb sum, present when rendering for training.
    pub audio: Option<Var>,
    /// Pre-reverb harmonic stream `[T]`.
    pub harmonic: Var,
    /// Pre-reverb noise stream `[T]`.
    pub noise: Var,
    pub end_phase: f64,
}

/// The synthesizer with its single trained component, the reverb tail.
#[derive(Clone, Debug)]
pub struct HnSynth {
    pub config: SynthConfig,
    pub reverb_taps: ParamId,
}

impl HnSynth {
    pub fn new<S: Scalar>(p: &mut ParamBuilder<'_, S>, config: SynthConfig) -> Self {
        let reverb_taps = p.normal("reverb", &[config.reverb_len.max(2) - 1], config.reverb_init_std);
        Self { config, reverb_taps }
    }

    /// Render `hop * B` samples from frame-rate controls and pitch `f0[B]`.
    /// The reverb is applied (and `audio` returned) only when `with_audio`.
    pub fn render<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        p: &mut Binder<'_, S>,
        ctrl: HnControls,
        f0: &[f64],
        rng: &mut Rng,
        with_audio: bool,
    ) -> Result<SynthOutput> {
        let b = f0.len();
        for (name, v) in [
            ("harm_amp", ctrl.harm_amp),
            ("harm_dist", ctrl.harm_dist),
            ("noise_mags", ctrl.noise_mags),
        ] {
            if g.shape(v).first() != Some(&b) {
                return Err(Error::invalid(
                    "render",
                    format!("{name} has shape {:?} but pitch has {b} frames", g.shape(v)),
                ));
            }
        }
        let cfg = &self.config;
        let len = cfg.hop * b;
        let sr = cfg.sample_rate as f64;
        let amp = interpolate_controls(g, ctrl.harm_amp, len, cfg.hop)?;
        let dist = interpolate_controls(g, ctrl.harm_dist, len, cfg.hop)?;
        let f0_t = samplewise_f0(f0, len);
        let (harmonic, end_phase) = harmonic_oscillator(g, amp, dist, &f0_t, sr, 0.0)?;
        let noise = filtered_noise(g, ctrl.noise_mags, len, cfg.noise_frame, rng)?;
        let audio = if with_audio {
            let dry = g.add(harmonic, noise)?;
            let taps = p.var(g, self.reverb_taps);
            let ir = reverb_ir(g, taps)?;
            Some(reverb(g, dry, ir)?)
        } else {
            None
        };
        Ok(SynthOutput {
            audio,
            harmonic,
            noise,
            end_phase,
        })
    }
}
