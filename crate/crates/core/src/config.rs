//! Model, loss, optimizer and training configuration.
//!
//! `Default` values reproduce the published settings: loss weights
//! 10/1/1/120, AdamW with betas (0.8, 0.99) and weight decay 0.01, a
//! 5000-step warmup to 2e-4 followed by 0.999 decay, UNet rates (8, 2, 2) /
//! (2, 2, 8), an 18-layer dilated stack and the four STFT resolutions of
//! the multi-band discriminator. Widths the original leaves open are set to
//! the values listed below and can be changed freely.

use serde::{Deserialize, Serialize};

use crate::dsp::{MelConfig, StftConfig};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub mel_dims: usize,
    /// Width of every MLP layer and of the GRU state (they are summed).
    pub hidden: usize,
    pub depth: usize,
    pub harmonics: usize,
    pub noise_bins: usize,
    pub slope: f64,
    /// Pitch is divided by this before entering its MLP.
    pub f0_scale: f64,
    /// Initial bias of the noise head; negative values start with quiet noise.
    pub noise_bias_init: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            mel_dims: 120,
            hidden: 512,
            depth: 3,
            harmonics: 64,
            noise_bins: 65,
            slope: 0.1,
            f0_scale: 1200.0,
            noise_bias_init: -5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub sample_rate: u32,
    /// Samples per control frame (5 ms at 8 kHz).
    pub hop: usize,
    pub noise_frame: usize,
    pub reverb_len: usize,
    pub reverb_init_std: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: 8000,
            hop: 40,
            noise_frame: 128,
            reverb_len: 4000,
            reverb_init_std: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BridgeConfig {
    pub up_stride: usize,
    pub up_kernel: usize,
    /// Channel count at each UNet level; the first is also the latent width.
    pub channels: Vec<usize>,
    pub down: Vec<usize>,
    pub up: Vec<usize>,
    pub fuse_kernel: usize,
    pub slope: f64,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            up_stride: 6,
            up_kernel: 12,
            channels: vec![32, 64, 128, 256],
            down: vec![8, 2, 2],
            up: vec![2, 2, 8],
            fuse_kernel: 3,
            slope: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveNetConfig {
    pub mel_strides: Vec<usize>,
    pub mel_channels: usize,
    pub layers: usize,
    pub kernel: usize,
    pub dilations: Vec<usize>,
    pub residual: usize,
    pub gate: usize,
    pub skip: usize,
    pub slope: f64,
}

impl Default for WaveNetConfig {
    fn default() -> Self {
        Self {
            mel_strides: vec![10, 6, 4],
            mel_channels: 64,
            layers: 18,
            kernel: 15,
            dilations: vec![1, 3, 9, 27, 81, 243],
            residual: 64,
            gate: 64,
            skip: 64,
            slope: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub sample_rate: u32,
    /// Output samples per conditioning frame (5 ms at 48 kHz).
    pub hop: usize,
    pub controller: ControllerConfig,
    pub synth: SynthConfig,
    pub bridge: BridgeConfig,
    pub wavenet: WaveNetConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            sample_rate: 48000,
            hop: 240,
            controller: ControllerConfig::default(),
            synth: SynthConfig::default(),
            bridge: BridgeConfig::default(),
            wavenet: WaveNetConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpdConfig {
    pub periods: Vec<usize>,
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub post_kernel: usize,
}

impl Default for MpdConfig {
    fn default() -> Self {
        Self {
            periods: vec![2, 3, 5, 7, 11],
            channels: vec![32, 128, 512, 512, 512],
            kernel: 5,
            stride: 3,
            post_kernel: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MrmbsdConfig {
    /// `(fft_size, hop, win_length)` per resolution.
    pub stft_sets: Vec<StftConfig>,
    pub bands: usize,
    pub channels: Vec<usize>,
    pub time_dilations: Vec<usize>,
}

impl Default for MrmbsdConfig {
    fn default() -> Self {
        Self {
            stft_sets: default_stft_sets(),
            bands: 3,
            channels: vec![32, 64, 128, 256, 256],
            time_dilations: vec![1, 2, 4],
        }
    }
}

pub fn default_stft_sets() -> Vec<StftConfig> {
    vec![
        StftConfig::new(512, 128, 512),
        StftConfig::new(1024, 256, 1024),
        StftConfig::new(1024, 512, 1024),
        StftConfig::new(2048, 512, 2048),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorConfig {
    pub mpd: MpdConfig,
    pub mrmbsd: MrmbsdConfig,
    pub slope: f64,
    /// Start every sub-discriminator's output layer at zero (all logits 0).
    pub zero_init_output: bool,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            mpd: MpdConfig::default(),
            mrmbsd: MrmbsdConfig::default(),
            slope: 0.1,
            zero_init_output: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub spectral: f64,
    pub feature_match: f64,
    pub mel: f64,
    pub adversarial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            spectral: 10.0,
            feature_match: 1.0,
            mel: 1.0,
            adversarial: 120.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.spectral, self.feature_match, self.mel, self.adversarial];
        if all.iter().all(|w| w.is_finite() && *w > 0.0) {
            Ok(())
        } else {
            Err(Error::invalid(
                "loss_weights",
                format!("weights must be positive, got {all:?}"),
            ))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub weights: LossWeights,
    /// Resolutions averaged by the spectral loss.
    pub spectral_stft: Vec<StftConfig>,
    pub mel_48k: MelConfig,
    pub mel_8k: MelConfig,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            spectral_stft: default_stft_sets(),
            mel_48k: MelConfig::analysis_48k(),
            mel_8k: MelConfig::analysis_8k(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
    pub clip_norm: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            peak_lr: 2e-4,
            warmup_steps: 5000,
            decay: 0.999,
            beta1: 0.8,
            beta2: 0.99,
            weight_decay: 0.01,
            eps: 1e-8,
            clip_norm: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    /// Conditioning frames per training crop (100 frames = 0.5 s).
    pub segment_frames: usize,
    pub batch_size: usize,
    pub steps: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 1234,
            segment_frames: 100,
            batch_size: 1,
            steps: 400_000,
            checkpoint_every: 5000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub train: TrainConfig,
}

impl Config {
    /// Desk-scale preset: narrow networks, a short warmup and a higher peak
    /// learning rate so that a single clip can be fitted in a few hundred
    /// steps on a CPU.
    pub fn toy() -> Self {
        let mut c = Self::default();
        let g = &mut c.generator;
        g.controller.hidden = 64;
        g.bridge.channels = vec![8, 8, 16, 16];
        g.wavenet.mel_channels = 8;
        g.wavenet.layers = 6;
        g.wavenet.residual = 8;
        g.wavenet.gate = 8;
        g.wavenet.skip = 8;
        let d = &mut c.discriminator;
        d.mpd.channels = vec![4, 8, 16, 16, 16];
        d.mrmbsd.channels = vec![4, 4, 8, 8, 8];
        c.optim.peak_lr = 1e-3;
        c.optim.warmup_steps = 20;
        c.train.steps = 500;
        c.train.checkpoint_every = 100;
        c
    }

    /// Smallest meaningful network, for whole-model gradient checks.
    pub fn micro() -> Self {
        let mut c = Self::toy();
        let g = &mut c.generator;
        g.controller.hidden = 6;
        g.controller.harmonics = 4;
        g.controller.noise_bins = 5;
        g.controller.mel_dims = 4;
        g.synth.noise_frame = 8;
        g.synth.reverb_len = 16;
        g.bridge.channels = vec![2, 2, 3, 3];
        g.wavenet.mel_channels = 2;
        g.wavenet.layers = 2;
        g.wavenet.kernel = 3;
        g.wavenet.residual = 2;
        g.wavenet.gate = 2;
        g.wavenet.skip = 2;
        let d = &mut c.discriminator;
        d.mpd.channels = vec![2, 2, 2, 2, 2];
        d.mrmbsd.channels = vec![2, 2, 2, 2, 2];
        d.zero_init_output = false;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.generator;
        let bad = |msg: String| Err(Error::invalid("config", msg));
        if g.sample_rate as usize * g.synth.hop != g.synth.sample_rate as usize * g.hop {
            return bad(format!(
                "frame rates differ: {} Hz / {} vs {} Hz / {}",
                g.sample_rate, g.hop, g.synth.sample_rate, g.synth.hop
            ));
        }
        if !g.hop.is_multiple_of(g.synth.hop) || g.hop / g.synth.hop != g.bridge.up_stride {
            return bad(format!(
                "bridge upsampling {} must equal the rate ratio {}/{}",
                g.bridge.up_stride, g.hop, g.synth.hop
            ));
        }
        if g.wavenet.mel_strides.iter().product::<usize>() != g.hop {
            return bad(format!(
                "mel upsampler strides {:?} must multiply to {}",
                g.wavenet.mel_strides, g.hop
            ));
        }
        let b = &g.bridge;
        if b.down.len() + 1 != b.channels.len() || b.up.len() != b.down.len() {
            return bad("bridge needs one more channel level than down/up stages".into());
        }
        if !b.up.iter().rev().eq(b.down.iter()) {
            return bad(format!(
                "bridge up rates {:?} must mirror down rates {:?}",
                b.up, b.down
            ));
        }
        if b.down
            .iter()
            .chain(&b.up)
            .chain(&g.wavenet.mel_strides)
            .any(|s| s % 2 != 0)
            || !b.up_stride.is_multiple_of(2)
        {
            return bad("all up/down strides must be even".into());
        }
        if g.wavenet.kernel.is_multiple_of(2) || g.wavenet.dilations.is_empty() {
            return bad("wavenet kernel must be odd and dilations non-empty".into());
        }
        if g.controller.noise_bins != g.synth.noise_frame / 2 + 1 {
            return bad(format!(
                "noise_bins {} must equal noise_frame/2+1 = {}",
                g.controller.noise_bins,
                g.synth.noise_frame / 2 + 1
            ));
        }
        let p = &self.discriminator.mpd.periods;
        if p.windows(2).any(|w| w[0] >= w[1]) || p.first().is_some_and(|&x| x < 2) {
            return bad(format!("mpd periods must be increasing and >= 2, got {p:?}"));
        }
        if self.discriminator.mpd.channels.is_empty() || self.discriminator.mrmbsd.channels.len() < 2 {
            return bad("discriminator channel lists too short".into());
        }
        for s in self
            .discriminator
            .mrmbsd
            .stft_sets
            .iter()
            .chain(&self.loss.spectral_stft)
        {
            s.validate()?;
        }
        self.loss.weights.validate()?;
        if self.train.segment_frames == 0 || self.train.batch_size == 0 {
            return bad("segment_frames and batch_size must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_published_values() {
        let c = Config::default();
        let w = c.loss.weights;
        assert_eq!(
            (w.spectral, w.feature_match, w.mel, w.adversarial),
            (10.0, 1.0, 1.0, 120.0)
        );
        assert_eq!((c.optim.beta1, c.optim.beta2, c.optim.weight_decay), (0.8, 0.99, 0.01));
        assert_eq!(
            (c.optim.warmup_steps, c.optim.peak_lr, c.optim.decay),
            (5000, 2e-4, 0.999)
        );
        assert_eq!(c.generator.bridge.down, vec![8, 2, 2]);
        assert_eq!(c.generator.bridge.up, vec![2, 2, 8]);
        assert_eq!(c.generator.wavenet.layers, 18);
        let sets: Vec<(usize, usize, usize)> = c
            .discriminator
            .mrmbsd
            .stft_sets
            .iter()
            .map(|s| (s.fft_size, s.hop, s.win_length))
            .collect();
        assert_eq!(
            sets,
            vec![(512, 128, 512), (1024, 256, 1024), (1024, 512, 1024), (2048, 512, 2048)]
        );
        c.validate().unwrap();
        Config::toy().validate().unwrap();
        Config::micro().validate().unwrap();
    }
}
