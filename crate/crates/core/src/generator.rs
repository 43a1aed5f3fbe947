//! The three-stage generator.
//!
//! * [`Controller`] maps frame features to harmonic and noise controls:
//!   `c = f1(p) + f2(l) + f3(m)`, `g = GRU(c)`, `g' = MLP(g + f1(p))`,
//!   followed by two exp-sigmoid heads.
//! * [`Bridge`] upsamples the two pre-reverb synth streams by 6 with a
//!   transposed convolution and refines them with a 1-D UNet into the
//!   48 kHz-rate latent `u`.
//! * [`WaveNet`] upsamples the mel frames to the sample rate, concatenates
//!   them with `u` and runs a stack of gated dilated convolutions.

use crate::autodiff::{Conv1dSpec, Graph, Var};
use crate::config::{BridgeConfig, ControllerConfig, GeneratorConfig, WaveNetConfig};
use crate::error::{Error, Result};
use crate::features::FeatureFrames;
use crate::nn::{Binder, Conv1d, ConvTranspose1d, Gru, Linear, Mlp, ParamBuilder};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::synth::{HnControls, HnSynth};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Controller {
    pub config: ControllerConfig,
    pub mlp_p: Mlp,
    pub mlp_l: Mlp,
    pub mlp_m: Mlp,
    pub gru: Gru,
    pub mlp_post: Mlp,
    pub head_h: Linear,
    pub head_n: Linear,
}

/// Head outputs plus the intermediates that tests and probes look at.
#[derive(Clone, Copy, Debug)]
pub struct ControllerOutput {
    /// `[B, 1 + K]`: amplitude then harmonic distribution.
    pub harm: Var,
    /// `[B, bins]` noise magnitudes.
    pub noise: Var,
    pub pitch_embedding: Var,
    pub fused: Var,
}

impl Controller {
    pub fn new<S: Scalar>(p: &mut ParamBuilder<'_, S>, config: ControllerConfig) -> Self {
        let (h, d, s) = (config.hidden, config.depth, config.slope);
        let mlp_p = Mlp::new(&mut p.sub("mlp_p"), 1, h, d, s);
        let mlp_l = Mlp::new(&mut p.sub("mlp_l"), 1, h, d, s);
        let mlp_m = Mlp::new(&mut p.sub("mlp_m"), config.mel_dims, h, d, s);
        let gru = Gru::new(&mut p.sub("gru"), h, h);
        let mlp_post = Mlp::new(&mut p.sub("mlp_post"), h, h, d, s);
        let head_h = Linear::new(&mut p.sub("head_h"), h, 1 + config.harmonics);
        let mut hn = p.sub("head_n");
        let bound = 1.0 / (h as f64).sqrt();
        let head_n = Linear {
            w: hn.uniform("w", &[h, config.noise_bins], bound),
            b: hn.constant("b", &[config.noise_bins], config.noise_bias_init),
            din: h,
            dout: config.noise_bins,
        };
        Self {
            config,
            mlp_p,
            mlp_l,
            mlp_m,
            gru,
            mlp_post,
            head_h,
            head_n,
        }
    }

    /// `mel[B, M]`, `f0[B]` in Hz and `loudness[B]` in `[0, 1]`.
    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        p: &mut Binder<'_, S>,
        mel: Var,
        f0: Var,
        loudness: Var,
    ) -> Result<ControllerOutput> {
        let b = g.shape(f0).first().copied().unwrap_or(0);
        if g.shape(mel) != [b, self.config.mel_dims] || g.shape(loudness) != [b] || g.shape(f0) != [b] {
            return Err(Error::invalid(
                "controller",
                format!(
                    "mismatched frames: mel {:?}, f0 {:?}, loudness {:?}",
                    g.shape(mel),
                    g.shape(f0),
                    g.shape(loudness)
                ),
            ));
        }
        let pitch = g.scale(f0, 1.0 / self.config.f0_scale);
        let pitch = g.reshape(pitch, &[b, 1])?;
        let loud = g.reshape(loudness, &[b, 1])?;
        let f1 = self.mlp_p.forward(g, p, pitch)?;
        let f2 = self.mlp_l.forward(g, p, loud)?;
        let f3 = self.mlp_m.forward(g, p, mel)?;
        let fused = g.add_all(&[f1, f2, f3])?;
        let state = self.gru.forward(g, p, fused)?;
        let joined = g.add(state, f1)?;
        let post = self.mlp_post.forward(g, p, joined)?;
        let harm = self.head_h.forward(g, p, post)?;
        let noise = self.head_n.forward(g, p, post)?;
        Ok(ControllerOutput {
            harm: g.exp_sigmoid(harm),
            noise: g.exp_sigmoid(noise),
            pitch_embedding: f1,
            fused,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Bridge {
    pub config: BridgeConfig,
    pub up: ConvTranspose1d,
    pub down: Vec<Conv1d>,
    pub rise: Vec<ConvTranspose1d>,
    pub fuse: Vec<Conv1d>,
}

/// Convolution with kernel `2s`, stride `s` and padding `s/2`: exactly
/// divides the length by `s` when it is a multiple of `s`.
fn down_spec(s: usize) -> Conv1dSpec {
    Conv1dSpec {
        stride: s,
        dilation: 1,
        padding: s / 2,
    }
}

impl Bridge {
    pub fn new<S: Scalar>(p: &mut ParamBuilder<'_, S>, config: BridgeConfig) -> Self {
        let c = &config.channels;
        let s = config.up_stride;
        let up = ConvTranspose1d::new(
            &mut p.sub("up"),
            2,
            c[0],
            config.up_kernel,
            s,
            (config.up_kernel - s) / 2,
        );
        let down = config
            .down
            .iter()
            .enumerate()
            .map(|(i, &s)| Conv1d::new(&mut p.sub(&format!("down{i}")), c[i], c[i + 1], 2 * s, down_spec(s)))
            .collect();
        let levels = config.down.len();
        let mut rise = Vec::new();
        let mut fuse = Vec::new();
        for (j, &s) in config.up.iter().enumerate() {
            let (from, to) = (c[levels - j], c[levels - j - 1]);
            rise.push(ConvTranspose1d::new(
                &mut p.sub(&format!("rise{j}")),
                from,
                to,
                2 * s,
                s,
                s / 2,
            ));
            let k = config.fuse_kernel;
            fuse.push(Conv1d::new(
                &mut p.sub(&format!("fuse{j}")),
                2 * to,
                to,
                k,
                Conv1dSpec::same(k, 1),
            ));
        }
        Self {
            config,
            up,
            down,
            rise,
            fuse,
        }
    }

    pub fn latent_channels(&self) -> usize {
        self.config.channels[0]
    }

    fn factor(&self) -> usize {
        self.config.down.iter().product()
    }

    /// Pre-reverb streams `h[T]`, `n[T]` to the latent `u[C, up_stride * T]`.
    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, p: &mut Binder<'_, S>, h: Var, n: Var) -> Result<Var> {
        let t = g.shape(h).first().copied().unwrap_or(0);
        if g.shape(h) != [t] || g.shape(n) != [t] || t == 0 {
            return Err(Error::invalid(
                "bridge",
                format!("streams {:?} and {:?}", g.shape(h), g.shape(n)),
            ));
        }
        let slope = self.config.slope;
        let stacked = g.concat(&[h, n], 0)?;
        let stacked = g.reshape(stacked, &[2, t])?;
        let wide = self.up.forward(g, p, stacked)?;
        let len = g.shape(wide)[1];
        if len != t * self.config.up_stride {
            return Err(Error::Internal(format!(
                "bridge upsampling produced {len}, expected {}",
                t * self.config.up_stride
            )));
        }
        let pad = len.next_multiple_of(self.factor()) - len;
        let mut x = g.pad(wide, 1, 0, pad)?;
        let mut skips = vec![x];
        for conv in &self.down {
            let y = conv.forward(g, p, x)?;
            x = g.leaky_relu(y, slope);
            skips.push(x);
        }
        skips.pop();
        let last = self.rise.len() - 1;
        for (j, (rise, fuse)) in self.rise.iter().zip(&self.fuse).enumerate() {
            let y = rise.forward(g, p, x)?;
            let y = g.leaky_relu(y, slope);
            let skip = skips.pop().expect("one skip per level");
            if g.shape(y) != g.shape(skip) {
                return Err(Error::Internal(format!(
                    "UNet level {j}: decoder {:?} vs encoder {:?}",
                    g.shape(y),
                    g.shape(skip)
                )));
            }
            let cat = g.concat(&[y, skip], 0)?;
            x = fuse.forward(g, p, cat)?;
            if j != last {
                x = g.leaky_relu(x, slope);
            }
        }
        if g.shape(x)[1] != len + pad {
            return Err(Error::Internal(format!(
                "UNet output length {} != {}",
                g.shape(x)[1],
                len + pad
            )));
        }
        g.narrow(x, 1, 0, len)
    }
}

#[derive(Clone, Debug)]
pub struct WaveNetLayer {
    pub dilation: usize,
    pub conv: Conv1d,
    /// 1x1 projection to residual + skip (skip only on the last layer).
    pub out: Conv1d,
}

#[derive(Clone, Debug)]
pub struct WaveNet {
    pub config: WaveNetConfig,
    pub mel_up: Vec<ConvTranspose1d>,
    pub input: Conv1d,
    pub layers: Vec<WaveNetLayer>,
    pub post1: Conv1d,
    pub post2: Conv1d,
}

impl WaveNet {
    pub fn new<S: Scalar>(p: &mut ParamBuilder<'_, S>, config: WaveNetConfig, mel_dims: usize, latent: usize) -> Self {
        let c = &config;
        let mut mel_up = Vec::new();
        let mut cin = mel_dims;
        for (i, &s) in c.mel_strides.iter().enumerate() {
            mel_up.push(ConvTranspose1d::new(
                &mut p.sub(&format!("mel_up{i}")),
                cin,
                c.mel_channels,
                2 * s,
                s,
                s / 2,
            ));
            cin = c.mel_channels;
        }
        let one = Conv1dSpec::default();
        let input = Conv1d::new(&mut p.sub("input"), c.mel_channels + latent, c.residual, 1, one);
        let layers = (0..c.layers)
            .map(|i| {
                let dilation = c.dilations[i % c.dilations.len()];
                let mut lp = p.sub(&format!("layer{i}"));
                let spec = Conv1dSpec::same(c.kernel, dilation);
                let conv = Conv1d::new(&mut lp.sub("conv"), c.residual, 2 * c.gate, c.kernel, spec);
                let width = if i + 1 == c.layers { c.skip } else { c.residual + c.skip };
                let out = Conv1d::new(&mut lp.sub("out"), c.gate, width, 1, one);
                WaveNetLayer { dilation, conv, out }
            })
            .collect();
        let post1 = Conv1d::new(&mut p.sub("post1"), c.skip, c.skip, 1, one);
        let post2 = Conv1d::new(&mut p.sub("post2"), c.skip, 1, 1, one);
        Self {
            config,
            mel_up,
            input,
            layers,
            post1,
            post2,
        }
    }

    /// Samples on either side of an output that can influence it.
    pub fn receptive_field(&self) -> usize {
        1 + self
            .layers
            .iter()
            .map(|l| (self.config.kernel - 1) * l.dilation)
            .sum::<usize>()
    }

    /// Upsample `mel[B, M]` to `[mel_channels, hop * B]`.
    pub fn upsample_mel<S: Scalar>(&self, g: &mut Graph<S>, p: &mut Binder<'_, S>, mel: Var) -> Result<Var> {
        let mut x = g.swap_last2(mel)?;
        let last = self.mel_up.len() - 1;
        for (i, up) in self.mel_up.iter().enumerate() {
            x = up.forward(g, p, x)?;
            if i != last {
                x = g.leaky_relu(x, self.config.slope);
            }
        }
        Ok(x)
    }

    /// `mel[B, M]` and latent `u[C, T']` to audio `[T']` in `[-1, 1]`.
    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, p: &mut Binder<'_, S>, mel: Var, u: Var) -> Result<Var> {
        let b = g.shape(mel).first().copied().unwrap_or(0);
        let hop: usize = self.config.mel_strides.iter().product();
        let t = g.shape(u).get(1).copied().unwrap_or(0);
        if t != hop * b {
            return Err(Error::Length(format!(
                "latent has {t} samples but {b} mel frames need {}",
                hop * b
            )));
        }
        let m = self.upsample_mel(g, p, mel)?;
        if g.shape(m)[1] != t {
            return Err(Error::Internal(format!(
                "mel upsampler produced {} samples, expected {t}",
                g.shape(m)[1]
            )));
        }
        let x = g.concat(&[m, u], 0)?;
        let mut x = self.input.forward(g, p, x)?;
        let c = &self.config;
        let half = std::f64::consts::FRAC_1_SQRT_2;
        let mut skips = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let h = layer.conv.forward(g, p, x)?;
            let a = g.narrow(h, 0, 0, c.gate)?;
            let bgate = g.narrow(h, 0, c.gate, c.gate)?;
            let a = g.tanh(a);
            let bgate = g.sigmoid(bgate);
            let z = g.mul(a, bgate)?;
            let o = layer.out.forward(g, p, z)?;
            if i + 1 == self.layers.len() {
                skips.push(o);
            } else {
                let res = g.narrow(o, 0, 0, c.residual)?;
                skips.push(g.narrow(o, 0, c.residual, c.skip)?);
                let sum = g.add(x, res)?;
                x = g.scale(sum, half);
            }
        }
        let s = g.add_all(&skips)?;
        let s = g.scale(s, 1.0 / (skips.len() as f64).sqrt());
        let s = g.leaky_relu(s, c.slope);
        let s = self.post1.forward(g, p, s)?;
        let s = g.leaky_relu(s, c.slope);
        let s = self.post2.forward(g, p, s)?;
        let y = g.tanh(s);
        g.reshape(y, &[t])
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GenOptions {
    /// Render the reverberated low-rate audio used by the training losses.
    pub training: bool,
    /// Replace the bridge latent by zeros (ablation).
    pub zero_latent: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct GeneratorOutput {
    pub audio: Var,
    /// Low-rate reverberated audio, only when training.
    pub audio_low: Option<Var>,
    pub harmonic: Var,
    pub noise: Var,
    pub latent: Var,
    pub controls: ControllerOutput,
}

#[derive(Clone, Debug)]
pub struct Generator {
    pub config: GeneratorConfig,
    pub controller: Controller,
    pub synth: HnSynth,
    pub bridge: Bridge,
    pub wavenet: WaveNet,
}

impl Generator {
    pub fn new<S: Scalar>(p: &mut ParamBuilder<'_, S>, config: GeneratorConfig) -> Self {
        let controller = Controller::new(&mut p.sub("controller"), config.controller.clone());
        let synth = HnSynth::new(&mut p.sub("synth"), config.synth.clone());
        let bridge = Bridge::new(&mut p.sub("bridge"), config.bridge.clone());
        let wavenet = WaveNet::new(
            &mut p.sub("wavenet"),
            config.wavenet.clone(),
            config.controller.mel_dims,
            bridge.latent_channels(),
        );
        Self {
            config,
            controller,
            synth,
            bridge,
            wavenet,
        }
    }

    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        p: &mut Binder<'_, S>,
        features: &FeatureFrames<S>,
        rng: &mut Rng,
        opts: GenOptions,
    ) -> Result<GeneratorOutput> {
        features.validate()?;
        let mel = g.constant(features.mel.clone());
        let f0 = g.constant(features.f0.clone());
        let loud = g.constant(features.loudness.clone());
        let controls = self.controller.forward(g, p, mel, f0, loud)?;
        let ctrl = HnControls::from_heads(g, controls.harm, controls.noise)?;
        let rendered = self.synth.render(g, p, ctrl, &features.f0_hz(), rng, opts.training)?;
        let b = features.num_frames();
        let latent = if opts.zero_latent {
            g.constant(Tensor::zeros(&[self.bridge.latent_channels(), self.config.hop * b]))
        } else {
            self.bridge.forward(g, p, rendered.harmonic, rendered.noise)?
        };
        let audio = self.wavenet.forward(g, p, mel, latent)?;
        Ok(GeneratorOutput {
            audio,
            audio_low: rendered.audio,
            harmonic: rendered.harmonic,
            noise: rendered.noise,
            latent,
            controls,
        })
    }
}
