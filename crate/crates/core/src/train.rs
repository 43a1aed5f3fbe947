//! AdamW, the warmup/decay schedule, gradient clipping and the alternating
//! discriminator/generator training step.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::config::{Config, OptimConfig};
use crate::discriminators::Discriminators;
use crate::error::{Error, Result};
use crate::features::FeatureFrames;
use crate::generator::{GenOptions, Generator};
use crate::losses::{
    discriminator_adversarial, feature_match_loss, generator_adversarial, generator_total, mel_loss,
    reconstruction_total, spectral_loss, GeneratorTerms, LogMel,
};
use crate::nn::{Binder, ParamBuilder, ParamStore};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Linear warmup from 0 to the peak, then geometric decay per step.
pub fn lr_at(step: u64, cfg: &OptimConfig) -> f64 {
    let w = cfg.warmup_steps;
    if step <= w && w > 0 {
        cfg.peak_lr * step as f64 / w as f64
    } else {
        cfg.peak_lr * cfg.decay.powf((step - w) as f64)
    }
}

/// First and second moments of every parameter plus the update count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    pub step: u64,
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &ParamStore<S>) -> Self {
        let zeros: Vec<Tensor<S>> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn matches(&self, params: &ParamStore<S>) -> bool {
        self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .tensors()
                .iter()
                .zip(&self.m)
                .zip(&self.v)
                .all(|((p, m), v)| p.shape() == m.shape() && p.shape() == v.shape())
    }
}

/// Fail on the first non-finite gradient, naming its parameter.
pub fn check_finite<S: Scalar>(params: &ParamStore<S>, grads: &[Vec<S>]) -> Result<()> {
    for (id, g) in params.ids().zip(grads) {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(params.name(id).to_string()));
        }
    }
    Ok(())
}

/// Global L2 norm of all gradients.
pub fn grad_norm<S: Scalar>(grads: &[Vec<S>]) -> f64 {
    grads
        .iter()
        .flatten()
        .map(|v| {
            let x = v.to_f64_lossy();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// Rescale gradients so that their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<S: Scalar>(grads: &mut [Vec<S>], max_norm: f64) -> f64 {
    let norm = grad_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = S::lit(max_norm / norm);
        for v in grads.iter_mut().flatten() {
            *v *= s;
        }
    }
    norm
}

/// Decoupled-weight-decay Adam with bias correction:
/// `p <- p (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps)`.
pub fn adamw_step<S: Scalar>(
    params: &mut ParamStore<S>,
    grads: &[Vec<S>],
    state: &mut AdamState<S>,
    lr: f64,
    cfg: &OptimConfig,
) -> Result<()> {
    if grads.len() != params.len() || !state.matches(params) {
        return Err(Error::invalid(
            "adamw",
            "gradients, moments and parameters are not congruent",
        ));
    }
    check_finite(params, grads)?;
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let decay = S::lit(1.0 - lr * cfg.weight_decay);
    let (b1s, b2s) = (S::lit(b1), S::lit(b2));
    let (a1, a2) = (S::lit(1.0 - b1), S::lit(1.0 - b2));
    let (c1, c2) = (S::lit(c1), S::lit(c2));
    let (lr_s, eps) = (S::lit(lr), S::lit(cfg.eps));
    for (i, g) in grads.iter().enumerate() {
        let p = params.tensors_mut()[i].data_mut();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        if g.len() != p.len() {
            return Err(Error::invalid(
                "adamw",
                format!("gradient {i} has {} values for {}", g.len(), p.len()),
            ));
        }
        for j in 0..p.len() {
            m[j] = b1s * m[j] + a1 * g[j];
            v[j] = b2s * v[j] + a2 * g[j] * g[j];
            let mh = m[j] / c1;
            let vh = v[j] / c2;
            p[j] = p[j] * decay - lr_s * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}

/// Generator, discriminators and their parameters.
#[derive(Clone, Debug)]
pub struct Model<S> {
    pub config: Config,
    pub generator: Generator,
    pub discriminators: Discriminators,
    pub g_params: ParamStore<S>,
    pub d_params: ParamStore<S>,
}

impl<S: Scalar> Model<S> {
    /// Fresh initialization, deterministic in `config.train.seed`.
    pub fn new(config: Config) -> Result<Self> {
        config.validate()?;
        let root = Rng::new(config.train.seed);
        let mut g_params = ParamStore::new();
        let mut d_params = ParamStore::new();
        let mut grng = root.split(1);
        let mut drng = root.split(2);
        let generator = Generator::new(
            &mut ParamBuilder::new(&mut g_params, &mut grng),
            config.generator.clone(),
        );
        let discriminators = Discriminators::new(
            &mut ParamBuilder::new(&mut d_params, &mut drng),
            config.discriminator.clone(),
        );
        Ok(Self {
            config,
            generator,
            discriminators,
            g_params,
            d_params,
        })
    }

    pub fn num_generator_params(&self) -> usize {
        self.g_params.numel()
    }

    /// Inference: audio `[hop * B]` from features.
    pub fn synthesize(&self, features: &FeatureFrames<S>, rng: &mut Rng) -> Result<Vec<S>> {
        let mut g = Graph::new();
        let mut p = Binder::new(&self.g_params, false);
        let out = self
            .generator
            .forward(&mut g, &mut p, features, rng, GenOptions::default())?;
        Ok(g.value(out.audio).data().to_vec())
    }
}

/// A complete clip: features plus the reference audio at both rates.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip<S> {
    pub features: FeatureFrames<S>,
    pub audio: Vec<S>,
    pub audio_low: Vec<S>,
}

impl<S: Scalar> Clip<S> {
    pub fn validate(&self, hop: usize, hop_low: usize) -> Result<()> {
        self.features.validate()?;
        let b = self.features.num_frames();
        if self.audio.len() < hop * b || self.audio_low.len() < hop_low * b {
            return Err(Error::Length(format!(
                "{b} frames need {} / {} samples, clip has {} / {}",
                hop * b,
                hop_low * b,
                self.audio.len(),
                self.audio_low.len()
            )));
        }
        Ok(())
    }

    /// Frames `start..start + len` with the matching audio spans.
    pub fn crop(&self, start: usize, len: usize, hop: usize, hop_low: usize) -> Result<Clip<S>> {
        let features = self.features.crop(start, len)?;
        Ok(Clip {
            features,
            audio: self.audio[start * hop..(start + len) * hop].to_vec(),
            audio_low: self.audio_low[start * hop_low..(start + len) * hop_low].to_vec(),
        })
    }
}

/// Random fixed-length crops, one per batch element.
pub fn sample_batch<S: Scalar>(clips: &[Clip<S>], config: &Config, rng: &mut Rng) -> Result<Vec<Clip<S>>> {
    if clips.is_empty() {
        return Err(Error::invalid("sample_batch", "no training clips"));
    }
    let hop = config.generator.hop;
    let hop_low = config.generator.synth.hop;
    (0..config.train.batch_size)
        .map(|_| {
            let clip = &clips[rng.below(clips.len())];
            let b = clip.features.num_frames();
            let len = config.train.segment_frames.min(b);
            let start = rng.below(b - len + 1);
            clip.crop(start, len, hop, hop_low)
        })
        .collect()
}

/// Values of every loss term, averaged over the batch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub lr: f64,
    pub spectral: f64,
    pub feature_match: f64,
    pub mel_low: f64,
    pub mel_high: f64,
    pub adversarial: f64,
    pub generator_total: f64,
    /// Weighted spectral and mel terms, the part not driven by the critics.
    pub reconstruction: f64,
    pub discriminator: f64,
    pub g_grad_norm: f64,
    pub d_grad_norm: f64,
}

/// Analysis operators reused across steps.
#[derive(Clone, Debug)]
pub struct LossKit<S> {
    pub mel_high: LogMel<S>,
    pub mel_low: LogMel<S>,
}

impl<S: Scalar> LossKit<S> {
    pub fn new(config: &Config) -> Result<Self> {
        Ok(Self {
            mel_high: LogMel::new(config.loss.mel_48k)?,
            mel_low: LogMel::new(config.loss.mel_8k)?,
        })
    }
}

fn mean_of<S: Scalar>(g: &mut Graph<S>, xs: &[Var]) -> Result<Var> {
    let s = g.add_all(xs)?;
    Ok(g.scale(s, 1.0 / xs.len() as f64))
}

/// Generator outputs for one batch element.
#[derive(Clone, Copy, Debug)]
pub struct Generated {
    pub audio: Var,
    pub audio_low: Var,
}

/// Training-mode generator forward for every batch element. Element `i`
/// draws its noise from `rng.split(1 + i)`.
pub fn generate_batch<S: Scalar>(
    g: &mut Graph<S>,
    model: &Model<S>,
    gp: &mut Binder<'_, S>,
    batch: &[Clip<S>],
    rng: &Rng,
    opts: GenOptions,
) -> Result<Vec<Generated>> {
    let opts = GenOptions { training: true, ..opts };
    batch
        .iter()
        .enumerate()
        .map(|(i, clip)| {
            let mut noise = rng.split(1 + i as u64);
            let out = model.generator.forward(g, gp, &clip.features, &mut noise, opts)?;
            let audio_low = out
                .audio_low
                .ok_or_else(|| Error::Internal("training render without low-rate audio".into()))?;
            Ok(Generated {
                audio: out.audio,
                audio_low,
            })
        })
        .collect()
}

/// The generator objective on a batch against frozen critics. Returns the
/// batch-averaged terms, the weighted total and the reconstruction part.
pub fn generator_objective<S: Scalar>(
    g: &mut Graph<S>,
    model: &Model<S>,
    dp: &mut Binder<'_, S>,
    kit: &LossKit<S>,
    batch: &[Clip<S>],
    generated: &[Generated],
) -> Result<(GeneratorTerms, Var, Var)> {
    let cfg = &model.config;
    if batch.len() != generated.len() || batch.is_empty() {
        return Err(Error::invalid(
            "generator_objective",
            "batch and generated outputs differ in size",
        ));
    }
    let mut items: Vec<[Var; 5]> = Vec::with_capacity(batch.len());
    for (clip, out) in batch.iter().zip(generated) {
        let real = g.constant(Tensor::from_vec(clip.audio.clone()));
        let real_low = g.constant(Tensor::from_vec(clip.audio_low.clone()));
        let d_fake = model.discriminators.forward(g, dp, out.audio)?;
        let d_real = model.discriminators.forward(g, dp, real)?;
        let sp = spectral_loss(g, out.audio, real, &cfg.loss.spectral_stft)?;
        let fm = feature_match_loss(g, &d_real, &d_fake)?;
        let ml = mel_loss(
            g,
            &kit.mel_low,
            out.audio_low,
            real_low,
            cfg.generator.synth.sample_rate,
        )?;
        let mh = mel_loss(g, &kit.mel_high, out.audio, real, cfg.generator.sample_rate)?;
        let adv = generator_adversarial(g, &d_fake)?;
        items.push([sp, fm, ml, mh, adv]);
    }
    let mut avg = Vec::with_capacity(5);
    for k in 0..5 {
        let col: Vec<Var> = items.iter().map(|it| it[k]).collect();
        avg.push(mean_of(g, &col)?);
    }
    let terms = GeneratorTerms {
        spectral: avg[0],
        feature_match: avg[1],
        mel_low: avg[2],
        mel_high: avg[3],
        adversarial: avg[4],
    };
    let total = generator_total(g, &terms, &cfg.loss.weights)?;
    let recon = reconstruction_total(g, &terms, &cfg.loss.weights)?;
    Ok((terms, total, recon))
}

/// Step counter and both optimizers.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<S> {
    pub step: u64,
    pub g_opt: AdamState<S>,
    pub d_opt: AdamState<S>,
}

impl<S: Scalar> TrainState<S> {
    pub fn new(model: &Model<S>) -> Self {
        Self {
            step: 0,
            g_opt: AdamState::new(&model.g_params),
            d_opt: AdamState::new(&model.d_params),
        }
    }
}

/// Randomness of a step depends only on the seed and the step number, so
/// a resumed run replays exactly the same crops and noise.
pub fn step_rng(seed: u64, step: u64) -> Rng {
    Rng::new(seed).split(0x5eed_0000 + step)
}

/// One critic update on fixed fake audio. Returns the loss and the
/// pre-clipping gradient norm; the generator is not touched.
pub fn discriminator_step<S: Scalar>(
    critics: &Discriminators,
    params: &mut ParamStore<S>,
    ocfg: &OptimConfig,
    opt: &mut AdamState<S>,
    batch: &[Clip<S>],
    fakes: &[Vec<S>],
    lr: f64,
) -> Result<(f64, f64)> {
    if batch.len() != fakes.len() || batch.is_empty() {
        return Err(Error::invalid("discriminator_step", "batch and fakes differ in size"));
    }
    let mut gd = Graph::new();
    let mut dp = Binder::new(params, true);
    let mut losses = Vec::with_capacity(batch.len());
    for (clip, fake) in batch.iter().zip(fakes) {
        let real = gd.constant(Tensor::from_vec(clip.audio.clone()));
        let fake = gd.constant(Tensor::from_vec(fake.clone()));
        let dr = critics.forward(&mut gd, &mut dp, real)?;
        let df = critics.forward(&mut gd, &mut dp, fake)?;
        losses.push(discriminator_adversarial(&mut gd, &dr, &df)?);
    }
    let loss = mean_of(&mut gd, &losses)?;
    gd.backward(loss)?;
    let mut grads = dp.grads(&gd);
    drop(dp);
    check_finite(params, &grads)?;
    let norm = clip_grad_norm(&mut grads, ocfg.clip_norm);
    adamw_step(params, &grads, opt, lr, ocfg)?;
    Ok((gd.value(loss).item().to_f64_lossy(), norm))
}

/// One discriminator update on detached fakes followed by one generator
/// update against the updated, frozen critics.
pub fn train_step<S: Scalar>(
    model: &mut Model<S>,
    state: &mut TrainState<S>,
    kit: &LossKit<S>,
    clips: &[Clip<S>],
    opts: GenOptions,
) -> Result<StepMetrics> {
    let step = state.step + 1;
    let ocfg = model.config.optim.clone();
    let lr = lr_at(step, &ocfg);
    let rng = step_rng(model.config.train.seed, step);
    let batch = sample_batch(clips, &model.config, &mut rng.split(0))?;

    let mut g = Graph::new();
    let mut gp = Binder::new(&model.g_params, true);
    let generated = generate_batch(&mut g, model, &mut gp, &batch, &rng, opts)?;

    let fakes: Vec<Vec<S>> = generated.iter().map(|o| g.value(o.audio).data().to_vec()).collect();
    let (d_loss, d_norm) = discriminator_step(
        &model.discriminators,
        &mut model.d_params,
        &ocfg,
        &mut state.d_opt,
        &batch,
        &fakes,
        lr,
    )?;

    // Generator update against the updated, frozen critics.
    let (terms, total, recon) = {
        let mut dp = Binder::new(&model.d_params, false);
        generator_objective(&mut g, model, &mut dp, kit, &batch, &generated)?
    };
    g.backward(total)?;
    let mut grads = gp.grads(&g);
    drop(gp);
    check_finite(&model.g_params, &grads)?;
    let g_norm = clip_grad_norm(&mut grads, ocfg.clip_norm);
    adamw_step(&mut model.g_params, &grads, &mut state.g_opt, lr, &ocfg)?;
    state.step = step;

    let val = |v: Var| g.value(v).item().to_f64_lossy();
    Ok(StepMetrics {
        step,
        lr,
        spectral: val(terms.spectral),
        feature_match: val(terms.feature_match),
        mel_low: val(terms.mel_low),
        mel_high: val(terms.mel_high),
        adversarial: val(terms.adversarial),
        generator_total: val(total),
        reconstruction: val(recon),
        discriminator: d_loss,
        g_grad_norm: g_norm,
        d_grad_norm: d_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        let c = OptimConfig::default();
        assert_eq!(lr_at(0, &c), 0.0);
        assert_eq!(lr_at(5000, &c), 0.0002);
        assert!((lr_at(5001, &c) - 0.0001998).abs() < 1e-18);
        for s in 1..=5000 {
            assert!(lr_at(s, &c) > lr_at(s - 1, &c));
        }
        for s in 5001..6000 {
            assert!(lr_at(s + 1, &c) < lr_at(s, &c));
        }
    }

    fn one_param(v: f64) -> ParamStore<f64> {
        let mut p = ParamStore::new();
        p.add("x", Tensor::from_vec(vec![v]));
        p
    }

    #[test]
    fn adamw_closed_forms() {
        let mut cfg = OptimConfig::default();
        let lr = 1e-3;
        // Zero gradient and zero decay: nothing moves.
        cfg.weight_decay = 0.0;
        let mut p = one_param(0.7);
        let mut s = AdamState::new(&p);
        adamw_step(&mut p, &[vec![0.0]], &mut s, lr, &cfg).unwrap();
        assert_eq!(p.tensors()[0].data()[0], 0.7);
        // Unit gradient: bias correction makes the first update -lr.
        let mut p = one_param(0.7);
        let mut s = AdamState::new(&p);
        adamw_step(&mut p, &[vec![1.0]], &mut s, lr, &cfg).unwrap();
        let delta = p.tensors()[0].data()[0] - 0.7;
        assert!((delta + lr / (1.0 + 1e-8)).abs() < 1e-15, "{delta}");
        // Decoupled decay with zero gradient: geometric shrink.
        cfg.weight_decay = 0.01;
        let mut p = one_param(2.0);
        let mut s = AdamState::new(&p);
        for k in 1..=10 {
            adamw_step(&mut p, &[vec![0.0]], &mut s, lr, &cfg).unwrap();
            let want = 2.0 * (1.0 - lr * 0.01f64).powi(k);
            assert!((p.tensors()[0].data()[0] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut p = ParamStore::<f64>::new();
        p.add("fine", Tensor::from_vec(vec![1.0]));
        p.add("broken.w", Tensor::from_vec(vec![1.0, 2.0]));
        let mut s = AdamState::new(&p);
        let err = adamw_step(
            &mut p,
            &[vec![0.0], vec![0.0, f64::NAN]],
            &mut s,
            1e-3,
            &OptimConfig::default(),
        );
        assert_eq!(err, Err(Error::NonFiniteGradient("broken.w".into())));
        assert_eq!(p.tensors()[1].data(), &[1.0, 2.0]);
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut g = vec![vec![3.0, 0.0], vec![4.0]];
        assert_eq!(clip_grad_norm(&mut g, 10.0), 5.0);
        assert_eq!(g, vec![vec![3.0, 0.0], vec![4.0]]);
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((grad_norm(&g) - 1.0).abs() < 1e-15);
    }
}
