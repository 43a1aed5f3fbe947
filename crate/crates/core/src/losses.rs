//! Training objectives: multi-resolution STFT loss, log-mel L1 distance,
//! discriminator feature matching and least-squares adversarial losses.

use crate::autodiff::{Graph, Var};
use crate::config::LossWeights;
use crate::discriminators::DiscriminatorOutput;
use crate::dsp::{AudioBuffer, MelConfig, MelFilterbank, StftConfig, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn check_pair<S: Scalar>(g: &Graph<S>, op: &'static str, x: Var, y: Var) -> Result<usize> {
    let (xs, ys) = (g.shape(x), g.shape(y));
    if xs.len() != 1 || xs != ys {
        return Err(Error::ShapeMismatch {
            op,
            lhs: xs.to_vec(),
            rhs: ys.to_vec(),
        });
    }
    Ok(xs[0])
}

/// Spectral convergence plus mean absolute log-magnitude difference,
/// averaged over resolutions. `y` is the reference.
pub fn spectral_loss<S: Scalar>(g: &mut Graph<S>, x: Var, y: Var, sets: &[StftConfig]) -> Result<Var> {
    check_pair(g, "spectral_loss", x, y)?;
    if sets.is_empty() {
        return Err(Error::invalid("spectral_loss", "no STFT resolutions"));
    }
    let mut terms = Vec::with_capacity(sets.len());
    for cfg in sets {
        let zx = g.stft(x, *cfg)?;
        let zy = g.stft(y, *cfg)?;
        let mx = g.complex_abs(zx)?;
        let my = g.complex_abs(zy)?;
        let diff = g.sub(my, mx)?;
        let num = g.norm(diff);
        let den = g.norm(my);
        // A silent reference leaves the ratio undefined; keep it finite.
        let den = if g.value(den).item() == S::zero() {
            g.add_scalar(den, 1e-12)
        } else {
            den
        };
        let sc = g.div(num, den)?;
        let lx = g.log_eps(mx, LOG_FLOOR);
        let ly = g.log_eps(my, LOG_FLOOR);
        let mag = g.l1_mean(ly, lx)?;
        terms.push(g.add(sc, mag)?);
    }
    let total = g.add_all(&terms)?;
    Ok(g.scale(total, 1.0 / sets.len() as f64))
}

/// Log-mel analysis inside the graph, matching
/// [`mel_spectrogram`](crate::dsp::mel_spectrogram) frame for frame.
#[derive(Clone, Debug)]
pub struct LogMel<S> {
    pub config: MelConfig,
    /// `[bins, n_mels]`
    basis: Tensor<S>,
}

impl<S: Scalar> LogMel<S> {
    pub fn new(config: MelConfig) -> Result<Self> {
        let fb = MelFilterbank::<S>::new(&config)?;
        let (mels, bins) = (fb.matrix.shape()[0], fb.matrix.shape()[1]);
        let m = fb.matrix.data();
        let data = (0..bins)
            .flat_map(|k| (0..mels).map(move |j| m[j * bins + k]))
            .collect();
        Ok(Self {
            config,
            basis: Tensor::new(&[bins, mels], data)?,
        })
    }

    /// `x[N]` to `[N / hop, n_mels]`.
    pub fn forward(&self, g: &mut Graph<S>, x: Var) -> Result<Var> {
        let n = g.shape(x).first().copied().unwrap_or(0);
        let frames = n / self.config.stft.hop;
        let z = g.stft(x, self.config.stft)?;
        let power = g.complex_power(z)?;
        let basis = g.constant(self.basis.clone());
        let mel = g.matmul(power, basis)?;
        let mel = g.narrow(mel, 0, 0, frames)?;
        Ok(g.log_eps(mel, LOG_FLOOR))
    }
}

/// Mean absolute log-mel difference of two signals at `rate`.
pub fn mel_loss<S: Scalar>(g: &mut Graph<S>, mel: &LogMel<S>, x: Var, y: Var, rate: u32) -> Result<Var> {
    if rate != mel.config.sample_rate {
        return Err(Error::invalid(
            "mel_loss",
            format!(
                "signals at {rate} Hz, analysis configured for {} Hz",
                mel.config.sample_rate
            ),
        ));
    }
    check_pair(g, "mel_loss", x, y)?;
    let mx = mel.forward(g, x)?;
    let my = mel.forward(g, y)?;
    g.l1_mean(mx, my)
}

/// [`mel_loss`] on plain buffers.
pub fn mel_distance<S: Scalar>(x: &AudioBuffer<S>, y: &AudioBuffer<S>, cfg: &MelConfig) -> Result<f64> {
    if x.sample_rate != y.sample_rate {
        return Err(Error::invalid(
            "mel_loss",
            format!("rates differ: {} vs {}", x.sample_rate, y.sample_rate),
        ));
    }
    let mel = LogMel::new(*cfg)?;
    let mut g = Graph::new();
    let a = g.constant(Tensor::from_vec(x.samples.clone()));
    let b = g.constant(Tensor::from_vec(y.samples.clone()));
    let l = mel_loss(&mut g, &mel, a, b, x.sample_rate)?;
    Ok(g.value(l).item().to_f64_lossy())
}

/// [`spectral_loss`] on plain buffers.
pub fn spectral_distance<S: Scalar>(x: &AudioBuffer<S>, y: &AudioBuffer<S>, sets: &[StftConfig]) -> Result<f64> {
    let mut g = Graph::new();
    let a = g.constant(Tensor::from_vec(x.samples.clone()));
    let b = g.constant(Tensor::from_vec(y.samples.clone()));
    let l = spectral_loss(&mut g, a, b, sets)?;
    Ok(g.value(l).item().to_f64_lossy())
}

/// Mean over sub-discriminators of the mean per-layer L1 feature distance.
pub fn feature_match_loss<S: Scalar>(
    g: &mut Graph<S>,
    real: &DiscriminatorOutput,
    fake: &DiscriminatorOutput,
) -> Result<Var> {
    let congruent = real.features.len() == fake.features.len()
        && !real.features.is_empty()
        && real
            .features
            .iter()
            .zip(&fake.features)
            .all(|(a, b)| a.len() == b.len() && !a.is_empty());
    if !congruent {
        return Err(Error::invalid(
            "feature_match_loss",
            "discriminator outputs have different structure",
        ));
    }
    let mut per_sub = Vec::with_capacity(real.features.len());
    for (r, f) in real.features.iter().zip(&fake.features) {
        let mut layers = Vec::with_capacity(r.len());
        for (&a, &b) in r.iter().zip(f) {
            layers.push(g.l1_mean(a, b)?);
        }
        let s = g.add_all(&layers)?;
        per_sub.push(g.scale(s, 1.0 / layers.len() as f64));
    }
    let s = g.add_all(&per_sub)?;
    Ok(g.scale(s, 1.0 / per_sub.len() as f64))
}

fn mean_sq_from<S: Scalar>(g: &mut Graph<S>, logits: &[Var], target: f64) -> Result<Var> {
    if logits.is_empty() {
        return Err(Error::invalid("adversarial_loss", "no logits"));
    }
    let mut terms = Vec::with_capacity(logits.len());
    for &l in logits {
        let d = g.add_scalar(l, -target);
        let sq = g.square(d);
        terms.push(g.mean(sq));
    }
    let s = g.add_all(&terms)?;
    Ok(g.scale(s, 1.0 / terms.len() as f64))
}

/// Least-squares generator loss: mean over sub-discriminators of
/// `mean (1 - D(fake))^2`.
pub fn generator_adversarial<S: Scalar>(g: &mut Graph<S>, fake: &DiscriminatorOutput) -> Result<Var> {
    mean_sq_from(g, &fake.logits, 1.0)
}

/// Least-squares discriminator loss: `mean (1 - D(real))^2 + mean D(fake)^2`,
/// each averaged over sub-discriminators.
pub fn discriminator_adversarial<S: Scalar>(
    g: &mut Graph<S>,
    real: &DiscriminatorOutput,
    fake: &DiscriminatorOutput,
) -> Result<Var> {
    let r = mean_sq_from(g, &real.logits, 1.0)?;
    let f = mean_sq_from(g, &fake.logits, 0.0)?;
    g.add(r, f)
}

/// The generator objective's individual terms.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorTerms {
    pub spectral: Var,
    pub feature_match: Var,
    pub mel_low: Var,
    pub mel_high: Var,
    pub adversarial: Var,
}

/// `λ1 L_sp + λ2 L_fm + λ3 (L_mel_low + L_mel_high) + λ4 L_adv`.
pub fn generator_total<S: Scalar>(g: &mut Graph<S>, t: &GeneratorTerms, w: &LossWeights) -> Result<Var> {
    let mels = g.add(t.mel_low, t.mel_high)?;
    let parts = [
        g.scale(t.spectral, w.spectral),
        g.scale(t.feature_match, w.feature_match),
        g.scale(mels, w.mel),
        g.scale(t.adversarial, w.adversarial),
    ];
    g.add_all(&parts)
}

/// The terms that do not depend on the critics (spectral and both mel
/// distances), weighted as in [`generator_total`].
pub fn reconstruction_total<S: Scalar>(g: &mut Graph<S>, t: &GeneratorTerms, w: &LossWeights) -> Result<Var> {
    let mels = g.add(t.mel_low, t.mel_high)?;
    let parts = [g.scale(t.spectral, w.spectral), g.scale(mels, w.mel)];
    g.add_all(&parts)
}
