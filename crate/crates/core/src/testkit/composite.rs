//! Finite-difference checks of the complete generator objective and the
//! critic objective with respect to every parameter store.

use super::GradReport;
use crate::autodiff::Graph;
use crate::config::Config;
use crate::error::Result;
use crate::features::FeatureFrames;
use crate::generator::GenOptions;
use crate::losses::discriminator_adversarial;
use crate::nn::{Binder, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::train::{generate_batch, generator_objective, Clip, LossKit, Model};

/// Coordinates whose gradient is below this are covered by the directional
/// probe only; their differences are dominated by round-off.
pub const MIN_PROBED_GRAD: f64 = 1e-5;

/// Synthetic clip sized for `config`: random mel, a gliding voiced pitch
/// with an unvoiced tail, and noisy reference audio at both rates.
pub fn synthetic_clip(config: &Config, frames: usize, seed: u64) -> Result<Clip<f64>> {
    let mut rng = Rng::new(seed);
    let dims = config.generator.controller.mel_dims;
    let mel = Tensor::new(&[frames, dims], rng.normal_vec(frames * dims))?;
    let f0: Vec<f64> = (0..frames)
        .map(|b| if b + 2 >= frames { 0.0 } else { 180.0 + 7.0 * b as f64 })
        .collect();
    let loud: Vec<f64> = (0..frames).map(|b| 0.4 + 0.02 * b as f64).collect();
    let features = FeatureFrames {
        mel,
        f0: Tensor::from_vec(f0),
        loudness: Tensor::from_vec(loud),
    };
    Ok(Clip {
        features,
        audio: rng.uniform_vec(frames * config.generator.hop, -0.3, 0.3),
        audio_low: rng.uniform_vec(frames * config.generator.synth.hop, -0.3, 0.3),
    })
}

/// A micro-preset model, two-clip batch and fixed noise stream.
pub struct Composite {
    pub model: Model<f64>,
    pub kit: LossKit<f64>,
    pub batch: Vec<Clip<f64>>,
    pub rng: Rng,
}

/// Objective value with gradients for the generator and critic stores.
pub type Evaluation = (f64, Vec<Vec<f64>>, Vec<Vec<f64>>);

impl Composite {
    pub fn new(seed: u64) -> Result<Self> {
        let mut config = Config::micro();
        config.train.seed = seed;
        let mut model = Model::new(config.clone())?;
        // Zero biases leave padded regions exactly at a leaky-ReLU kink, so
        // the check runs at a generic point near the initialization.
        let mut jitter = Rng::new(seed).split(5);
        for store in [&mut model.g_params, &mut model.d_params] {
            for t in store.tensors_mut() {
                for x in t.data_mut() {
                    *x += 0.02 * jitter.normal();
                }
            }
        }
        Ok(Self {
            kit: LossKit::new(&config)?,
            batch: vec![
                synthetic_clip(&config, 10, 100 + seed)?,
                synthetic_clip(&config, 10, 200 + seed)?,
            ],
            model,
            rng: Rng::new(seed).split(7),
        })
    }

    /// Weighted generator objective against critics that also take gradients.
    pub fn generator_loss(&self, gs: &ParamStore<f64>, ds: &ParamStore<f64>) -> Result<Evaluation> {
        let mut g = Graph::new();
        let mut gp = Binder::new(gs, true);
        let mut dp = Binder::new(ds, true);
        let gen = generate_batch(
            &mut g,
            &self.model,
            &mut gp,
            &self.batch,
            &self.rng,
            GenOptions::default(),
        )?;
        let (_, total, _) = generator_objective(&mut g, &self.model, &mut dp, &self.kit, &self.batch, &gen)?;
        g.backward(total)?;
        Ok((g.value(total).item(), gp.grads(&g), dp.grads(&g)))
    }

    /// Least-squares critic objective on detached fakes.
    pub fn discriminator_loss(&self, gs: &ParamStore<f64>, ds: &ParamStore<f64>) -> Result<Evaluation> {
        let mut g = Graph::new();
        let mut gp = Binder::new(gs, false);
        let mut dp = Binder::new(ds, true);
        let gen = generate_batch(
            &mut g,
            &self.model,
            &mut gp,
            &self.batch,
            &self.rng,
            GenOptions::default(),
        )?;
        let mut losses = Vec::new();
        for (clip, out) in self.batch.iter().zip(&gen) {
            let real = g.constant(Tensor::from_vec(clip.audio.clone()));
            let fake = g.detach(out.audio);
            let dr = self.model.discriminators.forward(&mut g, &mut dp, real)?;
            let df = self.model.discriminators.forward(&mut g, &mut dp, fake)?;
            losses.push(discriminator_adversarial(&mut g, &dr, &df)?);
        }
        let sum = g.add_all(&losses)?;
        let loss = g.scale(sum, 1.0 / losses.len() as f64);
        g.backward(loss)?;
        let zeros = gs.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Ok((g.value(loss).item(), zeros, dp.grads(&g)))
    }

    /// Worst error over one joint random direction and `coords` sampled
    /// coordinates per store, with a description of where it occurred. The
    /// critic store is always perturbed, the generator store only when
    /// `with_generator`.
    pub fn check<F>(&self, f: F, with_generator: bool, coords: usize) -> Result<(GradReport, String)>
    where
        F: Fn(&Self, &ParamStore<f64>, &ParamStore<f64>) -> Result<Evaluation>,
    {
        let gs = &self.model.g_params;
        let ds = &self.model.d_params;
        let (_, ga, da) = f(self, gs, ds)?;
        let mut report = GradReport::default();

        let mut dir_rng = self.rng.split(99);
        let gdir: Vec<Vec<f64>> = gs
            .tensors()
            .iter()
            .map(|t| {
                if with_generator {
                    dir_rng.normal_vec(t.len())
                } else {
                    vec![0.0; t.len()]
                }
            })
            .collect();
        let ddir: Vec<Vec<f64>> = ds.tensors().iter().map(|t| dir_rng.normal_vec(t.len())).collect();
        let num = ladder_difference(|h| Ok(f(self, &shifted(gs, &gdir, h), &shifted(ds, &ddir, h))?.0))?;
        let ana = dot(&ga, &gdir) + dot(&da, &ddir);
        report.record(0, 0, ana, num);
        let mut worst = format!("random direction: analytic {ana:e}, numeric {num:e}");

        let mut rng = self.rng.split(98);
        let stores: &[(usize, &ParamStore<f64>, &Vec<Vec<f64>>)] = if with_generator {
            &[(0, gs, &ga), (1, ds, &da)]
        } else {
            &[(1, ds, &da)]
        };
        for &(which, store, grads) in stores {
            let ids: Vec<_> = store.ids().collect();
            let (mut probed, mut tries) = (0, 0);
            while probed < coords && tries < 50 * coords {
                tries += 1;
                let id = ids[rng.below(ids.len())];
                let k = rng.below(store.get(id).len());
                if grads[id.index()][k].abs() < MIN_PROBED_GRAD {
                    continue;
                }
                probed += 1;
                let num = ladder_difference(|h| {
                    let mut p = store.clone();
                    p.get_mut(id).data_mut()[k] += h;
                    let v = if which == 0 { f(self, &p, ds)? } else { f(self, gs, &p)? };
                    Ok(v.0)
                })?;
                let before = report.max_rel_err;
                let ana = grads[id.index()][k];
                report.record(which, k, ana, num);
                if report.max_rel_err > before {
                    worst = format!("{}[{k}]: analytic {ana:e}, numeric {num:e}", store.name(id));
                }
            }
        }
        Ok((report, worst))
    }
}

// The objective sums thousands of terms, so its evaluation noise is near
// 1e-12 and tiny gradients need a wide step. Log-magnitude spectra of
// near-empty bins curve it sharply on a 1e-5 scale and need a narrow one.
// Central differences are taken over a geometric ladder of steps and the
// estimate is read where two neighbouring steps agree best.
pub fn ladder_difference(f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let mut c = Vec::with_capacity(11);
    for i in 0..11 {
        let h = 1e-3 * 10f64.powf(-0.5 * i as f64);
        c.push((f(h)? - f(-h)?) / (2.0 * h));
    }
    let mut best = (f64::MAX, c[0]);
    for w in c.windows(2) {
        let d = (w[0] - w[1]).abs();
        if d < best.0 {
            best = (d, w[0]);
        }
    }
    Ok(best.1)
}

fn shifted(store: &ParamStore<f64>, dir: &[Vec<f64>], h: f64) -> ParamStore<f64> {
    let mut out = store.clone();
    for (t, d) in out.tensors_mut().iter_mut().zip(dir) {
        for (x, dx) in t.data_mut().iter_mut().zip(d) {
            *x += h * dx;
        }
    }
    out
}

fn dot(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .sum()
}
