//! Adversarial critics: the multi-period discriminator (MPD) on folded
//! waveforms and the multi-resolution multi-band spectrogram discriminator
//! (MR-MBSD) on sub-bands of log-magnitude STFTs.

use crate::autodiff::{Conv2dSpec, Graph, Var};
use crate::config::{DiscriminatorConfig, MpdConfig, MrmbsdConfig};
use crate::dsp::{band_ranges, StftConfig, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::nn::{Binder, Conv2d, ParamBuilder};
use crate::scalar::Scalar;

/// Logits and per-layer feature maps of a set of sub-discriminators.
#[derive(Clone, Debug, Default)]
pub struct DiscriminatorOutput {
    pub logits: Vec<Var>,
    pub features: Vec<Vec<Var>>,
}

impl DiscriminatorOutput {
    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn extend(&mut self, other: DiscriminatorOutput) {
        self.logits.extend(other.logits);
        self.features.extend(other.features);
    }
}

/// Zero-pad `x[N]` to a multiple of `p` and fold it to `[1, ceil(N/p), p]`.
pub fn reshape_period<S: Scalar>(g: &mut Graph<S>, x: Var, p: usize) -> Result<Var> {
    let n = g.shape(x).first().copied().unwrap_or(0);
    if p < 2 || g.shape(x).len() != 1 || n == 0 {
        return Err(Error::invalid(
            "reshape_period",
            format!("period {p} on shape {:?}", g.shape(x)),
        ));
    }
    let rows = n.div_ceil(p);
    let padded = g.pad(x, 0, 0, rows * p - n)?;
    g.reshape(padded, &[1, rows, p])
}

fn run_stack<S: Scalar>(
    g: &mut Graph<S>,
    p: &mut Binder<'_, S>,
    convs: &[Conv2d],
    post: &Conv2d,
    mut x: Var,
    slope: f64,
) -> Result<(Var, Vec<Var>)> {
    let mut feats = Vec::with_capacity(convs.len());
    for conv in convs {
        let y = conv.forward(g, p, x)?;
        x = g.leaky_relu(y, slope);
        feats.push(x);
    }
    Ok((post.forward(g, p, x)?, feats))
}

fn output_conv<S: Scalar>(
    p: &mut ParamBuilder<'_, S>,
    cin: usize,
    kernel: (usize, usize),
    spec: Conv2dSpec,
    zero: bool,
) -> Conv2d {
    if zero {
        Conv2d::zeros(p, cin, 1, kernel, spec)
    } else {
        Conv2d::new(p, cin, 1, kernel, spec)
    }
}

/// One period of the MPD. The folded signal is laid out as
/// `[1, p, rows]` so that convolutions run along the time axis only.
#[derive(Clone, Debug)]
pub struct PeriodDiscriminator {
    pub period: usize,
    pub convs: Vec<Conv2d>,
    pub post: Conv2d,
}

impl PeriodDiscriminator {
    pub fn new<S: Scalar>(p: &mut ParamBuilder<'_, S>, period: usize, cfg: &MpdConfig, zero_out: bool) -> Self {
        let k = cfg.kernel;
        let last = cfg.channels.len() - 1;
        let mut cin = 1;
        let convs = cfg
            .channels
            .iter()
            .enumerate()
            .map(|(i, &cout)| {
                let spec = Conv2dSpec {
                    stride: (1, if i == last { 1 } else { cfg.stride }),
                    dilation: (1, 1),
                    padding: (0, k / 2),
                };
                let c = Conv2d::new(&mut p.sub(&format!("conv{i}")), cin, cout, (1, k), spec);
                cin = cout;
                c
            })
            .collect();
        let pk = cfg.post_kernel;
        let spec = Conv2dSpec {
            padding: (0, pk / 2),
            ..Conv2dSpec::default()
        };
        let post = output_conv(&mut p.sub("post"), cin, (1, pk), spec, zero_out);
        Self { period, convs, post }
    }

    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        p: &mut Binder<'_, S>,
        x: Var,
        slope: f64,
    ) -> Result<(Var, Vec<Var>)> {
        let folded = reshape_period(g, x, self.period)?;
        let columns = g.swap_last2(folded)?;
        run_stack(g, p, &self.convs, &self.post, columns, slope)
    }
}

#[derive(Clone, Debug)]
pub struct Mpd {
    pub subs: Vec<PeriodDiscriminator>,
}

impl Mpd {
    pub fn new<S: Scalar>(p: &mut ParamBuilder<'_, S>, cfg: &MpdConfig, zero_out: bool) -> Self {
        let subs = cfg
            .periods
            .iter()
            .map(|&per| PeriodDiscriminator::new(&mut p.sub(&format!("p{per}")), per, cfg, zero_out))
            .collect();
        Self { subs }
    }

    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        p: &mut Binder<'_, S>,
        x: Var,
        slope: f64,
    ) -> Result<DiscriminatorOutput> {
        let mut out = DiscriminatorOutput::default();
        for sub in &self.subs {
            let (logit, feats) = sub.forward(g, p, x, slope)?;
            out.logits.push(logit);
            out.features.push(feats);
        }
        Ok(out)
    }
}

/// One sub-band critic: a 2-D conv stack over `[1, frames, band_bins]`
/// with frequency striding and time dilation.
#[derive(Clone, Debug)]
pub struct BandDiscriminator {
    pub convs: Vec<Conv2d>,
    pub post: Conv2d,
}

impl BandDiscriminator {
    pub fn new<S: Scalar>(p: &mut ParamBuilder<'_, S>, cfg: &MrmbsdConfig, zero_out: bool) -> Self {
        let c = &cfg.channels;
        let mut convs = Vec::new();
        let first = Conv2dSpec {
            padding: (1, 4),
            ..Conv2dSpec::default()
        };
        convs.push(Conv2d::new(&mut p.sub("conv0"), 1, c[0], (3, 9), first));
        let mut cin = c[0];
        for (i, &d) in cfg.time_dilations.iter().enumerate() {
            let cout = c[(i + 1).min(c.len() - 1)];
            let spec = Conv2dSpec {
                stride: (1, 2),
                dilation: (d, 1),
                padding: (d, 4),
            };
            convs.push(Conv2d::new(
                &mut p.sub(&format!("conv{}", i + 1)),
                cin,
                cout,
                (3, 9),
                spec,
            ));
            cin = cout;
        }
        let square = Conv2dSpec {
            padding: (1, 1),
            ..Conv2dSpec::default()
        };
        let cout = *c.last().expect("validated non-empty");
        convs.push(Conv2d::new(
            &mut p.sub(&format!("conv{}", convs.len())),
            cin,
            cout,
            (3, 3),
            square,
        ));
        let post = output_conv(&mut p.sub("post"), cout, (3, 3), square, zero_out);
        Self { convs, post }
    }
}

#[derive(Clone, Debug)]
pub struct Mrmbsd {
    pub stft_sets: Vec<StftConfig>,
    pub bands: usize,
    /// `stft_sets.len() * bands` critics, resolution-major.
    pub subs: Vec<BandDiscriminator>,
}

impl Mrmbsd {
    pub fn new<S: Scalar>(p: &mut ParamBuilder<'_, S>, cfg: &MrmbsdConfig, zero_out: bool) -> Self {
        let mut subs = Vec::new();
        for (r, _) in cfg.stft_sets.iter().enumerate() {
            for b in 0..cfg.bands {
                subs.push(BandDiscriminator::new(&mut p.sub(&format!("r{r}b{b}")), cfg, zero_out));
            }
        }
        Self {
            stft_sets: cfg.stft_sets.clone(),
            bands: cfg.bands,
            subs,
        }
    }

    pub fn min_len(&self) -> usize {
        self.stft_sets
            .iter()
            .map(|s| s.win_length.max(s.fft_size))
            .max()
            .unwrap_or(0)
    }

    /// `log(|X| + 1e-5)` split into bands, each `[1, frames, band_bins]`.
    pub fn band_inputs<S: Scalar>(&self, g: &mut Graph<S>, x: Var) -> Result<Vec<Var>> {
        let n = g.shape(x).first().copied().unwrap_or(0);
        if n < self.min_len() {
            return Err(Error::InputTooShort {
                op: "mrmbsd",
                len: n,
                need: self.min_len(),
            });
        }
        let mut out = Vec::with_capacity(self.subs.len());
        for cfg in &self.stft_sets {
            let z = g.stft(x, *cfg)?;
            let mag = g.complex_abs(z)?;
            let logmag = g.log_eps(mag, LOG_FLOOR);
            let frames = g.shape(logmag)[0];
            for r in band_ranges(cfg.bins(), self.bands) {
                let band = g.narrow(logmag, 1, r.start, r.len())?;
                out.push(g.reshape(band, &[1, frames, r.len()])?);
            }
        }
        Ok(out)
    }

    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        p: &mut Binder<'_, S>,
        x: Var,
        slope: f64,
    ) -> Result<DiscriminatorOutput> {
        let inputs = self.band_inputs(g, x)?;
        let mut out = DiscriminatorOutput::default();
        for (sub, input) in self.subs.iter().zip(inputs) {
            let (logit, feats) = run_stack(g, p, &sub.convs, &sub.post, input, slope)?;
            out.logits.push(logit);
            out.features.push(feats);
        }
        Ok(out)
    }
}

/// MPD followed by MR-MBSD; outputs are concatenated in that order.
#[derive(Clone, Debug)]
pub struct Discriminators {
    pub config: DiscriminatorConfig,
    pub mpd: Mpd,
    pub mrmbsd: Mrmbsd,
}

impl Discriminators {
    pub fn new<S: Scalar>(p: &mut ParamBuilder<'_, S>, config: DiscriminatorConfig) -> Self {
        let zero = config.zero_init_output;
        let mpd = Mpd::new(&mut p.sub("mpd"), &config.mpd, zero);
        let mrmbsd = Mrmbsd::new(&mut p.sub("mrmbsd"), &config.mrmbsd, zero);
        Self { config, mpd, mrmbsd }
    }

    pub fn num_subs(&self) -> usize {
        self.mpd.subs.len() + self.mrmbsd.subs.len()
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, p: &mut Binder<'_, S>, x: Var) -> Result<DiscriminatorOutput> {
        let slope = self.config.slope;
        let mut out = self.mpd.forward(g, p, x, slope)?;
        out.extend(self.mrmbsd.forward(g, p, x, slope)?);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::nn::ParamStore;
    use crate::rng::Rng;
    use crate::tensor::Tensor;

    fn build(cfg: DiscriminatorConfig, seed: u64) -> (ParamStore<f64>, Discriminators) {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(seed);
        let d = Discriminators::new(&mut ParamBuilder::new(&mut store, &mut rng), cfg);
        (store, d)
    }

    #[test]
    fn period_folding() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_vec((1..=6).map(f64::from).collect()));
        let r = reshape_period(&mut g, x, 2).unwrap();
        assert_eq!(g.shape(r), &[1, 3, 2]);
        let y = g.constant(Tensor::from_vec((1..=7).map(f64::from).collect()));
        let r = reshape_period(&mut g, y, 3).unwrap();
        assert_eq!(g.shape(r), &[1, 3, 3]);
        assert_eq!(g.value(r).data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 0.0, 0.0]);
        assert!(reshape_period(&mut g, y, 1).is_err());
    }

    #[test]
    fn structure_and_zero_start() {
        let (store, d) = build(Config::toy().discriminator, 1);
        assert_eq!(d.mpd.subs.len(), 5);
        assert_eq!(d.mrmbsd.subs.len(), 12);
        let mut g = Graph::new();
        let mut p = Binder::new(&store, false);
        let x = g.constant(Tensor::from_vec(Rng::new(2).normal_vec(48000)));
        let out = d.forward(&mut g, &mut p, x).unwrap();
        assert_eq!(out.len(), 17);
        for (l, f) in out.logits.iter().zip(&out.features) {
            assert_eq!(f.len(), 5);
            assert!(g.value(*l).data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn too_short_for_largest_window() {
        let (store, d) = build(Config::toy().discriminator, 1);
        let mut g = Graph::new();
        let mut p = Binder::new(&store, false);
        let x = g.constant(Tensor::zeros(&[2047]));
        assert!(matches!(d.forward(&mut g, &mut p, x), Err(Error::InputTooShort { .. })));
    }

    #[test]
    fn low_tone_energy_stays_in_low_band() {
        let (_, d) = build(Config::toy().discriminator, 1);
        let sr = 48000.0;
        let tone: Vec<f64> = (0..48000)
            .map(|t| (std::f64::consts::TAU * 200.0 * t as f64 / sr).sin())
            .collect();
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_vec(tone));
        let bands = 3;
        for (r, cfg) in d.mrmbsd.stft_sets.iter().enumerate() {
            let z = g.stft(x, *cfg).unwrap();
            let pw = g.complex_power(z).unwrap();
            let pw = g.value(pw);
            let bins = cfg.bins();
            let ranges = band_ranges(bins, bands);
            let energy: Vec<f64> = ranges
                .iter()
                .map(|rg| {
                    (0..pw.shape()[0])
                        .map(|f| pw.row(f)[rg.clone()].iter().sum::<f64>())
                        .sum()
                })
                .collect();
            let total: f64 = energy.iter().sum();
            assert!(energy[0] / total >= 0.99, "resolution {r}: {energy:?}");
        }
    }

    #[test]
    fn full_period_shift_disturbs_less_than_one_sample() {
        // A p-periodic pattern plus noise: shifting by p keeps every folded
        // column on the same phase, shifting by one sample rotates them.
        let mut cfg = Config::toy().discriminator;
        cfg.zero_init_output = false;
        let mut closer = 0;
        for seed in 0..10u64 {
            let (store, d) = build(cfg.clone(), seed);
            let sub = &d.mpd.subs[seed as usize % d.mpd.subs.len()];
            let per = sub.period;
            let mut rng = Rng::new(100 + seed);
            let pattern: Vec<f64> = (0..per).map(|_| rng.normal()).collect();
            let sig: Vec<f64> = (0..4000).map(|t| pattern[t % per] + 0.05 * rng.normal()).collect();
            let logits = |shift: usize| {
                let mut g = Graph::new();
                let mut p = Binder::new(&store, false);
                let x = g.constant(Tensor::from_vec(sig[shift..shift + 3600].to_vec()));
                let (l, _) = sub.forward(&mut g, &mut p, x, 0.1).unwrap();
                g.value(l).to_f64_vec()
            };
            let base = logits(0);
            let change = |o: Vec<f64>| -> f64 { o.iter().zip(&base).map(|(a, b)| (a - b).abs()).sum() };
            if change(logits(per)) < change(logits(1)) {
                closer += 1;
            }
        }
        assert_eq!(closer, 10);
    }

    #[test]
    fn identical_inputs_identical_features() {
        let (store, d) = build(Config::micro().discriminator, 3);
        let sig = Rng::new(4).normal_vec::<f64>(4096);
        let mut g = Graph::new();
        let mut p = Binder::new(&store, false);
        let a = g.constant(Tensor::from_vec(sig.clone()));
        let b = g.constant(Tensor::from_vec(sig));
        let oa = d.forward(&mut g, &mut p, a).unwrap();
        let ob = d.forward(&mut g, &mut p, b).unwrap();
        for (fa, fb) in oa.features.iter().zip(&ob.features) {
            for (x, y) in fa.iter().zip(fb) {
                assert_eq!(g.value(*x), g.value(*y));
            }
        }
    }
}
