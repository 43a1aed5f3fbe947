//! Training step contracts: finiteness, detachment, determinism, batch
//! symmetry, objective linearity and a low-rate overfit run.

mod common;

use common::{analysed_clip, vibrato_tone};
use hnwave_core::config::{Config, OptimConfig};
use hnwave_core::generator::GenOptions;
use hnwave_core::losses::mel_loss;
use hnwave_core::nn::Binder;
use hnwave_core::synth::HnControls;
use hnwave_core::testkit::composite::Composite;
use hnwave_core::train::{
    adamw_step, discriminator_step, generate_batch, generator_objective, lr_at, train_step, AdamState, Clip, LossKit,
    Model, TrainState,
};
use hnwave_core::{Graph, Rng, Tensor};

fn short_toy() -> Config {
    let mut c = Config::toy();
    c.train.segment_frames = 20;
    c
}

fn tone_clip() -> Clip<f64> {
    analysed_clip(vibrato_tone(48000, 220.0))
}

#[test]
fn one_step_gives_finite_metrics() {
    let config = short_toy();
    let mut model = Model::<f64>::new(config.clone()).unwrap();
    let mut state = TrainState::new(&model);
    let kit = LossKit::new(&config).unwrap();
    let before = model.g_params.clone();
    let m = train_step(&mut model, &mut state, &kit, &[tone_clip()], GenOptions::default()).unwrap();
    assert_eq!((m.step, state.step), (1, 1));
    assert_eq!(m.lr, lr_at(1, &config.optim));
    let values = [
        m.spectral,
        m.feature_match,
        m.mel_low,
        m.mel_high,
        m.adversarial,
        m.generator_total,
        m.reconstruction,
        m.discriminator,
        m.g_grad_norm,
        m.d_grad_norm,
    ];
    assert!(values.iter().all(|v| v.is_finite()), "{m:?}");
    let w = &config.loss.weights;
    let total = w.spectral * m.spectral
        + w.feature_match * m.feature_match
        + w.mel * (m.mel_low + m.mel_high)
        + w.adversarial * m.adversarial;
    assert!((total - m.generator_total).abs() <= 1e-12 * total.abs());
    assert_ne!(before, model.g_params);
}

#[test]
fn critic_step_leaves_generator_bit_unchanged() {
    let config = short_toy();
    let mut model = Model::<f64>::new(config.clone()).unwrap();
    let batch = vec![tone_clip().crop(10, 20, 240, 40).unwrap()];
    let fakes = vec![Rng::new(1).uniform_vec(20 * 240, -0.5, 0.5)];
    let g_before = model.g_params.clone();
    let d_before = model.d_params.clone();
    let mut opt = AdamState::new(&model.d_params);
    discriminator_step(
        &model.discriminators,
        &mut model.d_params,
        &config.optim,
        &mut opt,
        &batch,
        &fakes,
        1e-3,
    )
    .unwrap();
    assert_eq!(g_before, model.g_params);
    assert_ne!(d_before, model.d_params);
}

#[test]
fn fixed_seed_replays_bit_identically() {
    let config = short_toy();
    let clips = [tone_clip()];
    let run = || {
        let mut model = Model::<f64>::new(config.clone()).unwrap();
        let mut state = TrainState::new(&model);
        let kit = LossKit::new(&config).unwrap();
        let metrics: Vec<_> = (0..3)
            .map(|_| train_step(&mut model, &mut state, &kit, &clips, GenOptions::default()).unwrap())
            .collect();
        (metrics, model.g_params, state)
    };
    let (a, pa, sa) = run();
    let (b, pb, sb) = run();
    assert_eq!(a, b);
    assert_eq!(pa, pb);
    assert_eq!(sa, sb);
}

#[test]
fn objective_ignores_batch_order() {
    let c = Composite::new(3).unwrap();
    let mut g = Graph::new();
    let mut gp = Binder::new(&c.model.g_params, false);
    let mut dp = Binder::new(&c.model.d_params, false);
    let gen = generate_batch(&mut g, &c.model, &mut gp, &c.batch, &c.rng, GenOptions::default()).unwrap();
    let (_, fwd, _) = generator_objective(&mut g, &c.model, &mut dp, &c.kit, &c.batch, &gen).unwrap();
    let rev_batch: Vec<_> = c.batch.iter().rev().cloned().collect();
    let rev_gen: Vec<_> = gen.iter().rev().copied().collect();
    let (_, rev, _) = generator_objective(&mut g, &c.model, &mut dp, &c.kit, &rev_batch, &rev_gen).unwrap();
    let (a, b) = (g.value(fwd).item(), g.value(rev).item());
    assert!((a - b).abs() <= 1e-13 * a.abs(), "{a} vs {b}");
}

#[test]
fn objective_gradient_is_the_weighted_sum_of_term_gradients() {
    let c = Composite::new(4).unwrap();
    let w = c.model.config.loss.weights;
    // Gradient of the chosen combination of terms.
    let grads =
        |pick: &dyn Fn(&mut Graph<f64>, &hnwave_core::losses::GeneratorTerms, hnwave_core::Var) -> hnwave_core::Var| {
            let mut g = Graph::new();
            let mut gp = Binder::new(&c.model.g_params, true);
            let mut dp = Binder::new(&c.model.d_params, false);
            let gen = generate_batch(&mut g, &c.model, &mut gp, &c.batch, &c.rng, GenOptions::default()).unwrap();
            let (terms, total, _) = generator_objective(&mut g, &c.model, &mut dp, &c.kit, &c.batch, &gen).unwrap();
            let out = pick(&mut g, &terms, total);
            g.backward(out).unwrap();
            gp.grads(&g).concat()
        };
    let total = grads(&|_, _, t| t);
    let parts = [
        (w.spectral, grads(&|_, t, _| t.spectral)),
        (w.feature_match, grads(&|_, t, _| t.feature_match)),
        (w.mel, grads(&|_, t, _| t.mel_low)),
        (w.mel, grads(&|_, t, _| t.mel_high)),
        (w.adversarial, grads(&|_, t, _| t.adversarial)),
    ];
    let scale = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (i, &t) in total.iter().enumerate() {
        let sum: f64 = parts.iter().map(|(w, g)| w * g[i]).sum();
        assert!((t - sum).abs() <= 1e-10 * scale, "coordinate {i}: {t} vs {sum}");
    }
}

/// Controller and synthesizer alone, trained on the 8 kHz mel distance.
#[test]
fn low_rate_render_overfits_one_clip() {
    let config = Config::toy();
    let mut model = Model::<f64>::new(config.clone()).unwrap();
    let kit = LossKit::<f64>::new(&config).unwrap();
    let clip = tone_clip().crop(40, 100, 240, 40).unwrap();
    // Constant published peak rate; larger rates oscillate at the floor.
    let optim = OptimConfig {
        weight_decay: 0.0,
        ..OptimConfig::default()
    };
    let mut opt = AdamState::new(&model.g_params);
    let mut curve = Vec::new();
    for _ in 0..200 {
        let (loss, grads) = {
            let mut g = Graph::new();
            let mut p = Binder::new(&model.g_params, true);
            let f = &clip.features;
            let (m, f0, l) = (
                g.constant(f.mel.clone()),
                g.constant(f.f0.clone()),
                g.constant(f.loudness.clone()),
            );
            let c = model.generator.controller.forward(&mut g, &mut p, m, f0, l).unwrap();
            let ctrl = HnControls::from_heads(&mut g, c.harm, c.noise).unwrap();
            let out = model
                .generator
                .synth
                .render(&mut g, &mut p, ctrl, &f.f0_hz(), &mut Rng::new(5), true)
                .unwrap();
            let target = g.constant(Tensor::from_vec(clip.audio_low.clone()));
            let loss = mel_loss(&mut g, &kit.mel_low, out.audio.unwrap(), target, 8000).unwrap();
            g.backward(loss).unwrap();
            (g.value(loss).item(), p.grads(&g))
        };
        curve.push(loss);
        adamw_step(&mut model.g_params, &grads, &mut opt, optim.peak_lr, &optim).unwrap();
    }
    let smooth: Vec<f64> = curve.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
    let rises: Vec<usize> = (1..smooth.len()).filter(|&i| smooth[i] >= smooth[i - 1]).collect();
    println!("8 kHz mel distance {:.4} -> {:.4}", curve[0], curve[199]);
    assert!(rises.is_empty(), "smoothed curve rises at steps {rises:?}");
    assert!(curve[199] < 0.5 * curve[0]);
}
