mod common;

use common::*;
use hnwave_cli::commands::eval::eval;
use hnwave_cli::commands::extract::{extract, feature_path, STATS_FILE};
use hnwave_cli::commands::synth::synth;
use hnwave_cli::commands::train::{read_metrics, train, TrainOptions, CHECKPOINT_FILE};
use hnwave_cli::featfile::FeatureFile;
use hnwave_cli::wav::read_wav;
use tempfile::tempdir;

#[test]
fn extract_one_second_gives_two_hundred_frames() {
    let d = tempdir().unwrap();
    let (src, out) = (d.path().join("in"), d.path().join("out"));
    std::fs::create_dir_all(&src).unwrap();
    write(&src.join("a.wav"), &tone(48000, 220.0), 48000);
    let r = extract(&src, &out, &micro()).unwrap();
    assert_eq!(r.clips, ["a"]);
    let f = FeatureFile::load(&feature_path(&out, "a")).unwrap();
    assert_eq!(f.frames(), 200);
    assert_eq!(read_wav(&out.join("a.wav")).unwrap().0.len(), 48000);
    assert_eq!(read_wav(&out.join("a.8k.wav")).unwrap().0.len(), 8000);
    assert!(out.join(STATS_FILE).exists());
}

#[test]
fn extract_normalizes_over_the_corpus() {
    let d = tempdir().unwrap();
    let (src, out) = (d.path().join("in"), d.path().join("out"));
    corpus(&src, 3);
    let r = extract(&src, &out, &micro()).unwrap();
    let m = r.stats.mean.len();
    let (mut sum, mut sq, mut n) = (vec![0.0; m], vec![0.0; m], 0.0);
    for stem in &r.clips {
        let f = FeatureFile::load(&feature_path(&out, stem)).unwrap();
        assert_eq!(f.stats, r.stats);
        for row in f.features.mel.data().chunks(m) {
            for (k, v) in row.iter().enumerate() {
                sum[k] += v;
                sq[k] += v * v;
            }
            n += 1.0;
        }
    }
    for k in 0..m {
        let mean = sum[k] / n;
        assert!(mean.abs() < 1e-9, "band {k} mean {mean}");
        assert!((sq[k] / n - mean * mean - 1.0).abs() < 1e-6, "band {k}");
    }
}

#[test]
fn extract_is_byte_deterministic() {
    let d = tempdir().unwrap();
    let src = d.path().join("in");
    corpus(&src, 2);
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    extract(&src, &a, &micro()).unwrap();
    extract(&src, &b, &micro()).unwrap();
    for name in ["clip0.feat", "clip1.feat", "clip0.wav", "clip1.8k.wav", STATS_FILE] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn extract_skips_corrupt_files_and_rejects_empty_corpora() {
    let d = tempdir().unwrap();
    let (src, out) = (d.path().join("in"), d.path().join("out"));
    corpus(&src, 1);
    std::fs::write(src.join("broken.wav"), b"RIFF not really").unwrap();
    let r = extract(&src, &out, &micro()).unwrap();
    assert_eq!(r.clips, ["clip0"]);
    assert_eq!(r.skipped.len(), 1);
    assert_eq!(r.skipped[0].0, "broken.wav");

    let empty = d.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    std::fs::write(empty.join("broken.wav"), b"nope").unwrap();
    let e = extract(&empty, &d.path().join("o2"), &micro()).unwrap_err();
    assert_eq!(e.exit_code(), 1);
}

fn extracted(d: &std::path::Path) -> std::path::PathBuf {
    let out = d.join("data");
    corpus(&d.join("in"), 2);
    extract(&d.join("in"), &out, &micro()).unwrap();
    out
}

#[test]
fn interrupted_training_resumes_bit_identically() {
    let d = tempdir().unwrap();
    let data = extracted(d.path());
    let mut cfg = micro();
    cfg.train.steps = 6;
    cfg.train.checkpoint_every = 2;
    let (straight, split) = (d.path().join("straight"), d.path().join("split"));
    train(&cfg, &data, &straight, &TrainOptions::default()).unwrap();
    let first = train(
        &cfg,
        &data,
        &split,
        &TrainOptions {
            max_steps: Some(3),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!((first.resumed_from, first.final_step), (None, 3));
    let second = train(&cfg, &data, &split, &TrainOptions::default()).unwrap();
    assert_eq!((second.resumed_from, second.final_step), (Some(3), 6));
    assert_eq!(
        std::fs::read(straight.join(CHECKPOINT_FILE)).unwrap(),
        std::fs::read(split.join(CHECKPOINT_FILE)).unwrap()
    );
    assert_eq!(read_metrics(&straight).unwrap(), read_metrics(&split).unwrap());
}

#[test]
fn metrics_log_every_term_and_resume_refuses_other_configs() {
    let d = tempdir().unwrap();
    let data = extracted(d.path());
    let mut cfg = micro();
    cfg.train.steps = 2;
    let ckpt = d.path().join("ck");
    train(&cfg, &data, &ckpt, &TrainOptions::default()).unwrap();
    let text = std::fs::read_to_string(ckpt.join("metrics.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 2);
    let rec: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    for key in [
        "step",
        "lr",
        "spectral",
        "mel_low",
        "mel_high",
        "reconstruction",
        "adversarial",
        "feature_match",
        "generator_total",
        "discriminator",
    ] {
        assert!(rec[key].is_number(), "{key} missing from {rec}");
    }
    cfg.optim.peak_lr *= 2.0;
    let e = train(&cfg, &data, &ckpt, &TrainOptions::default()).unwrap_err();
    assert!(e.line().contains("different configuration"), "{}", e.line());
}

#[test]
fn synth_renders_the_full_length_deterministically() {
    let d = tempdir().unwrap();
    let data = extracted(d.path());
    let mut cfg = micro();
    cfg.train.steps = 1;
    let ckpt = d.path().join("ck");
    train(&cfg, &data, &ckpt, &TrainOptions::default()).unwrap();
    let feat = feature_path(&data, "clip0");
    let frames = FeatureFile::load(&feat).unwrap().frames();
    let (a, b) = (d.path().join("a.wav"), d.path().join("b.wav"));
    let r = synth(&ckpt.join(CHECKPOINT_FILE), &feat, &a, 5).unwrap();
    synth(&ckpt.join(CHECKPOINT_FILE), &feat, &b, 5).unwrap();
    assert_eq!(r.samples, 240 * frames);
    assert!(r.rtf > 0.0 && r.rtf.is_finite());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn eval_scores_identity_shift_and_pairing() {
    let d = tempdir().unwrap();
    let (r, g) = (d.path().join("ref"), d.path().join("gen"));
    std::fs::create_dir_all(&r).unwrap();
    std::fs::create_dir_all(&g).unwrap();
    let f0 = 200.0;
    write(&r.join("a.wav"), &tone(48000, f0), 48000);
    write(&r.join("b.wav"), &tone(48000, 300.0), 48000);
    write(&r.join("only_ref.wav"), &tone(4800, f0), 48000);
    write(&g.join("a.wav"), &tone(48000, f0), 48000);
    write(&g.join("b.wav"), &tone(48000, 300.0 * 2f64.powf(1.0 / 12.0)), 48000);
    let rep = eval(&r, &g).unwrap();
    assert_eq!(rep.pairs.len(), 2);
    assert_eq!(rep.aggregate.pairs, 2);
    assert_eq!(rep.unpaired, ["only_ref"]);
    let a = &rep.pairs[0];
    assert_eq!(
        (a.spectral, a.mel, a.f0_rmse, a.voicing_agreement),
        (0.0, 0.0, 0.0, 1.0)
    );
    let b = &rep.pairs[1];
    let rel = b.f0_rmse / 300.0;
    let semitone = 2f64.powf(1.0 / 12.0) - 1.0;
    assert!(
        (rel - semitone).abs() < 0.003,
        "relative error {rel}, expected {semitone}"
    );
}

#[test]
fn binary_reports_errors_with_exit_codes() {
    let d = tempdir().unwrap();
    let missing = d.path().join("nope");
    let out = hnwave()
        .args(["extract", "--in"])
        .arg(&missing)
        .arg("--out")
        .arg(d.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: "), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");

    let out = hnwave()
        .args(["train", "--set", "nonsense.key=1", "--data", "x", "--ckpt", "y"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = hnwave().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn binary_runs_the_whole_pipeline() {
    let d = tempdir().unwrap();
    corpus(&d.path().join("in"), 1);
    let p = |s: &str| d.path().join(s);
    let ok = |c: &mut std::process::Command| {
        let o = c.env("RUST_LOG", "warn").output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    ok(hnwave()
        .args(["extract", "--set", MICRO[0], "--in"])
        .arg(p("in"))
        .arg("--out")
        .arg(p("data")));
    ok(hnwave()
        .args(["train", "--set", MICRO[0], "--set", "train.steps=1", "--data"])
        .arg(p("data"))
        .arg("--ckpt")
        .arg(p("ck")));
    std::fs::create_dir_all(p("gen")).unwrap();
    let s = ok(hnwave()
        .arg("synth")
        .arg("--ckpt")
        .arg(p("ck/checkpoint.bin"))
        .arg("--features")
        .arg(p("data/clip0.feat"))
        .arg("--out")
        .arg(p("gen/clip0.wav")));
    assert!(s.contains("RTF"), "{s}");
    ok(hnwave()
        .arg("eval")
        .arg("--ref")
        .arg(p("in"))
        .arg("--gen")
        .arg(p("gen"))
        .arg("--out")
        .arg(p("report.json")));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p("report.json")).unwrap()).unwrap();
    assert_eq!(rep["aggregate"]["pairs"], 1);
}
