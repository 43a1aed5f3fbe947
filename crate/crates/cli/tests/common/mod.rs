#![allow(dead_code)]

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use hnwave_cli::wav::write_wav;
use hnwave_core::config::Config;
use hnwave_core::testkit::signals::sung_vowel;

pub const MICRO: &[&str] = &["preset=\"micro\""];

pub fn micro() -> Config {
    hnwave_cli::runconfig::RunConfig::from_toml("", &strings(MICRO))
        .unwrap()
        .model
}

pub fn strings(s: &[&str]) -> Vec<String> {
    s.iter().map(|s| s.to_string()).collect()
}

/// Steady tone with a few decaying partials.
pub fn tone(samples: usize, f0: f64) -> Vec<f64> {
    (0..samples)
        .map(|t| {
            let p = TAU * f0 * t as f64 / 48000.0;
            0.3 * (p.sin() + 0.5 * (2.0 * p).sin() + 0.25 * (3.0 * p).sin())
        })
        .collect()
}

pub fn write(path: &Path, x: &[f64], rate: u32) {
    let v: Vec<f32> = x.iter().map(|&s| s as f32).collect();
    write_wav(path, &v, rate).unwrap();
}

/// A directory of `n` half-second sung vowels named `clip<i>.wav`.
pub fn corpus(dir: &Path, n: usize) -> Vec<PathBuf> {
    std::fs::create_dir_all(dir).unwrap();
    (0..n)
        .map(|i| {
            let p = dir.join(format!("clip{i}.wav"));
            write(&p, &sung_vowel(24000, 240, i as u64).0, 48000);
            p
        })
        .collect()
}

pub fn hnwave() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_hnwave"))
}
