//! Feature extraction over a directory of WAV files.

use std::path::{Path, PathBuf};

use hnwave_core::config::Config;
use hnwave_core::dsp::{resample, AudioBuffer, MelConfig};
use hnwave_core::features::{extract_features, FeatureFrames, MelStats};
use log::{info, warn};

use crate::error::{io_at, CliError, Result};
use crate::featfile::FeatureFile;
use crate::wav::{read_wav, write_wav};

pub const STATS_FILE: &str = "stats.json";

/// Files written per clip: `<stem>.feat`, `<stem>.wav` (48 kHz reference)
/// and `<stem>.8k.wav` (low-rate target).
pub fn feature_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.feat"))
}

pub fn audio_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.wav"))
}

pub fn low_audio_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.8k.wav"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractReport {
    pub clips: Vec<String>,
    /// `(file name, reason)` of every skipped input.
    pub skipped: Vec<(String, String)>,
    pub stats: MelStats,
}

struct Analysed {
    stem: String,
    audio: Vec<f64>,
    low: Vec<f64>,
    raw: FeatureFrames<f64>,
}

/// Sorted `*.wav` files of a directory, excluding derived low-rate files.
pub fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_at(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .filter(|p| !p.to_string_lossy().ends_with(".8k.wav"))
        .collect();
    out.sort();
    Ok(out)
}

pub fn stem_of(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn analyse(path: &Path, mel: &MelConfig, sample_rate: u32, hop: usize, low_rate: u32) -> Result<Analysed> {
    let (samples, sr) = read_wav(path)?;
    let mut audio = AudioBuffer::new(samples.into_iter().map(f64::from).collect::<Vec<_>>(), sr);
    if sr != sample_rate {
        warn!("{}: resampling {sr} Hz to {sample_rate} Hz", path.display());
        audio = resample(&audio, sample_rate)?;
    }
    let frames = audio.len() / hop;
    if frames == 0 {
        return Err(CliError::user(format!("shorter than one {hop}-sample frame")));
    }
    audio.samples.truncate(frames * hop);
    let raw = extract_features(&audio, mel)?;
    let low = resample(&audio, low_rate)?;
    Ok(Analysed {
        stem: stem_of(path),
        audio: audio.samples,
        low: low.samples,
        raw,
    })
}

/// Analyse every WAV in `in_dir` and write normalized feature files and
/// audio targets to `out_dir`. Unreadable files are skipped with a logged
/// reason; an empty corpus is an error. Output is byte-deterministic.
pub fn extract(in_dir: &Path, out_dir: &Path, config: &Config) -> Result<ExtractReport> {
    let g = &config.generator;
    let mel = MelConfig {
        n_mels: g.controller.mel_dims,
        ..MelConfig::analysis_48k()
    };
    if mel.sample_rate != g.sample_rate || mel.stft.hop != g.hop {
        return Err(CliError::user(format!(
            "feature analysis runs at {} Hz / hop {}, the model expects {} Hz / hop {}",
            mel.sample_rate, mel.stft.hop, g.sample_rate, g.hop
        )));
    }
    let files = wav_files(in_dir)?;
    // Files are independent; analyse them on a small worker pool and keep
    // the sorted order.
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(files.len().max(1));
    let mut results: Vec<Option<Result<Analysed>>> = (0..files.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        for (w, chunk) in results.chunks_mut(files.len().div_ceil(workers).max(1)).enumerate() {
            let files = &files;
            let mel = &mel;
            let base = w * files.len().div_ceil(workers).max(1);
            s.spawn(move || {
                for (i, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(analyse(
                        &files[base + i],
                        mel,
                        g.sample_rate,
                        g.hop,
                        g.synth.sample_rate,
                    ));
                }
            });
        }
    });
    let mut clips = Vec::new();
    let mut skipped = Vec::new();
    for (path, r) in files.iter().zip(results) {
        match r.expect("every file analysed") {
            Ok(a) => clips.push(a),
            Err(e) => {
                let name = path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                warn!("skipping {name}: {}", e.line());
                skipped.push((name, e.line()));
            }
        }
    }
    if clips.is_empty() {
        return Err(CliError::user(format!("no usable WAV files in {}", in_dir.display())));
    }
    let stats = MelStats::compute(clips.iter().map(|c| &c.raw.mel))?;
    std::fs::create_dir_all(out_dir).map_err(io_at(out_dir))?;
    for c in &clips {
        let mut features = c.raw.clone();
        features.mel = stats.normalize(&features.mel)?;
        let file = FeatureFile {
            sample_rate: g.sample_rate,
            hop: g.hop,
            features,
            stats: stats.clone(),
        };
        file.save(&feature_path(out_dir, &c.stem))?;
        let f32s = |x: &[f64]| x.iter().map(|&v| v as f32).collect::<Vec<f32>>();
        write_wav(&audio_path(out_dir, &c.stem), &f32s(&c.audio), g.sample_rate)?;
        write_wav(&low_audio_path(out_dir, &c.stem), &f32s(&c.low), g.synth.sample_rate)?;
        info!("{}: {} frames", c.stem, file.frames());
    }
    let stats_path = out_dir.join(STATS_FILE);
    let json = serde_json::json!({ "mean": stats.mean, "std": stats.std, "clips": clips.len() });
    std::fs::write(&stats_path, serde_json::to_string_pretty(&json).expect("json") + "\n")
        .map_err(io_at(&stats_path))?;
    Ok(ExtractReport {
        clips: clips.into_iter().map(|c| c.stem).collect(),
        skipped,
        stats,
    })
}
