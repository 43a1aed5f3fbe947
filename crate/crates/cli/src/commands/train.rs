//! Resumable training loop over an extracted feature directory.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use hnwave_core::config::Config;
use hnwave_core::generator::GenOptions;
use hnwave_core::train::{train_step, Clip, LossKit, Model, StepMetrics, TrainState};
use log::info;

use super::extract::{audio_path, low_audio_path, stem_of};
use crate::checkpoint;
use crate::error::{io_at, CliError, Result};
use crate::featfile::FeatureFile;
use crate::wav::read_wav;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const METRICS_FILE: &str = "metrics.jsonl";

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Stop after this many steps in this invocation (simulates an
    /// interruption; the run stays resumable).
    pub max_steps: Option<u64>,
    /// Feed zeros instead of the bridge latent (ablation).
    pub zero_latent: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub resumed_from: Option<u64>,
    pub final_step: u64,
    pub last: Option<StepMetrics>,
}

/// Every clip of an extracted directory, in name order.
pub fn load_clips(dir: &Path, config: &Config) -> Result<Vec<Clip<f64>>> {
    let g = &config.generator;
    let mut feats: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_at(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "feat"))
        .collect();
    feats.sort();
    if feats.is_empty() {
        return Err(CliError::user(format!("no feature files in {}", dir.display())));
    }
    let read = |p: &Path, rate: u32| -> Result<Vec<f64>> {
        let (x, sr) = read_wav(p)?;
        if sr != rate {
            return Err(CliError::user(format!("{}: {sr} Hz, expected {rate} Hz", p.display())));
        }
        Ok(x.into_iter().map(f64::from).collect())
    };
    feats
        .iter()
        .map(|p| {
            let f = FeatureFile::load(p)?;
            if f.sample_rate != g.sample_rate || f.hop != g.hop || f.features.n_mels() != g.controller.mel_dims {
                return Err(CliError::user(format!(
                    "{}: features are {} Hz / hop {} / {} mels, the model expects {} Hz / hop {} / {} mels",
                    p.display(),
                    f.sample_rate,
                    f.hop,
                    f.features.n_mels(),
                    g.sample_rate,
                    g.hop,
                    g.controller.mel_dims
                )));
            }
            let stem = stem_of(p);
            let clip = Clip {
                features: f.features,
                audio: read(&audio_path(dir, &stem), g.sample_rate)?,
                audio_low: read(&low_audio_path(dir, &stem), g.synth.sample_rate)?,
            };
            clip.validate(g.hop, g.synth.hop)?;
            Ok(clip)
        })
        .collect()
}

/// The parts of a configuration that must agree to continue a run; the
/// step budget and checkpoint interval may change.
fn resumable(a: &Config, b: &Config) -> bool {
    let strip = |c: &Config| {
        let mut c = c.clone();
        c.train.steps = 0;
        c.train.checkpoint_every = 0;
        c
    };
    strip(a) == strip(b)
}

/// Keep only metric records up to `step`, so a resumed run appends exactly
/// what an uninterrupted run would have written.
fn truncate_metrics(path: &Path, step: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let file = File::open(path).map_err(io_at(path))?;
    let mut kept = String::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_at(path))?;
        let rec: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
        if rec["step"].as_u64().is_some_and(|s| s <= step) {
            kept.push_str(&line);
            kept.push('\n');
        }
    }
    std::fs::write(path, kept).map_err(io_at(path))
}

pub fn train(config: &Config, data_dir: &Path, ckpt_dir: &Path, opts: &TrainOptions) -> Result<TrainSummary> {
    config.validate()?;
    let clips = load_clips(data_dir, config)?;
    std::fs::create_dir_all(ckpt_dir).map_err(io_at(ckpt_dir))?;
    let ckpt_path = ckpt_dir.join(CHECKPOINT_FILE);
    let metrics_path = ckpt_dir.join(METRICS_FILE);

    let (mut model, mut state, resumed_from) = if ckpt_path.exists() {
        let (mut model, state) = checkpoint::load(&ckpt_path)?;
        if !resumable(&model.config, config) {
            return Err(CliError::user(format!(
                "{} was trained with a different configuration; refusing to resume",
                ckpt_path.display()
            )));
        }
        model.config = config.clone();
        info!("resuming from step {}", state.step);
        let step = state.step;
        (model, state, Some(step))
    } else {
        let model = Model::new(config.clone())?;
        let state = TrainState::new(&model);
        (model, state, None)
    };
    truncate_metrics(&metrics_path, state.step)?;
    let mut metrics = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&metrics_path)
        .map_err(io_at(&metrics_path))?;

    let kit = LossKit::new(config)?;
    let gen_opts = GenOptions {
        training: true,
        zero_latent: opts.zero_latent,
    };
    let end = opts
        .max_steps
        .map_or(config.train.steps, |n| (state.step + n).min(config.train.steps));
    let mut last = None;
    while state.step < end {
        let m = train_step(&mut model, &mut state, &kit, &clips, gen_opts)?;
        let line = serde_json::to_string(&m).map_err(|e| CliError::Internal(e.to_string()))?;
        writeln!(metrics, "{line}").map_err(io_at(&metrics_path))?;
        if m.step % 10 == 0 || m.step == 1 {
            info!(
                "step {} lr {:.2e} total {:.4} recon {:.4} d {:.4}",
                m.step, m.lr, m.generator_total, m.reconstruction, m.discriminator
            );
        }
        let every = config.train.checkpoint_every.max(1);
        if m.step % every == 0 || m.step == end {
            checkpoint::save(&ckpt_path, &model, &state)?;
        }
        last = Some(m);
    }
    metrics.flush().map_err(io_at(&metrics_path))?;
    Ok(TrainSummary {
        resumed_from,
        final_step: state.step,
        last,
    })
}

/// All metric records of a run directory.
pub fn read_metrics(ckpt_dir: &Path) -> Result<Vec<StepMetrics>> {
    let path = ckpt_dir.join(METRICS_FILE);
    let text = std::fs::read_to_string(&path).map_err(io_at(&path))?;
    text.lines()
        .map(|l| serde_json::from_str(l).map_err(|e| CliError::user(format!("{}: {e}", path.display()))))
        .collect()
}
