//! Objective comparison of generated audio against references.

use std::collections::BTreeSet;
use std::path::Path;

use hnwave_core::config::default_stft_sets;
use hnwave_core::dsp::{resample, yin_pitch, AudioBuffer, MelConfig, YinConfig};
use hnwave_core::losses::{mel_distance, spectral_distance};
use serde::Serialize;

use super::extract::{stem_of, wav_files};
use crate::error::{CliError, Result};
use crate::wav::read_wav;

const RATE: u32 = 48000;
const HOP: usize = 240;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairReport {
    pub stem: String,
    pub spectral: f64,
    pub mel: f64,
    /// RMS pitch error in Hz over frames voiced in both signals.
    pub f0_rmse: f64,
    pub voiced_frames: usize,
    /// Fraction of frames on which both signals agree about voicing.
    pub voicing_agreement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub pairs: usize,
    pub spectral: f64,
    pub mel: f64,
    /// Pooled over all voiced frames of all pairs.
    pub f0_rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub pairs: Vec<PairReport>,
    pub aggregate: Aggregate,
    /// Files present on only one side, excluded from the report.
    pub unpaired: Vec<String>,
}

fn load_48k(path: &Path) -> Result<Vec<f64>> {
    let (x, sr) = read_wav(path)?;
    let a = AudioBuffer::new(x.into_iter().map(f64::from).collect::<Vec<_>>(), sr);
    Ok(if sr == RATE {
        a.samples
    } else {
        resample(&a, RATE)?.samples
    })
}

/// Pitch error over frames voiced in both tracks, with the count of such
/// frames and the voicing agreement over all frames.
pub fn f0_error(reference: &[f64], estimate: &[f64]) -> (f64, usize, f64) {
    let n = reference.len().min(estimate.len());
    let (mut se, mut voiced, mut agree) = (0.0, 0, 0);
    for (&r, &e) in reference[..n].iter().zip(&estimate[..n]) {
        if (r > 0.0) == (e > 0.0) {
            agree += 1;
        }
        if r > 0.0 && e > 0.0 {
            se += (r - e) * (r - e);
            voiced += 1;
        }
    }
    let rmse = if voiced == 0 { 0.0 } else { (se / voiced as f64).sqrt() };
    (rmse, voiced, if n == 0 { 1.0 } else { agree as f64 / n as f64 })
}

pub fn compare(stem: &str, reference: &[f64], generated: &[f64]) -> Result<(PairReport, f64)> {
    let n = reference.len().min(generated.len());
    let r = AudioBuffer::new(reference[..n].to_vec(), RATE);
    let g = AudioBuffer::new(generated[..n].to_vec(), RATE);
    let spectral = spectral_distance(&g, &r, &default_stft_sets())?;
    let mel = mel_distance(&g, &r, &MelConfig::analysis_48k())?;
    let yin = YinConfig::new(HOP);
    let (f0_rmse, voiced_frames, voicing_agreement) =
        f0_error(&yin_pitch(&r, &yin).to_f64_vec(), &yin_pitch(&g, &yin).to_f64_vec());
    let report = PairReport {
        stem: stem.to_string(),
        spectral,
        mel,
        f0_rmse,
        voiced_frames,
        voicing_agreement,
    };
    Ok((report, f0_rmse * f0_rmse * voiced_frames as f64))
}

/// Pair files by stem and compare each pair. Lengths are cropped to the
/// shorter file; other rates are resampled to 48 kHz.
pub fn eval(ref_dir: &Path, gen_dir: &Path) -> Result<EvalReport> {
    let refs = wav_files(ref_dir)?;
    let gens = wav_files(gen_dir)?;
    let ref_stems: BTreeSet<String> = refs.iter().map(|p| stem_of(p)).collect();
    let gen_stems: BTreeSet<String> = gens.iter().map(|p| stem_of(p)).collect();
    let unpaired: Vec<String> = ref_stems.symmetric_difference(&gen_stems).cloned().collect();
    let mut pairs = Vec::new();
    let mut pooled = (0.0, 0usize);
    for stem in ref_stems.intersection(&gen_stems) {
        let r = load_48k(&ref_dir.join(format!("{stem}.wav")))?;
        let g = load_48k(&gen_dir.join(format!("{stem}.wav")))?;
        let (pair, sq) = compare(stem, &r, &g).map_err(|e| CliError::user(format!("{stem}: {}", e.line())))?;
        pooled.0 += sq;
        pooled.1 += pair.voiced_frames;
        pairs.push(pair);
    }
    if pairs.is_empty() {
        return Err(CliError::user("no paired files to evaluate"));
    }
    let k = pairs.len() as f64;
    let aggregate = Aggregate {
        pairs: pairs.len(),
        spectral: pairs.iter().map(|p| p.spectral).sum::<f64>() / k,
        mel: pairs.iter().map(|p| p.mel).sum::<f64>() / k,
        f0_rmse: if pooled.1 == 0 {
            0.0
        } else {
            (pooled.0 / pooled.1 as f64).sqrt()
        },
    };
    Ok(EvalReport {
        pairs,
        aggregate,
        unpaired,
    })
}
