//! Per-clip conditioning features with the corpus normalization stats.

use std::path::Path;

use hnwave_core::features::{FeatureFrames, MelStats};
use hnwave_core::Tensor;

use crate::container::{Container, Kind};
use crate::error::{CliError, Result};

/// Normalized mel, pitch and loudness of one clip, plus the statistics that
/// normalized it (needed to undo the normalization).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFile {
    pub sample_rate: u32,
    pub hop: usize,
    pub features: FeatureFrames<f64>,
    pub stats: MelStats,
}

impl FeatureFile {
    pub fn frames(&self) -> usize {
        self.features.num_frames()
    }

    pub fn to_container(&self) -> Result<Container> {
        let f = &self.features;
        let (b, m) = (f.num_frames(), f.n_mels());
        let mut c = Container::new(Kind::Features);
        c.set_meta("sample_rate", self.sample_rate);
        c.set_meta("hop", self.hop);
        c.set_meta("frames", b);
        c.set_meta("n_mels", m);
        c.push("mel", &[b, m], f.mel.data().to_vec())?;
        c.push("f0", &[b], f.f0.data().to_vec())?;
        c.push("loudness", &[b], f.loudness.data().to_vec())?;
        c.push("stats.mean", &[m], self.stats.mean.clone())?;
        c.push("stats.std", &[m], self.stats.std.clone())?;
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let b: usize = c.meta_parse("frames")?;
        let m: usize = c.meta_parse("n_mels")?;
        let expect = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
            let a = c.get(name)?;
            if a.shape != shape {
                return Err(CliError::user(format!(
                    "array `{name}` has shape {:?} but the header declares {shape:?}",
                    a.shape
                )));
            }
            Ok(a.data.clone())
        };
        let features = FeatureFrames::new(
            Tensor::new(&[b, m], expect("mel", &[b, m])?)?,
            Tensor::from_vec(expect("f0", &[b])?),
            Tensor::from_vec(expect("loudness", &[b])?),
        )?;
        Ok(Self {
            sample_rate: c.meta_parse("sample_rate")?,
            hop: c.meta_parse("hop")?,
            features,
            stats: MelStats {
                mean: expect("stats.mean", &[m])?,
                std: expect("stats.std", &[m])?,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path, Kind::Features)?)
            .map_err(|e| CliError::user(format!("{}: {e}", path.display())))
    }
}
