//! Run configuration: a TOML file layered over a named preset, with
//! `key.path=value` overrides applied last.
//!
//! ```toml
//! preset = "toy"          # "full" (default), "toy" or "micro"
//!
//! [paths]
//! data_dir = "features"
//! ckpt_dir = "run"
//!
//! [optim]
//! peak_lr = 1e-3
//! ```
//!
//! Every other table mirrors the model configuration. Unknown keys anywhere
//! are rejected.

use std::path::{Path, PathBuf};

use hnwave_core::config::Config;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{io_at, CliError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data_dir: Option<PathBuf>,
    pub ckpt_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    pub paths: Paths,
    pub model: Config,
}

pub fn preset(name: &str) -> Result<Config> {
    match name {
        "full" => Ok(Config::default()),
        "toy" => Ok(Config::toy()),
        "micro" => Ok(Config::micro()),
        other => Err(CliError::user(format!(
            "unknown preset `{other}` (expected full, toy or micro)"
        ))),
    }
}

/// Parse `a.b.c=value`. The value is read as a TOML value when possible
/// (numbers, booleans, arrays) and as a bare string otherwise.
pub fn parse_override(s: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| CliError::user(format!("override `{s}` is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(CliError::user(format!("override `{s}` has an empty key segment")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((path, value))
}

fn set_path(table: &mut Table, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.clone()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::user(format!("`{p}` is not a table")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// Recursively overlay `top` onto `base`; tables merge, everything else
/// replaces.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    /// Build from TOML text (may be empty) and overrides, which win.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut user: Table = toml::from_str(text).map_err(|e| CliError::user(format!("config: {}", e.message())))?;
        for o in overrides {
            let (path, value) = parse_override(o)?;
            set_path(&mut user, &path, value)?;
        }
        let preset_name = match user.remove("preset") {
            None => "full".to_string(),
            Some(Value::String(s)) => s,
            Some(v) => return Err(CliError::user(format!("preset must be a string, got {v}"))),
        };
        let paths: Paths = match user.remove("paths") {
            None => Paths::default(),
            Some(v) => v
                .try_into()
                .map_err(|e: toml::de::Error| CliError::user(format!("config [paths]: {}", e.message())))?,
        };
        let base = preset(&preset_name)?;
        let mut table = Table::try_from(&base).map_err(|e| CliError::Internal(e.to_string()))?;
        merge(&mut table, user);
        let model: Config = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::user(format!("config: {}", e.message())))?;
        model.validate()?;
        Ok(Self {
            preset: preset_name,
            paths,
            model,
        })
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(io_at(p))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }
}

/// Canonical text of a model configuration, used in checkpoints.
pub fn config_to_toml(c: &Config) -> Result<String> {
    toml::to_string(c).map_err(|e| CliError::Internal(format!("config serialization: {e}")))
}

pub fn config_from_toml(s: &str) -> Result<Config> {
    let c: Config = toml::from_str(s).map_err(|e| CliError::user(format!("stored config: {}", e.message())))?;
    c.validate()?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_full_defaults() {
        let r = RunConfig::from_toml("", &[]).unwrap();
        assert_eq!(r.model, Config::default());
        assert_eq!(r.preset, "full");
        let w = &r.model.loss.weights;
        assert_eq!(
            (w.spectral, w.feature_match, w.mel, w.adversarial),
            (10.0, 1.0, 1.0, 120.0)
        );
        assert_eq!(
            (r.model.optim.beta1, r.model.optim.beta2, r.model.optim.warmup_steps),
            (0.8, 0.99, 5000)
        );
    }

    #[test]
    fn preset_file_and_flags_layer_in_order() {
        let text = "preset = \"toy\"\n[optim]\npeak_lr = 0.001\n[train]\nsteps = 10\n[paths]\ndata_dir = \"d\"\n";
        let r = RunConfig::from_toml(text, &["train.steps=7".into(), "train.seed=99".into()]).unwrap();
        let mut want = Config::toy();
        want.optim.peak_lr = 0.001;
        want.train.steps = 7;
        want.train.seed = 99;
        assert_eq!(r.model, want);
        assert_eq!(r.paths.data_dir, Some(PathBuf::from("d")));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[optim]\npeak_rate = 1.0\n", &[]).is_err());
        assert!(RunConfig::from_toml("colour = 1\n", &[]).is_err());
        assert!(RunConfig::from_toml("[paths]\nout = \"x\"\n", &[]).is_err());
        assert!(RunConfig::from_toml("", &["train.nope=1".into()]).is_err());
        assert!(RunConfig::from_toml("preset = \"huge\"\n", &[]).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_toml("[loss.weights]\nspectral = -1.0\n", &[]).is_err());
        assert!(RunConfig::from_toml("", &["generator.hop=250".into()]).is_err());
    }

    #[test]
    fn stored_config_round_trips() {
        let c = Config::toy();
        assert_eq!(config_from_toml(&config_to_toml(&c).unwrap()).unwrap(), c);
    }
}
