//! Training checkpoints: configuration, step, both parameter sets, both
//! optimizer states and the position of the random stream.

use std::path::Path;

use hnwave_core::nn::ParamStore;
use hnwave_core::train::{step_rng, AdamState, Model, TrainState};
use hnwave_core::{RngState, Tensor};

use crate::container::{Container, Kind};
use crate::error::{CliError, Result};
use crate::runconfig::{config_from_toml, config_to_toml};

fn push_store(c: &mut Container, prefix: &str, store: &ParamStore<f64>, tensors: &[Tensor<f64>]) -> Result<()> {
    for (id, t) in store.ids().zip(tensors) {
        c.push(format!("{prefix}/{}", store.name(id)), t.shape(), t.data().to_vec())?;
    }
    Ok(())
}

fn read_store(c: &Container, prefix: &str, like: &ParamStore<f64>) -> Result<Vec<Tensor<f64>>> {
    like.ids()
        .map(|id| {
            let name = format!("{prefix}/{}", like.name(id));
            let a = c.get(&name)?;
            if a.shape != like.get(id).shape() {
                return Err(CliError::user(format!(
                    "`{name}` has shape {:?}, the configuration needs {:?}",
                    a.shape,
                    like.get(id).shape()
                )));
            }
            Ok(Tensor::new(&a.shape, a.data.clone())?)
        })
        .collect()
}

fn adam_to(c: &mut Container, prefix: &str, store: &ParamStore<f64>, s: &AdamState<f64>) -> Result<()> {
    c.set_meta(&format!("{prefix}.step"), s.step);
    push_store(c, &format!("{prefix}.m"), store, &s.m)?;
    push_store(c, &format!("{prefix}.v"), store, &s.v)
}

fn adam_from(c: &Container, prefix: &str, store: &ParamStore<f64>) -> Result<AdamState<f64>> {
    Ok(AdamState {
        step: c.meta_parse(&format!("{prefix}.step"))?,
        m: read_store(c, &format!("{prefix}.m"), store)?,
        v: read_store(c, &format!("{prefix}.v"), store)?,
    })
}

pub fn to_container(model: &Model<f64>, state: &TrainState<f64>) -> Result<Container> {
    let mut c = Container::new(Kind::Checkpoint);
    c.set_meta("config", config_to_toml(&model.config)?);
    c.set_meta("step", state.step);
    // Step randomness is a pure function of (seed, step); the position of
    // the next step's stream is stored so a reader can verify it.
    let next = step_rng(model.config.train.seed, state.step + 1).state();
    c.set_meta("rng.seed", next.seed);
    c.set_meta("rng.stream", next.stream);
    c.set_meta("rng.word_pos", next.word_pos);
    push_store(&mut c, "g", &model.g_params, model.g_params.tensors())?;
    push_store(&mut c, "d", &model.d_params, model.d_params.tensors())?;
    adam_to(&mut c, "g_opt", &model.g_params, &state.g_opt)?;
    adam_to(&mut c, "d_opt", &model.d_params, &state.d_opt)?;
    Ok(c)
}

pub fn from_container(c: &Container) -> Result<(Model<f64>, TrainState<f64>)> {
    let config = config_from_toml(c.meta("config")?)?;
    let mut model = Model::new(config)?;
    for (prefix, store) in [("g", &mut model.g_params), ("d", &mut model.d_params)] {
        let tensors = read_store(c, prefix, store)?;
        for (dst, src) in store.tensors_mut().iter_mut().zip(tensors) {
            *dst = src;
        }
    }
    let state = TrainState {
        step: c.meta_parse("step")?,
        g_opt: adam_from(c, "g_opt", &model.g_params)?,
        d_opt: adam_from(c, "d_opt", &model.d_params)?,
    };
    let stored = RngState {
        seed: c.meta_parse("rng.seed")?,
        stream: c.meta_parse("rng.stream")?,
        word_pos: c.meta_parse("rng.word_pos")?,
    };
    if stored != step_rng(model.config.train.seed, state.step + 1).state() {
        return Err(CliError::user(
            "random stream position does not match the stored seed and step",
        ));
    }
    Ok((model, state))
}

pub fn save(path: &Path, model: &Model<f64>, state: &TrainState<f64>) -> Result<()> {
    to_container(model, state)?.save(path)
}

pub fn load(path: &Path) -> Result<(Model<f64>, TrainState<f64>)> {
    from_container(&Container::load(path, Kind::Checkpoint)?).map_err(|e| match e {
        CliError::User(m) => CliError::user(format!("{}: {m}", path.display())),
        other => other,
    })
}
