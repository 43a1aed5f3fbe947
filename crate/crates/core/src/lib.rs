//! Harmonic-plus-noise guided GAN vocoder: a reverse-mode differentiation
//! engine, DSP front end, differentiable synthesizer, generator,
//! discriminators and training objectives.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`). Training
//! and gradient checks run at `f64`; the aliases below name the common
//! concrete instantiations.

pub mod autodiff;
pub mod config;
pub mod discriminators;
pub mod dsp;
pub mod error;
pub mod features;
pub mod generator;
pub mod losses;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod tensor;
#[cfg(any(test, feature = "testkit"))]
pub mod testkit;
pub mod train;

pub use autodiff::{Graph, Var};
pub use error::{Error, Result};
pub use rng::{Rng, RngState};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Graph64 = Graph<f64>;
pub type Audio64 = dsp::AudioBuffer<f64>;
pub type Audio32 = dsp::AudioBuffer<f32>;
