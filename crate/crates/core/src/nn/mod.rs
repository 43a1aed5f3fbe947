//! Parameter storage and the layers every network is assembled from.

mod layers;
mod params;

pub use layers::{Conv1d, Conv2d, ConvTranspose1d, Gru, Linear, Mlp};
pub use params::{Binder, ParamBuilder, ParamId, ParamStore};
