pub mod eval;
pub mod extract;
pub mod synth;
pub mod train;
