//! File formats, training, evaluation and experiment drivers on top of
//! `satfield-core`.

pub mod bundle;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod imageio;
pub mod sweep;
pub mod synth;
pub mod time;
pub mod trainer;

pub use satfield_core as core;
