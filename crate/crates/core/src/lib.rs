//! Core numerics for a seasonal neural radiance field over satellite scenes.
//!
//! The crate is `no_std` compatible (it needs `alloc`). Everything here is a
//! pure function of its inputs: camera models, the solar ephemeris, the
//! positional encoding, the network with its hand-written reverse pass, the
//! volume compositor, losses, the optimizer, image metrics and a procedural
//! scene generator used as a ground-truth oracle. File formats, threading,
//! the training driver and the command line live in the `satfield` crate.
//!
//! Scene frame conventions:
//!
//! * geographic inputs are (lat, lon) in degrees and altitude in meters;
//! * a [`camera::LocalFrame`] linearizes them to east/north/up meters;
//! * [`camera::SceneNormalizer`] maps the scene bounds onto `[-1, 1]^3`, which
//!   is the domain the network consumes.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod camera;
pub mod dataset;
pub mod date;
pub mod encoding;
pub mod error;
pub mod field;
pub mod image;
pub mod loss;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod render;
pub mod solar;
pub mod step;
pub mod synthetic;

pub use error::{Error, Result};
