//! Multi-channel acoustic front-end layers for far-field speech classification.
//!
//! The crate is organised bottom-up:
//!
//! * [`frontend`] frames PCM into DFT spectra, normalises them and stacks them
//!   at a low frame rate.
//! * [`array`] models the microphone array and designs superdirective
//!   beamformer weights.
//! * [`layers`] holds the trainable multi-channel layers (block affine
//!   transform, power, frequency aligned network, affine) and the six
//!   multi-channel module variants built from them.
//! * [`fe`] is the mel-initialised feature extraction layer.
//! * [`train`] implements backpropagation, Adam and stage-wise training.
//! * [`sim`] renders labelled synthetic multi-channel scenes.
//! * [`io`] reads and writes WAV, feature, manifest and checkpoint files.

pub mod array;
pub mod dataset;
pub mod error;
pub mod fe;
pub mod frontend;
pub mod io;
pub mod layers;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
pub use num_complex::Complex64;
