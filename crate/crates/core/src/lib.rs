//! Radar micro-Doppler gait analysis: simulation, time-frequency representations,
//! feature extraction, subspace projection and nearest-neighbour classification.

pub mod cvd;
pub mod dsp;
pub mod error;
pub mod features;
pub mod io;
pub mod ml;
pub mod pipeline;
pub mod sim;
pub mod subspace;

pub use error::{Error, Result};
