//! MAEPose at desk scale: FMCW radar simulation, spectrogram extraction,
//! masked-autoencoder pre-training and heatmap pose fine-tuning, evaluated
//! leave-one-person-out.

pub mod dataset;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod radar;
pub mod scene;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
