//! Listener facial reaction generation from speaker audio-visual behaviour.

pub mod attention;
pub mod autograd;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod generator;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod plot;
pub mod seed;
pub mod speaker_encoder;
pub mod sync;
pub mod types;

pub use config::ModelConfig;
pub use error::{Error, Result};
pub use types::{AudioFeatureSequence, CoeffSequence, Session};
