//! Audio match cut retrieval and transition rendering.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`audio_io`] ingests WAV audio as 48 kHz mono and cuts it into
//!    one-second frames.
//! 2. [`dsp`] turns frames into log-Mel or MFCC spectrograms and flattens
//!    them into base features; [`embedding`] projects those onto the unit
//!    sphere through a linear head trainable with the split-and-contrast
//!    objective.
//! 3. [`retrieval`] answers exact top-k maximum inner product queries over
//!    a gallery of embedded frames; [`evaluation`] scores rankings.
//! 4. [`transition`] locates the best cut between a query and a match by
//!    comparing spectrogram columns and renders an equal-power crossfade
//!    whose length adapts to the variance of the column similarities.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases.

pub mod audio_io;
pub mod dsp;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod retrieval;
pub mod scalar;
pub mod synth;
pub mod transition;

pub use audio_io::{load_audio, segment, write_audio, AudioClip, SAMPLE_RATE};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Spectrogram = dsp::Spectrogram<f64>;
pub type SpectrogramF32 = dsp::Spectrogram<f32>;
pub type BaseFeature = dsp::BaseFeature<f64>;
pub type BaseFeatureF32 = dsp::BaseFeature<f32>;
pub type FeatureVector = embedding::FeatureVector<f64>;
pub type FeatureVectorF32 = embedding::FeatureVector<f32>;
pub type ProjectionHead = embedding::ProjectionHead<f64>;
pub type ProjectionHeadF32 = embedding::ProjectionHead<f32>;
pub type SimilarityMatrix = transition::SimilarityMatrix<f64>;
pub type SimilarityMatrixF32 = transition::SimilarityMatrix<f32>;
