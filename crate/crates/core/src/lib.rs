//! Audio style transfer on log-magnitude spectrograms.
//!
//! The pipeline: [`dsp`] turns waveforms into log-magnitude spectrograms and
//! back (STFT, Griffin-Lim), [`network`] defines a small CNN classifier whose
//! layer activations carry content and style, [`training`] fits it on a
//! synthetic instrument corpus with Adam, and [`transfer`] optimizes a fresh
//! spectrogram from Gaussian noise against a four-term objective (content,
//! Gram-matrix style, temporal energy envelope, timbral envelope). All
//! gradients come from the tape-based engine in [`autodiff`].

pub mod autodiff;
pub mod dsp;
pub mod network;
pub mod training;
pub mod transfer;

/// Sample rate of the whole pipeline, in Hz.
pub const PIPELINE_SAMPLE_RATE: u32 = 16_000;
