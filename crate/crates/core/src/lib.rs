//! Multimodal gated-fusion sequence models for dementia screening from speech.
//!
//! The pipeline consumes three external inputs per session: an ASR hypothesis
//! with word timings (plus optional disfluency tags and language-model
//! probabilities), a frame-level acoustic feature matrix sampled at 100 Hz,
//! and a manifest row carrying labels. From these it builds
//!
//! * acoustic functional sequences ([`acoustic`]): sliding-window statistics,
//!   z-normalization and correlation-based feature selection,
//! * lexical fusion sequences ([`lexical`]): word embedding, disfluency
//!   one-hot, unfilled-pause category and duration, LM probability,
//!
//! and trains bidirectional LSTM branches joined by a highway stack
//! ([`model`], [`nn`]) under k-fold or leave-one-subject-out protocols
//! ([`train`], [`eval`]).

pub mod acoustic;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod lexical;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod stats;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
