//! Distantly supervised relation labeling for scene graphs.
//!
//! A knowledge base mined from captions is aligned to scenes of annotated
//! boxes to produce noisy candidate relations per object pair. An EM loop
//! then alternates between estimating probabilistic labels (optionally
//! mixed with an external relatedness signal) and refitting a relation
//! scorer, discarding the pairs the scorer considers most likely unrelated.
//! A semi-supervised variant pre-trains on the denoised labels and
//! fine-tunes on human annotations.

pub mod align;
pub mod config;
pub mod denoise;
pub mod error;
pub mod eval;
pub mod kb;
pub mod par;
pub mod scene;
pub mod scorer;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
