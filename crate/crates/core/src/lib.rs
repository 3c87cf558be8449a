//! Speech-driven blendshape animation by acoustic-model adaptation.
//!
//! The crate covers the whole desk-scale workflow: log-mel features
//! ([`frontend`]), the linear face model ([`face`]), depth + landmark
//! blendshape fitting ([`solver`]), the convolutional acoustic model and its
//! frozen-trunk regression adaptation ([`nn`]), output smoothing
//! ([`postproc`]), objective and rank-test evaluation ([`stats`]), seeded
//! synthetic corpora ([`synth`]) and the staged command-line pipeline
//! ([`pipeline`]).

pub mod error;
pub mod face;
pub mod frontend;
pub mod nn;
pub mod pipeline;
pub mod postproc;
pub mod solver;
pub mod stats;
pub mod synth;
pub mod track;

pub use error::{Error, Result};
pub use track::CoefficientTrack;
