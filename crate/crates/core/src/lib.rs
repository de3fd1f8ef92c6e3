//! Attention-capsule multi-task text classification.
//!
//! A sequence encoder produces a hidden-state matrix `H` (one row per token,
//! row 0 being the classification token). The capsule head pools `H` with one
//! attention vector per capsule, turns each pooled vector into an activation
//! probability (independent sigmoids for the two sentiment capsules, a softmax
//! across the domain capsules), and scales the pooled vector by that
//! probability to get a reconstruction. Polarity and domain are the capsules
//! with the highest activation.
//!
//! Everything here is `no_std` + `alloc` and deterministic given a seed. File
//! formats and the command-line driver live in the companion `bertcaps` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod capshead;
pub mod datapipe;
pub mod encoder;
pub mod error;
pub mod evalkit;
pub mod label;
pub mod model;
pub mod numcore;
pub mod trainer;

pub use error::{Error, Result};
pub use label::Polarity;
pub use model::{Model, ModelConfig};
pub use numcore::{Matrix, RandomSource, Tape};
