//! Numeric substrate: dense matrices, activations, the differentiation tape,
//! finite-difference checking and the seeded random source.

mod activation;
mod gradcheck;
mod matrix;
mod rng;
mod tape;

pub use activation::{argmax, relu, sigmoid, softmax};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use matrix::Matrix;
pub use rng::{streams, RandomSource};
pub use tape::{NodeId, Tape};
