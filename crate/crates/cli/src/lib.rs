//! File formats, reports and the command-line driver for `bertcaps-core`.

pub mod app;
pub mod checkpoint;
pub mod corpus_io;
pub mod error;
pub mod gradcheck;
pub mod hdump;
pub mod numfmt;
pub mod outdir;
pub mod report;
pub mod settings;

pub use error::{Error, Kind, Result};
