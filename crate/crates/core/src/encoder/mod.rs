//! Text to hidden states: whitespace vocabulary, CLS/SEP framing and a small
//! post-norm transformer encoder. Externally computed hidden states enter
//! through [`HiddenStates::new`].

mod transformer;
mod vocab;

use serde::{Deserialize, Serialize};

pub use transformer::{encode, encode_on_tape, EncoderConfig, EncoderLayer, EncoderNodes, EncoderParams};
pub use vocab::{build_vocab, tokenize, TokenSequence, Vocabulary, CLS, PAD, SEP, UNK};

use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// Encoder output `H`: one row per token, row 0 for CLS and the last for SEP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct HiddenStates(Matrix);

impl HiddenStates {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if matrix.rows() < 2 {
            return Err(Error::Input("hidden states need at least the CLS and SEP rows".into()));
        }
        if !matrix.is_finite() {
            return Err(Error::Input("hidden states must be finite".into()));
        }
        Ok(HiddenStates(matrix))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn hidden_size(&self) -> usize {
        self.0.cols()
    }

    /// The classification-token row `h_[CLS]`.
    pub fn cls(&self) -> &[f64] {
        self.0.row(0)
    }
}

impl TryFrom<Matrix> for HiddenStates {
    type Error = Error;

    fn try_from(m: Matrix) -> Result<Self> {
        Self::new(m)
    }
}

impl From<HiddenStates> for Matrix {
    fn from(h: HiddenStates) -> Self {
        h.0
    }
}
