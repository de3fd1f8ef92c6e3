//! Finite-difference check of every model tensor on a fresh toy model.

use bertcaps_core::encoder::{EncoderConfig, TokenSequence, Vocabulary, CLS, PAD, SEP, UNK};
use bertcaps_core::model::{ExampleInput, TensorCheck};
use bertcaps_core::numcore::RandomSource;
use bertcaps_core::{Model, Polarity};
use clap::Args;
use serde::Serialize;

use crate::error::{Error, Result};

/// Errors at or above this fail the check.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Args, Serialize)]
pub struct GradcheckOptions {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Std of the seeded noise added to the fresh parameters (0 checks the raw initialization).
    #[arg(long, default_value_t = 0.3)]
    pub jitter: f64,
    #[arg(long, default_value_t = 16)]
    pub d_model: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 64)]
    pub d_ff: usize,
    #[arg(long, default_value_t = 4)]
    pub domains: usize,
    /// Sequence length including the CLS and SEP tokens.
    #[arg(long, default_value_t = 8)]
    pub length: usize,
    #[arg(long, default_value_t = 12)]
    pub vocab: usize,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            seed: 7,
            eps: 1e-5,
            jitter: 0.3,
            d_model: 16,
            layers: 2,
            heads: 4,
            d_ff: 64,
            domains: 4,
            length: 8,
            vocab: 12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckOutcome {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
    pub checked: usize,
    pub kinks: usize,
}

impl GradcheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

pub fn run(o: &GradcheckOptions) -> Result<GradcheckOutcome> {
    if o.length < 2 || o.domains == 0 || o.vocab == 0 {
        return Err(Error::usage("gradcheck needs length >= 2, domains >= 1 and vocab >= 1"));
    }
    if !(o.jitter >= 0.0 && o.jitter.is_finite()) {
        return Err(Error::usage("jitter must be finite and non-negative"));
    }
    let mut tokens: Vec<String> = [PAD, UNK, CLS, SEP].iter().map(|s| s.to_string()).collect();
    tokens.extend((0..o.vocab).map(|i| format!("w{i}")));
    let vocab = Vocabulary::from_tokens(tokens)?;
    let config = EncoderConfig {
        vocab_size: vocab.len(),
        d_model: o.d_model,
        layers: o.layers,
        heads: o.heads,
        d_ff: o.d_ff,
        max_seq_len: o.length,
    };
    let domains = (0..o.domains).map(|i| format!("d{i}")).collect();
    let mut model = Model::with_text_encoder(vocab, config, domains, 0.1, o.seed)?;
    if o.jitter > 0.0 {
        model = model.jittered(o.jitter, o.seed);
    }

    let mut rng = RandomSource::new(o.seed);
    let mut ids = vec![Vocabulary::CLS_ID];
    ids.extend((0..o.length - 2).map(|_| 4 + rng.below(o.vocab) as u32));
    ids.push(Vocabulary::SEP_ID);
    let input = ExampleInput::Tokens(TokenSequence::from_ids(ids)?);
    let polarity = Polarity::ALL[rng.below(2)];
    let domain = rng.below(o.domains);

    let tensors = model.gradient_check(&input, polarity, domain, o.eps)?;
    let max_rel_error = tensors.iter().map(|t| t.report.max_rel_error).fold(0.0, f64::max);
    let checked = tensors.iter().map(|t| t.checked).sum();
    let kinks = tensors.iter().map(|t| t.kinks).sum();
    Ok(GradcheckOutcome { tensors, max_rel_error, checked, kinks })
}
