//! A complete classifier: optional text encoder, capsule head and the
//! configuration needed to reproduce it.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::capshead::{self, CapsuleForward, CapsuleNodes, CapsuleParams, HeadNodes, LossWeights, Prediction};
use crate::encoder::{self, EncoderConfig, EncoderNodes, EncoderParams, HiddenStates, TokenSequence, Vocabulary};
use crate::error::{Error, Result};
use crate::label::Polarity;
use crate::numcore::{relative_error, streams, GradCheckReport, Matrix, NodeId, RandomSource, Tape};

const LAYER_SLOTS: [&str; 12] = [
    "query",
    "key",
    "value",
    "output",
    "attn_norm_scale",
    "attn_norm_offset",
    "ff_in",
    "ff_in_bias",
    "ff_out",
    "ff_out_bias",
    "ff_norm_scale",
    "ff_norm_offset",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_size: usize,
    /// Domain names, in capsule order.
    pub domains: Vec<String>,
    pub reconstruction_weight: f64,
    pub seed: u64,
    /// Present when the model owns a toy text encoder; absent for models
    /// trained on precomputed hidden states.
    pub encoder: Option<EncoderConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEncoder {
    pub vocab: Vocabulary,
    pub params: EncoderParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub text_encoder: Option<TextEncoder>,
    pub head: CapsuleParams,
}

/// Gradient-check outcome for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    /// Coordinates compared.
    pub checked: usize,
    /// Coordinates skipped because a probe crossed a ReLU or clamp boundary.
    pub kinks: usize,
    pub report: GradCheckReport,
}

/// What a single example feeds into the model.
#[derive(Debug, Clone, PartialEq)]
pub enum ExampleInput {
    Tokens(TokenSequence),
    Hidden(HiddenStates),
}

impl Model {
    /// Fresh model with a toy encoder over `vocab`.
    pub fn with_text_encoder(
        vocab: Vocabulary,
        mut encoder: EncoderConfig,
        domains: Vec<String>,
        reconstruction_weight: f64,
        seed: u64,
    ) -> Result<Self> {
        encoder.vocab_size = vocab.len();
        let mut rng = RandomSource::with_stream(seed, streams::INIT);
        let params = EncoderParams::init(encoder, &mut rng)?;
        let head = CapsuleParams::init(encoder.d_model, domains.len(), &mut rng)?;
        let config = ModelConfig {
            hidden_size: encoder.d_model,
            domains,
            reconstruction_weight,
            seed,
            encoder: Some(encoder),
        };
        Ok(Model { config, text_encoder: Some(TextEncoder { vocab, params }), head })
    }

    /// Fresh head-only model for precomputed hidden states of width `hidden_size`.
    pub fn head_only(hidden_size: usize, domains: Vec<String>, reconstruction_weight: f64, seed: u64) -> Result<Self> {
        if hidden_size == 0 {
            return Err(Error::Config("hidden size must be positive".into()));
        }
        let mut rng = RandomSource::with_stream(seed, streams::INIT);
        let head = CapsuleParams::init(hidden_size, domains.len(), &mut rng)?;
        let config = ModelConfig { hidden_size, domains, reconstruction_weight, seed, encoder: None };
        Ok(Model { config, text_encoder: None, head })
    }

    pub fn validate(&self) -> Result<()> {
        self.head.validate()?;
        if self.head.hidden_size() != self.config.hidden_size || self.head.domain_count() != self.config.domains.len() {
            return Err(Error::Config("head shape disagrees with model config".into()));
        }
        match (&self.text_encoder, &self.config.encoder) {
            (Some(te), Some(cfg)) => {
                te.params.validate()?;
                if te.params.config != *cfg || te.vocab.len() != cfg.vocab_size || cfg.d_model != self.config.hidden_size {
                    return Err(Error::Config("encoder disagrees with model config".into()));
                }
            }
            (None, None) => {}
            _ => return Err(Error::Config("encoder presence disagrees with model config".into())),
        }
        if !self.config.reconstruction_weight.is_finite() || self.config.reconstruction_weight < 0.0 {
            return Err(Error::Config("reconstruction weight must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn domain_count(&self) -> usize {
        self.config.domains.len()
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights { reconstruction: self.config.reconstruction_weight, ..LossWeights::default() }
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        if let Some(te) = &self.text_encoder {
            out.extend(te.params.tensors());
        }
        out.extend(self.head.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        if let Some(te) = &mut self.text_encoder {
            out.extend(te.params.tensors_mut());
        }
        out.extend(self.head.tensors_mut());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All parameters flattened in [`Model::tensors`] order.
    pub fn flat_parameters(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::Input("flat parameter vector has the wrong length".into()));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Human-readable name of every tensor, in [`Model::tensors`] order.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(te) = &self.text_encoder {
            out.push("encoder.token_embedding".into());
            out.push("encoder.position_embedding".into());
            for l in 0..te.params.layers.len() {
                for slot in LAYER_SLOTS {
                    out.push(alloc::format!("encoder.layer{l}.{slot}"));
                }
            }
        }
        let capsules = ["pos", "neg"]
            .iter()
            .map(|s| alloc::format!("sentiment.{s}"))
            .chain((0..self.head.domain_count()).map(|k| alloc::format!("domain.{k}")));
        for c in capsules {
            for part in ["attention", "probe", "bias"] {
                out.push(alloc::format!("{c}.{part}"));
            }
        }
        out
    }

    /// Copy with seeded `N(0, std^2)` noise added to every parameter.
    ///
    /// Gradient checks use this to move away from the initialization, where
    /// the query and key gradients sit near the rounding floor of a central
    /// difference.
    pub fn jittered(&self, std: f64, seed: u64) -> Model {
        let mut out = self.clone();
        let mut rng = RandomSource::with_stream(seed, streams::JITTER);
        for t in out.tensors_mut() {
            for x in t.data_mut() {
                *x += rng.normal(std);
            }
        }
        out
    }

    /// Loss of one labelled example under the current parameters.
    pub fn example_loss(&self, input: &ExampleInput, polarity: Polarity, domain: usize) -> Result<f64> {
        Ok(self.example_loss_with_kinks(input, polarity, domain)?.0)
    }

    fn example_loss_with_kinks(&self, input: &ExampleInput, polarity: Polarity, domain: usize) -> Result<(f64, Vec<bool>)> {
        let mut tape = Tape::new();
        let nodes = self.bind(&mut tape);
        let head = self.record_example(&mut tape, &nodes, input, polarity, domain, &self.loss_weights())?;
        Ok((tape.scalar(head.loss), tape.kink_pattern()))
    }

    /// Compares tape gradients with central differences for every
    /// parameter, returning one entry per tensor.
    ///
    /// Coordinates whose `±eps` probes land on a different piece of a ReLU
    /// or clamp than the base point are skipped and counted in
    /// [`TensorCheck::kinks`]: the difference quotient there straddles a
    /// point of non-differentiability.
    pub fn gradient_check(
        &self,
        input: &ExampleInput,
        polarity: Polarity,
        domain: usize,
        eps: f64,
    ) -> Result<Vec<TensorCheck>> {
        if eps.is_nan() || eps <= 0.0 {
            return Err(Error::Config("gradient check eps must be positive".into()));
        }
        let mut tape = Tape::new();
        let nodes = self.bind(&mut tape);
        let head = self.record_example(&mut tape, &nodes, input, polarity, domain, &self.loss_weights())?;
        let base = tape.kink_pattern();
        tape.backward(head.loss)?;
        let grads = nodes.gradients(&tape);
        let names = self.tensor_names();
        let mut probe = self.clone();
        let mut out = Vec::with_capacity(grads.len());
        for (t, grad) in grads.iter().enumerate() {
            let mut check = TensorCheck {
                name: names[t].clone(),
                checked: 0,
                kinks: 0,
                report: GradCheckReport { max_rel_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0 },
            };
            for i in 0..grad.len() {
                let x = self.tensors()[t].data()[i];
                let mut eval = |v: f64| {
                    probe.tensors_mut()[t].data_mut()[i] = v;
                    probe.example_loss_with_kinks(input, polarity, domain)
                };
                let (plus, kp) = eval(x + eps)?;
                let (minus, km) = eval(x - eps)?;
                probe.tensors_mut()[t].data_mut()[i] = x;
                if !plus.is_finite() || !minus.is_finite() {
                    return Err(Error::Evaluation(alloc::format!("loss is not finite around {}[{i}]", names[t])));
                }
                if kp != base || km != base {
                    check.kinks += 1;
                    continue;
                }
                let numeric = (plus - minus) / (2.0 * eps);
                let analytic = grad.data()[i];
                let err = relative_error(analytic, numeric);
                if check.checked == 0 || err > check.report.max_rel_error {
                    check.report = GradCheckReport { max_rel_error: err, worst_index: i, analytic, numeric };
                }
                check.checked += 1;
            }
            out.push(check);
        }
        Ok(out)
    }

    pub fn tokenize(&self, text: &str) -> Result<TokenSequence> {
        let te = self.text_encoder.as_ref().ok_or_else(|| Error::Config("model has no text encoder".into()))?;
        Ok(encoder::tokenize(text, &te.vocab, te.params.config.max_seq_len))
    }

    pub fn hidden_states(&self, seq: &TokenSequence) -> Result<HiddenStates> {
        let te = self.text_encoder.as_ref().ok_or_else(|| Error::Config("model has no text encoder".into()))?;
        encoder::encode(seq, &te.params)
    }

    pub fn forward(&self, h: &HiddenStates) -> Result<CapsuleForward> {
        capshead::forward(h, &self.head)
    }

    pub fn predict_hidden(&self, h: &HiddenStates) -> Result<Prediction> {
        Ok(capshead::predict(&self.forward(h)?))
    }

    pub fn predict_text(&self, text: &str) -> Result<(HiddenStates, CapsuleForward)> {
        let h = self.hidden_states(&self.tokenize(text)?)?;
        let fwd = self.forward(&h)?;
        Ok((h, fwd))
    }

    pub fn bind(&self, tape: &mut Tape) -> ModelNodes {
        let encoder = self.text_encoder.as_ref().map(|te| EncoderNodes::bind(tape, &te.params));
        let head = CapsuleNodes::bind(tape, &self.head);
        ModelNodes { encoder, head }
    }

    /// Records forward + loss for one labelled example on `tape`.
    pub fn record_example(
        &self,
        tape: &mut Tape,
        nodes: &ModelNodes,
        input: &ExampleInput,
        polarity: Polarity,
        domain: usize,
        weights: &LossWeights,
    ) -> Result<HeadNodes> {
        let h = self.record_hidden(tape, nodes, input)?;
        capshead::loss_on_tape(tape, h, &nodes.head, polarity, domain, weights)
    }

    pub fn record_hidden(&self, tape: &mut Tape, nodes: &ModelNodes, input: &ExampleInput) -> Result<NodeId> {
        match (input, &self.text_encoder, &nodes.encoder) {
            (ExampleInput::Tokens(seq), Some(te), Some(enc)) => {
                encoder::encode_on_tape(tape, enc, &te.params.config, seq)
            }
            (ExampleInput::Hidden(h), _, _) => {
                if h.hidden_size() != self.config.hidden_size {
                    return Err(Error::shape("hidden states", h.matrix().shape(), (h.len(), self.config.hidden_size)));
                }
                Ok(tape.leaf(h.matrix().clone()))
            }
            (ExampleInput::Tokens(_), _, _) => Err(Error::Config("model has no text encoder".into())),
        }
    }
}

/// Tape leaves for a whole model, in [`Model::tensors`] order.
#[derive(Debug, Clone)]
pub struct ModelNodes {
    pub encoder: Option<EncoderNodes>,
    pub head: CapsuleNodes,
}

impl ModelNodes {
    pub fn ids(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        if let Some(e) = &self.encoder {
            out.extend_from_slice(e.ids());
        }
        out.extend_from_slice(self.head.ids());
        out
    }

    /// Gradients of every parameter after `tape.backward`.
    pub fn gradients(&self, tape: &Tape) -> Vec<Matrix> {
        self.ids().into_iter().map(|id| tape.grad(id)).collect()
    }
}
