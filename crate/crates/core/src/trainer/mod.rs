//! Mini-batch training of encoder and capsule head on the joint loss.

mod optim;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use optim::{optimizer_step, Optimizer, OptimizerState};

use crate::capshead::{self, LossWeights, Prediction};
use crate::datapipe::{stratified_split, stratum_of, CorpusRecord, StratumKey};
use crate::encoder::{build_vocab, EncoderConfig, HiddenStates};
use crate::error::{Error, Result};
use crate::label::Polarity;
use crate::model::{ExampleInput, Model};
use crate::numcore::{streams, Matrix, RandomSource, Tape};

/// Architecture of the toy encoder trained from scratch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyEncoderConfig {
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    /// Minimum corpus frequency for a word to enter the vocabulary.
    pub min_count: usize,
}

impl Default for ToyEncoderConfig {
    fn default() -> Self {
        ToyEncoderConfig { d_model: 64, layers: 2, heads: 4, d_ff: 256, max_seq_len: 64, min_count: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub reconstruction_weight: f64,
    pub seed: u64,
    /// Epochs without validation improvement before stopping; 0 disables
    /// early stopping and the validation hold-out.
    pub early_stop_patience: usize,
    /// Fraction of the training records held out for early stopping.
    pub validation_fraction: f64,
    /// Inverse-frequency weights on the sentiment loss.
    pub class_weighting: bool,
    pub encoder: ToyEncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 16,
            learning_rate: 1e-3,
            optimizer: Optimizer::adam(),
            reconstruction_weight: 0.1,
            seed: 42,
            early_stop_patience: 10,
            validation_fraction: 0.1,
            class_weighting: false,
            encoder: ToyEncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        // Zero is accepted: it freezes the parameters.
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return bad("learning_rate must be finite and non-negative");
        }
        if !self.reconstruction_weight.is_finite() || self.reconstruction_weight < 0.0 {
            return bad("reconstruction_weight must be finite and non-negative");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)");
        }
        if let Optimizer::Adam { beta1, beta2, epsilon } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon.is_nan() || epsilon <= 0.0 {
                return bad("adam needs betas in [0, 1) and epsilon > 0");
            }
        }
        Ok(())
    }
}

/// Where hidden states come from during training.
#[derive(Debug, Clone, Copy)]
pub enum EncoderMode<'a> {
    /// Train the toy encoder jointly with the head.
    Toy,
    /// Frozen hidden states keyed by record id.
    Precomputed(&'a BTreeMap<String, HiddenStates>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: ExampleInput,
    pub polarity: Polarity,
    pub domain: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc_sentiment: f64,
    pub train_acc_domain: f64,
    pub val_acc_sentiment: Option<f64>,
    pub val_acc_domain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: Model,
    pub history: TrainHistory,
}

fn labels(r: &CorpusRecord, k: usize) -> Result<(Polarity, usize)> {
    let p = r.polarity.ok_or_else(|| Error::Input(alloc::format!("record {} has no polarity", r.id)))?;
    if r.domain >= k {
        return Err(Error::Input(alloc::format!("record {} has domain index {} of {k}", r.id, r.domain)));
    }
    Ok((p, r.domain))
}

/// Turns records into model inputs (tokens for a text model, looked-up
/// hidden states for a head-only model).
pub fn prepare_examples(
    model: &Model,
    records: &[CorpusRecord],
    hidden: Option<&BTreeMap<String, HiddenStates>>,
) -> Result<Vec<Example>> {
    records
        .iter()
        .map(|r| {
            let (polarity, domain) = labels(r, model.domain_count())?;
            let input = match (&model.text_encoder, hidden) {
                (Some(_), _) => ExampleInput::Tokens(model.tokenize(&r.text)?),
                (None, Some(map)) => ExampleInput::Hidden(
                    map.get(&r.id)
                        .cloned()
                        .ok_or_else(|| Error::Input(alloc::format!("no hidden states for record {}", r.id)))?,
                ),
                (None, None) => return Err(Error::Config("head-only model needs precomputed hidden states".into())),
            };
            Ok(Example { input, polarity, domain })
        })
        .collect()
}

/// Mean loss over `batch` and its gradient for every model tensor, in
/// [`Model::tensors`] order. Also returns the pre-update predictions.
pub fn batch_gradients(model: &Model, batch: &[&Example], weights: &LossWeights) -> Result<(f64, Vec<Matrix>, Vec<Prediction>)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch_gradients"));
    }
    let mut tape = Tape::new();
    let nodes = model.bind(&mut tape);
    let mut total = None;
    let mut predictions = Vec::with_capacity(batch.len());
    for ex in batch {
        let head = model.record_example(&mut tape, &nodes, &ex.input, ex.polarity, ex.domain, weights)?;
        predictions.push(head.prediction(&tape));
        total = Some(match total {
            None => head.loss,
            Some(acc) => tape.add(acc, head.loss)?,
        });
    }
    let total = total.ok_or(Error::Empty("batch_gradients"))?;
    let mean = tape.scale(total, 1.0 / batch.len() as f64);
    tape.backward(mean)?;
    let loss = tape.scalar(mean);
    if !loss.is_finite() {
        return Err(Error::Evaluation("training loss is not finite".into()));
    }
    Ok((loss, nodes.gradients(&tape), predictions))
}

/// Hidden states for many inputs, sharing one parameter binding per chunk.
pub fn hidden_states_batch(model: &Model, inputs: &[&ExampleInput]) -> Result<Vec<HiddenStates>> {
    const CHUNK: usize = 64;
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(CHUNK) {
        if chunk.iter().all(|i| matches!(i, ExampleInput::Hidden(_))) {
            for i in chunk {
                if let ExampleInput::Hidden(h) = i {
                    out.push(h.clone());
                }
            }
            continue;
        }
        let mut tape = Tape::new();
        let nodes = model.bind(&mut tape);
        for input in chunk {
            let h = model.record_hidden(&mut tape, &nodes, input)?;
            out.push(HiddenStates::new(tape.value(h).clone())?);
        }
    }
    Ok(out)
}

/// Predictions and mean loss over labelled examples, without gradients.
pub fn evaluate_examples(model: &Model, examples: &[Example], weights: &LossWeights) -> Result<(Vec<Prediction>, f64)> {
    let inputs: Vec<&ExampleInput> = examples.iter().map(|e| &e.input).collect();
    let hidden = hidden_states_batch(model, &inputs)?;
    let mut predictions = Vec::with_capacity(examples.len());
    let mut loss = 0.0;
    for (ex, h) in examples.iter().zip(&hidden) {
        let fwd = model.forward(h)?;
        loss += capshead::loss(&fwd, ex.polarity, ex.domain, weights)?.total;
        predictions.push(capshead::predict(&fwd));
    }
    Ok((predictions, loss / examples.len().max(1) as f64))
}

/// `(sentiment accuracy, domain accuracy)`.
pub fn accuracies(examples: &[Example], predictions: &[Prediction]) -> (f64, f64) {
    let n = examples.len().max(1) as f64;
    let sent = examples.iter().zip(predictions).filter(|(e, p)| e.polarity == p.polarity).count();
    let dom = examples.iter().zip(predictions).filter(|(e, p)| e.domain == p.domain).count();
    (sent as f64 / n, dom as f64 / n)
}

fn class_weights(records: &[&CorpusRecord], enabled: bool) -> [f64; 2] {
    if !enabled {
        return [1.0, 1.0];
    }
    let mut counts = [0usize; 2];
    for p in records.iter().filter_map(|r| r.polarity) {
        counts[p.index()] += 1;
    }
    let n = (counts[0] + counts[1]) as f64;
    counts.map(|c| if c == 0 { 1.0 } else { n / (2.0 * c as f64) })
}

/// Builds a fresh model for `records` under `mode`.
pub fn init_model(records: &[&CorpusRecord], domains: &[String], mode: EncoderMode<'_>, config: &TrainConfig) -> Result<Model> {
    let domains = domains.to_vec();
    match mode {
        EncoderMode::Toy => {
            let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
            let vocab = build_vocab(&texts, config.encoder.min_count)?;
            let e = config.encoder;
            let enc = EncoderConfig {
                vocab_size: vocab.len(),
                d_model: e.d_model,
                layers: e.layers,
                heads: e.heads,
                d_ff: e.d_ff,
                max_seq_len: e.max_seq_len,
            };
            Model::with_text_encoder(vocab, enc, domains, config.reconstruction_weight, config.seed)
        }
        EncoderMode::Precomputed(map) => {
            let first = records.first().ok_or_else(|| Error::Input("empty dataset".into()))?;
            let d = map
                .get(&first.id)
                .ok_or_else(|| Error::Input(alloc::format!("no hidden states for record {}", first.id)))?
                .hidden_size();
            Model::head_only(d, domains, config.reconstruction_weight, config.seed)
        }
    }
}

/// Trains on `records`, holding out a stratified validation slice for early
/// stopping when `early_stop_patience > 0`.
pub fn train(records: &[CorpusRecord], domains: &[String], mode: EncoderMode<'_>, config: &TrainConfig) -> Result<Trained> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::Input("cannot train on an empty dataset".into()));
    }
    for r in records {
        labels(r, domains.len())?;
    }
    let (train_idx, val_idx) = if config.early_stop_patience > 0 {
        let keys: Vec<StratumKey> = records.iter().map(stratum_of).collect();
        let mut rng = RandomSource::with_stream(config.seed, streams::VALIDATION);
        let s = stratified_split(&keys, 1.0 - config.validation_fraction, &mut rng)?;
        (s.train, s.test)
    } else {
        ((0..records.len()).collect(), Vec::new())
    };
    let train_recs: Vec<&CorpusRecord> = train_idx.iter().map(|&i| &records[i]).collect();
    let mut model = init_model(&train_recs, domains, mode, config)?;
    let hidden = match mode {
        EncoderMode::Precomputed(map) => Some(map),
        EncoderMode::Toy => None,
    };
    let subset = |idx: &[usize]| -> Vec<CorpusRecord> { idx.iter().map(|&i| records[i].clone()).collect() };
    let train_ex = prepare_examples(&model, &subset(&train_idx), hidden)?;
    let val_ex = prepare_examples(&model, &subset(&val_idx), hidden)?;

    let weights = LossWeights {
        reconstruction: config.reconstruction_weight,
        sentiment_class: class_weights(&train_recs, config.class_weighting),
    };
    let mut state = OptimizerState::default();
    let mut order: Vec<usize> = (0..train_ex.len()).collect();
    let mut shuffle = RandomSource::with_stream(config.seed, streams::SHUFFLE);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, f64)> = None;
    let mut stale = 0;

    for epoch in 1..=config.epochs {
        shuffle.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_ex[i]).collect();
            let (loss, grads, _) = batch_gradients(&model, &batch, &weights)?;
            loss_sum += loss * batch.len() as f64;
            optimizer_step(&mut model.tensors_mut(), &grads, &mut state, &config.optimizer, config.learning_rate)?;
        }
        let (train_pred, _) = evaluate_examples(&model, &train_ex, &weights)?;
        let (train_acc_sentiment, train_acc_domain) = accuracies(&train_ex, &train_pred);
        let mut record = EpochRecord {
            epoch,
            loss: loss_sum / train_ex.len() as f64,
            train_acc_sentiment,
            train_acc_domain,
            val_acc_sentiment: None,
            val_acc_domain: None,
        };
        let mut stop = false;
        if !val_ex.is_empty() {
            let (val_pred, val_loss) = evaluate_examples(&model, &val_ex, &weights)?;
            let (vs, vd) = accuracies(&val_ex, &val_pred);
            record.val_acc_sentiment = Some(vs);
            record.val_acc_domain = Some(vd);
            // A falling validation loss also resets patience: polarity
            // accuracy sits flat for many epochs before the encoder separates
            // the classes.
            let improved = match best {
                None => true,
                Some((acc, loss)) => vs > acc || val_loss < loss,
            };
            if improved {
                best = Some(match best {
                    None => (vs, val_loss),
                    Some((acc, loss)) => (acc.max(vs), loss.min(val_loss)),
                });
                stale = 0;
            } else {
                stale += 1;
                stop = stale >= config.early_stop_patience;
            }
        }
        history.epochs.push(record);
        if stop {
            history.stopped_early = true;
            break;
        }
    }
    Ok(Trained { model, history })
}
