use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{HiddenStates, TokenSequence};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, NodeId, RandomSource, Tape};

const LAYER_NORM_EPS: f64 = 1e-12;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.vocab_size < 4 {
            return bad("vocabulary must hold at least the four special tokens");
        }
        if self.d_model == 0 || self.heads == 0 || self.d_ff == 0 {
            return bad("d_model, heads and d_ff must be positive");
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return bad("d_model must be divisible by the head count");
        }
        if self.max_seq_len < 2 {
            return bad("max_seq_len must leave room for CLS and SEP");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

/// One post-norm transformer block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub query: Matrix,
    pub key: Matrix,
    pub value: Matrix,
    pub output: Matrix,
    pub attn_norm_scale: Matrix,
    pub attn_norm_offset: Matrix,
    pub ff_in: Matrix,
    pub ff_in_bias: Matrix,
    pub ff_out: Matrix,
    pub ff_out_bias: Matrix,
    pub ff_norm_scale: Matrix,
    pub ff_norm_offset: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub token_embedding: Matrix,
    pub position_embedding: Matrix,
    pub layers: Vec<EncoderLayer>,
}

fn normal(rows: usize, cols: usize, rng: &mut RandomSource) -> Matrix {
    Matrix::from_parts(rows, cols, rng.normal_vec(rows * cols, INIT_STD))
}

impl EncoderParams {
    pub fn init(config: EncoderConfig, rng: &mut RandomSource) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let token_embedding = normal(config.vocab_size, d, rng);
        let position_embedding = normal(config.max_seq_len, d, rng);
        let layers = (0..config.layers)
            .map(|_| EncoderLayer {
                query: normal(d, d, rng),
                key: normal(d, d, rng),
                value: normal(d, d, rng),
                output: normal(d, d, rng),
                attn_norm_scale: Matrix::filled(1, d, 1.0),
                attn_norm_offset: Matrix::zeros(1, d),
                ff_in: normal(d, config.d_ff, rng),
                ff_in_bias: Matrix::zeros(1, config.d_ff),
                ff_out: normal(config.d_ff, d, rng),
                ff_out_bias: Matrix::zeros(1, d),
                ff_norm_scale: Matrix::filled(1, d, 1.0),
                ff_norm_offset: Matrix::zeros(1, d),
            })
            .collect();
        Ok(EncoderParams { config, token_embedding, position_embedding, layers })
    }

    /// All trainable tensors in a fixed order shared with [`EncoderNodes`].
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = alloc::vec![&self.token_embedding, &self.position_embedding];
        for l in &self.layers {
            out.extend([
                &l.query,
                &l.key,
                &l.value,
                &l.output,
                &l.attn_norm_scale,
                &l.attn_norm_offset,
                &l.ff_in,
                &l.ff_in_bias,
                &l.ff_out,
                &l.ff_out_bias,
                &l.ff_norm_scale,
                &l.ff_norm_offset,
            ]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = alloc::vec![&mut self.token_embedding, &mut self.position_embedding];
        for l in &mut self.layers {
            out.extend([
                &mut l.query,
                &mut l.key,
                &mut l.value,
                &mut l.output,
                &mut l.attn_norm_scale,
                &mut l.attn_norm_offset,
                &mut l.ff_in,
                &mut l.ff_in_bias,
                &mut l.ff_out,
                &mut l.ff_out_bias,
                &mut l.ff_norm_scale,
                &mut l.ff_norm_offset,
            ]);
        }
        out
    }

    /// Checks shapes against the config, e.g. after deserializing.
    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        c.validate()?;
        let (d, f) = (c.d_model, c.d_ff);
        let mut expected = alloc::vec![(c.vocab_size, d), (c.max_seq_len, d)];
        for _ in &self.layers {
            expected.extend([(d, d), (d, d), (d, d), (d, d), (1, d), (1, d), (d, f), (1, f), (f, d), (1, d), (1, d), (1, d)]);
        }
        if self.layers.len() != c.layers {
            return Err(Error::Config("layer count disagrees with config".into()));
        }
        for (t, shape) in self.tensors().iter().zip(expected) {
            if t.shape() != shape || !t.is_finite() {
                return Err(Error::shape("encoder params", t.shape(), shape));
            }
        }
        Ok(())
    }
}

/// Tape leaves for one [`EncoderParams`].
#[derive(Debug, Clone)]
pub struct EncoderNodes {
    ids: Vec<NodeId>,
    layers: usize,
}

impl EncoderNodes {
    pub fn bind(tape: &mut Tape, params: &EncoderParams) -> Self {
        let ids = params.tensors().into_iter().map(|t| tape.leaf(t.clone())).collect();
        EncoderNodes { ids, layers: params.layers.len() }
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    fn layer(&self, l: usize, slot: usize) -> NodeId {
        self.ids[2 + l * 12 + slot]
    }
}

fn check_ids(seq: &TokenSequence, config: &EncoderConfig) -> Result<()> {
    if seq.len() > config.max_seq_len {
        return Err(Error::Input(alloc::format!(
            "sequence of length {} exceeds max_seq_len {}",
            seq.len(),
            config.max_seq_len
        )));
    }
    if let Some(&bad) = seq.ids().iter().find(|&&id| id as usize >= config.vocab_size) {
        return Err(Error::Input(alloc::format!(
            "token id {bad} out of range for vocabulary of {}",
            config.vocab_size
        )));
    }
    Ok(())
}

/// Records the encoder on `tape` and returns the node holding `H`.
pub fn encode_on_tape(
    tape: &mut Tape,
    nodes: &EncoderNodes,
    config: &EncoderConfig,
    seq: &TokenSequence,
) -> Result<NodeId> {
    check_ids(seq, config)?;
    let ids: Vec<usize> = seq.ids().iter().map(|&i| i as usize).collect();
    let positions: Vec<usize> = (0..ids.len()).collect();
    let tok = tape.gather_rows(nodes.ids[0], &ids)?;
    let pos = tape.gather_rows(nodes.ids[1], &positions)?;
    let mut x = tape.add(tok, pos)?;

    let dh = config.head_dim();
    let inv_sqrt = 1.0 / libm::sqrt(dh as f64);
    for l in 0..nodes.layers {
        let p = |slot| nodes.layer(l, slot);
        let q = tape.matmul(x, p(0))?;
        let k = tape.matmul(x, p(1))?;
        let v = tape.matmul(x, p(2))?;
        let mut heads = Vec::with_capacity(config.heads);
        for h in 0..config.heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let kt = tape.transpose(kh);
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, inv_sqrt);
            let weights = tape.softmax_rows(scores);
            heads.push(tape.matmul(weights, vh)?);
        }
        let merged = tape.concat_cols(&heads)?;
        let attn = tape.matmul(merged, p(3))?;
        let res = tape.add(x, attn)?;
        x = layer_norm(tape, res, p(4), p(5))?;

        let hidden = tape.matmul(x, p(6))?;
        let hidden = tape.add_row(hidden, p(7))?;
        let hidden = tape.relu(hidden);
        let ff = tape.matmul(hidden, p(8))?;
        let ff = tape.add_row(ff, p(9))?;
        let res = tape.add(x, ff)?;
        x = layer_norm(tape, res, p(10), p(11))?;
    }
    Ok(x)
}

fn layer_norm(tape: &mut Tape, x: NodeId, scale: NodeId, offset: NodeId) -> Result<NodeId> {
    let z = tape.standardize_rows(x, LAYER_NORM_EPS);
    let z = tape.mul_row(z, scale)?;
    tape.add_row(z, offset)
}

/// Final-layer hidden states for one sequence.
pub fn encode(seq: &TokenSequence, params: &EncoderParams) -> Result<HiddenStates> {
    let mut tape = Tape::new();
    let nodes = EncoderNodes::bind(&mut tape, params);
    let h = encode_on_tape(&mut tape, &nodes, &params.config, seq)?;
    HiddenStates::new(tape.value(h).clone())
}
