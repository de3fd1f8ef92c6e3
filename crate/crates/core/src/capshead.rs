//! Attention capsules over encoder hidden states.
//!
//! Each capsule `i` owns an attention vector `w_i`, a probe vector `u_i` and a
//! bias `b_i`:
//!
//! ```text
//! alpha_i = softmax(H w_i)          attention over token positions
//! v_i     = alpha_i^T H             capsule representation
//! p_i     = sigmoid(u_i . v_i + b_i)                 sentiment capsules
//! p       = softmax_j(u_j . v_j + b_j)               domain capsules
//! r_i     = p_i v_i                 reconstruction
//! ```
//!
//! Training pulls the true capsule's reconstruction of each task toward the
//! classification-token vector `v_s = H[0]`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::encoder::HiddenStates;
use crate::error::{Error, Result};
use crate::label::Polarity;
use crate::numcore::{argmax, sigmoid, Matrix, NodeId, RandomSource, Tape};

/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` before any log.
pub const P_CLAMP: f64 = 1e-12;

const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capsule {
    /// `w_i` as a d x 1 column.
    attention: Matrix,
    /// `u_i` as a d x 1 column.
    probe: Matrix,
    /// `b_i` as a 1 x 1 matrix.
    bias: Matrix,
}

impl Capsule {
    pub fn new(attention: &[f64], probe: &[f64], bias: f64) -> Result<Self> {
        if attention.len() != probe.len() {
            return Err(Error::shape("capsule", (attention.len(), 1), (probe.len(), 1)));
        }
        Ok(Capsule {
            attention: Matrix::column_vector(attention)?,
            probe: Matrix::column_vector(probe)?,
            bias: Matrix::new(1, 1, alloc::vec![bias])?,
        })
    }

    pub fn zeros(d: usize) -> Self {
        Capsule { attention: Matrix::zeros(d, 1), probe: Matrix::zeros(d, 1), bias: Matrix::zeros(1, 1) }
    }

    fn init(d: usize, rng: &mut RandomSource) -> Self {
        let attention = Matrix::from_parts(d, 1, rng.normal_vec(d, INIT_STD));
        let probe = Matrix::from_parts(d, 1, rng.normal_vec(d, INIT_STD));
        Capsule { attention, probe, bias: Matrix::zeros(1, 1) }
    }

    pub fn attention(&self) -> &[f64] {
        self.attention.data()
    }

    pub fn probe(&self) -> &[f64] {
        self.probe.data()
    }

    pub fn bias(&self) -> f64 {
        self.bias.data()[0]
    }

    fn tensors(&self) -> [&Matrix; 3] {
        [&self.attention, &self.probe, &self.bias]
    }

    fn tensors_mut(&mut self) -> [&mut Matrix; 3] {
        [&mut self.attention, &mut self.probe, &mut self.bias]
    }

    fn hidden_size(&self) -> usize {
        self.attention.rows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapsuleParams {
    /// Indexed by [`Polarity::index`].
    pub sentiment: Vec<Capsule>,
    pub domain: Vec<Capsule>,
}

impl CapsuleParams {
    pub fn init(d: usize, domains: usize, rng: &mut RandomSource) -> Result<Self> {
        check_domain_count(domains)?;
        let sentiment = (0..2).map(|_| Capsule::init(d, rng)).collect();
        let domain = (0..domains).map(|_| Capsule::init(d, rng)).collect();
        Ok(CapsuleParams { sentiment, domain })
    }

    pub fn zeros(d: usize, domains: usize) -> Result<Self> {
        check_domain_count(domains)?;
        Ok(CapsuleParams { sentiment: alloc::vec![Capsule::zeros(d); 2], domain: alloc::vec![Capsule::zeros(d); domains] })
    }

    pub fn hidden_size(&self) -> usize {
        self.sentiment[0].hidden_size()
    }

    pub fn domain_count(&self) -> usize {
        self.domain.len()
    }

    fn capsules(&self) -> impl Iterator<Item = &Capsule> {
        self.sentiment.iter().chain(&self.domain)
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        self.capsules().flat_map(Capsule::tensors).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.sentiment.iter_mut().chain(self.domain.iter_mut()).flat_map(Capsule::tensors_mut).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sentiment.len() != 2 {
            return Err(Error::Config("the head needs exactly two sentiment capsules".into()));
        }
        check_domain_count(self.domain.len())?;
        let d = self.hidden_size();
        for c in self.capsules() {
            let ok = c.attention.shape() == (d, 1) && c.probe.shape() == (d, 1) && c.bias.shape() == (1, 1);
            if !ok || c.tensors().iter().any(|t| !t.is_finite()) {
                return Err(Error::Config("capsule parameters disagree on hidden size".into()));
            }
        }
        Ok(())
    }
}

fn check_domain_count(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::Config(alloc::format!("need at least two domain capsules, got {k}")));
    }
    Ok(())
}

/// Everything one capsule computes for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapsuleState {
    pub alpha: Vec<f64>,
    pub representation: Vec<f64>,
    pub logit: f64,
    pub probability: f64,
    pub reconstruction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapsuleForward {
    /// `v_s`, the CLS row of `H`.
    pub instance: Vec<f64>,
    pub sentiment: Vec<CapsuleState>,
    pub domain: Vec<CapsuleState>,
}

impl CapsuleForward {
    pub fn p_sentiment(&self) -> Vec<f64> {
        self.sentiment.iter().map(|c| c.probability).collect()
    }

    pub fn p_domain(&self) -> Vec<f64> {
        self.domain.iter().map(|c| c.probability).collect()
    }

    pub fn domain_logits(&self) -> Vec<f64> {
        self.domain.iter().map(|c| c.logit).collect()
    }
}

fn pool(h: &Matrix, w: &Matrix) -> Result<(Matrix, Matrix)> {
    let scores = h.matmul(w)?;
    let alpha = scores.transpose().softmax_rows();
    let v = alpha.matmul(h)?;
    Ok((alpha, v))
}

/// `alpha = softmax(H w)`, `v = alpha^T H`.
pub fn attention_pool(h: &Matrix, w: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if w.len() != h.cols() {
        return Err(Error::shape("attention_pool", h.shape(), (w.len(), 1)));
    }
    let (alpha, v) = pool(h, &Matrix::column_vector(w)?)?;
    Ok((alpha.into_data(), v.into_data()))
}

fn capsule_logit(v: &Matrix, c: &Capsule) -> Result<f64> {
    Ok(v.matmul(&c.probe)?.data()[0] + c.bias())
}

pub fn sentiment_probability(v: &[f64], u: &[f64], b: f64) -> Result<f64> {
    if v.len() != u.len() {
        return Err(Error::shape("sentiment_probability", (1, v.len()), (u.len(), 1)));
    }
    let logit = Matrix::row_vector(v)?.matmul(&Matrix::column_vector(u)?)?.data()[0] + b;
    Ok(sigmoid(logit))
}

/// Softmax across the domain capsules' logits.
pub fn domain_probabilities(logits: &[f64]) -> Result<Vec<f64>> {
    check_domain_count(logits.len())?;
    crate::numcore::softmax(logits)
}

pub fn reconstruct(p: f64, v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x * p).collect()
}

pub fn forward(h: &HiddenStates, params: &CapsuleParams) -> Result<CapsuleForward> {
    let hm = h.matrix();
    if hm.cols() != params.hidden_size() {
        return Err(Error::shape("capsule forward", hm.shape(), (params.hidden_size(), 1)));
    }
    let pooled = |c: &Capsule| -> Result<(Matrix, Matrix, f64)> {
        let (alpha, v) = pool(hm, &c.attention)?;
        let logit = capsule_logit(&v, c)?;
        Ok((alpha, v, logit))
    };
    let state = |(alpha, v, logit): (Matrix, Matrix, f64), p: f64| CapsuleState {
        reconstruction: reconstruct(p, v.data()),
        alpha: alpha.into_data(),
        representation: v.into_data(),
        logit,
        probability: p,
    };

    let mut sentiment = Vec::with_capacity(2);
    for c in &params.sentiment {
        let parts = pooled(c)?;
        let p = sigmoid(parts.2);
        sentiment.push(state(parts, p));
    }
    let domain_parts = params.domain.iter().map(pooled).collect::<Result<Vec<_>>>()?;
    let logits: Vec<f64> = domain_parts.iter().map(|p| p.2).collect();
    let probs = Matrix::row_vector(&logits)?.softmax_rows().into_data();
    let domain = domain_parts.into_iter().zip(probs).map(|(parts, p)| state(parts, p)).collect();
    Ok(CapsuleForward { instance: h.cls().to_vec(), sentiment, domain })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub polarity: Polarity,
    pub domain: usize,
}

/// The most active capsule of each task; ties resolve to the lower index.
pub fn predict(fwd: &CapsuleForward) -> Prediction {
    predict_from(&fwd.p_sentiment(), &fwd.p_domain())
}

pub(crate) fn predict_from(p_sentiment: &[f64], p_domain: &[f64]) -> Prediction {
    let polarity = Polarity::from_index(argmax(p_sentiment)).unwrap_or(Polarity::Positive);
    Prediction { polarity, domain: argmax(p_domain) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Multiplier on the squared reconstruction residuals.
    pub reconstruction: f64,
    /// Per-polarity multiplier on the sentiment cross-entropy.
    pub sentiment_class: [f64; 2],
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { reconstruction: 0.1, sentiment_class: [1.0, 1.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Binary cross-entropy summed over both sentiment capsules (class-weighted).
    pub sentiment: f64,
    /// Cross-entropy of the domain softmax.
    pub domain: f64,
    /// `|r_sent - v_s|^2 + |r_dom - v_s|^2` for the true capsules, unweighted.
    pub reconstruction: f64,
    pub total: f64,
}

fn bce(p: f64, target: f64) -> f64 {
    let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
    -(target * libm::log(p) + (1.0 - target) * libm::log(1.0 - p))
}

fn check_labels(domain: usize, k: usize) -> Result<()> {
    if domain >= k {
        return Err(Error::Input(alloc::format!("domain label {domain} out of range for {k} domains")));
    }
    Ok(())
}

pub fn loss(fwd: &CapsuleForward, polarity: Polarity, domain: usize, weights: &LossWeights) -> Result<LossBreakdown> {
    check_labels(domain, fwd.domain.len())?;
    let truth = polarity.index();
    let sentiment = weights.sentiment_class[truth]
        * fwd
            .sentiment
            .iter()
            .enumerate()
            .map(|(i, c)| bce(c.probability, if i == truth { 1.0 } else { 0.0 }))
            .sum::<f64>();
    let log_p = Matrix::row_vector(&fwd.domain_logits())?.log_softmax_rows();
    let domain_ce = -log_p.data()[domain];
    let residual = |r: &[f64]| -> f64 { r.iter().zip(&fwd.instance).map(|(a, b)| (a - b) * (a - b)).sum() };
    let reconstruction = residual(&fwd.sentiment[truth].reconstruction) + residual(&fwd.domain[domain].reconstruction);
    Ok(LossBreakdown {
        sentiment,
        domain: domain_ce,
        reconstruction,
        total: sentiment + domain_ce + weights.reconstruction * reconstruction,
    })
}

/// Tape leaves for one [`CapsuleParams`], in [`CapsuleParams::tensors`] order.
#[derive(Debug, Clone)]
pub struct CapsuleNodes {
    ids: Vec<NodeId>,
    sentiment: usize,
}

impl CapsuleNodes {
    pub fn bind(tape: &mut Tape, params: &CapsuleParams) -> Self {
        let ids = params.tensors().into_iter().map(|t| tape.leaf(t.clone())).collect();
        CapsuleNodes { ids, sentiment: params.sentiment.len() }
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    fn capsule(&self, i: usize) -> [NodeId; 3] {
        [self.ids[3 * i], self.ids[3 * i + 1], self.ids[3 * i + 2]]
    }

    fn domain_count(&self) -> usize {
        self.ids.len() / 3 - self.sentiment
    }
}

/// Nodes of one recorded head forward + loss.
#[derive(Debug, Clone)]
pub struct HeadNodes {
    pub loss: NodeId,
    pub p_sentiment: [NodeId; 2],
    /// 1 x K_d row of domain probabilities.
    pub p_domain: NodeId,
}

impl HeadNodes {
    pub fn prediction(&self, tape: &Tape) -> Prediction {
        let ps = [tape.scalar(self.p_sentiment[0]), tape.scalar(self.p_sentiment[1])];
        predict_from(&ps, tape.value(self.p_domain).data())
    }
}

/// Records forward and loss for hidden states held in node `h`.
pub fn loss_on_tape(
    tape: &mut Tape,
    h: NodeId,
    nodes: &CapsuleNodes,
    polarity: Polarity,
    domain: usize,
    weights: &LossWeights,
) -> Result<HeadNodes> {
    check_labels(domain, nodes.domain_count())?;
    let pool_capsule = |tape: &mut Tape, i: usize| -> Result<(NodeId, NodeId)> {
        let [w, u, b] = nodes.capsule(i);
        let scores = tape.matmul(h, w)?;
        let scores = tape.transpose(scores);
        let alpha = tape.softmax_rows(scores);
        let v = tape.matmul(alpha, h)?;
        let dot = tape.matmul(v, u)?;
        Ok((v, tape.add(dot, b)?))
    };

    let instance = tape.gather_rows(h, &[0])?;
    let truth = polarity.index();
    let mut p_sentiment = Vec::with_capacity(2);
    let mut sentiment_terms = Vec::with_capacity(2);
    let mut recon_sent = None;
    for i in 0..nodes.sentiment {
        let (v, logit) = pool_capsule(tape, i)?;
        let p = tape.sigmoid(logit);
        p_sentiment.push(p);
        let pc = tape.clamp(p, P_CLAMP, 1.0 - P_CLAMP);
        let term = if i == truth {
            let r = tape.scale_by(v, p)?;
            recon_sent = Some(r);
            tape.log(pc)
        } else {
            let neg = tape.scale(pc, -1.0);
            let q = tape.add_const(neg, 1.0);
            tape.log(q)
        };
        sentiment_terms.push(tape.scale(term, -1.0));
    }
    let sentiment = tape.add(sentiment_terms[0], sentiment_terms[1])?;
    let sentiment = tape.scale(sentiment, weights.sentiment_class[truth]);

    let mut logits = Vec::new();
    let mut reps = Vec::new();
    for j in 0..nodes.domain_count() {
        let (v, logit) = pool_capsule(tape, nodes.sentiment + j)?;
        reps.push(v);
        logits.push(logit);
    }
    let logits = tape.concat_cols(&logits)?;
    let p_domain = tape.softmax_rows(logits);
    let log_p = tape.log_softmax_rows(logits);
    let picked = tape.slice_cols(log_p, domain, 1)?;
    let domain_ce = tape.scale(picked, -1.0);
    let p_true = tape.slice_cols(p_domain, domain, 1)?;
    let recon_dom = tape.scale_by(reps[domain], p_true)?;

    let recon_sent = recon_sent.ok_or_else(|| Error::Contract("missing sentiment capsule".into()))?;
    let rs = tape.sub(recon_sent, instance)?;
    let rs = tape.sum_squares(rs);
    let rd = tape.sub(recon_dom, instance)?;
    let rd = tape.sum_squares(rd);
    let recon = tape.add(rs, rd)?;
    let recon = tape.scale(recon, weights.reconstruction);

    let total = tape.add(sentiment, domain_ce)?;
    let total = tape.add(total, recon)?;
    Ok(HeadNodes { loss: total, p_sentiment: [p_sentiment[0], p_sentiment[1]], p_domain })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{grad_check, streams};
    use proptest::prelude::*;

    fn random_hidden(rows: usize, d: usize, rng: &mut RandomSource) -> HiddenStates {
        HiddenStates::new(Matrix::from_parts(rows, d, rng.normal_vec(rows * d, 1.0))).unwrap()
    }

    fn random_params(d: usize, k: usize, rng: &mut RandomSource) -> CapsuleParams {
        let mut p = CapsuleParams::init(d, k, rng).unwrap();
        for t in p.tensors_mut() {
            for x in t.data_mut() {
                *x = rng.normal(0.5);
            }
        }
        p
    }

    #[test]
    fn attention_pool_examples() {
        let h = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let (alpha, v) = attention_pool(&h, &[0.0, 0.0]).unwrap();
        assert_eq!(alpha, vec![0.5, 0.5]);
        assert_eq!(v, vec![0.5, 0.5]);

        let (alpha, v) = attention_pool(&h, &[100.0, 0.0]).unwrap();
        assert!(alpha[0] > 1.0 - 1e-12);
        assert!((v[0] - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12);

        assert!(matches!(attention_pool(&h, &[1.0, 2.0, 3.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn sentiment_probability_examples() {
        assert_eq!(sentiment_probability(&[0.0, 0.0], &[1.0, 1.0], 0.0).unwrap(), 0.5);
        let p = sentiment_probability(&[1.0, 2.0], &[1.0, 1.0], -3.0).unwrap();
        assert_eq!(p, 0.5);
        let p = sentiment_probability(&[1.0], &[1.0], 0.0).unwrap();
        assert!((p - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn domain_probabilities_need_two_capsules() {
        assert!(matches!(domain_probabilities(&[1.0]), Err(Error::Config(_))));
        let p = domain_probabilities(&[0.0, 0.0, 0.0]).unwrap();
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn reconstruct_examples() {
        assert_eq!(reconstruct(0.5, &[2.0, 4.0]), vec![1.0, 2.0]);
        assert_eq!(reconstruct(0.0, &[2.0, 4.0]), vec![0.0, 0.0]);
        assert_eq!(reconstruct(1.0, &[2.0, -4.0]), vec![2.0, -4.0]);
    }

    #[test]
    fn zero_params_give_uniform_outputs() {
        let mut rng = RandomSource::new(1);
        let h = random_hidden(5, 4, &mut rng);
        let fwd = forward(&h, &CapsuleParams::zeros(4, 3).unwrap()).unwrap();
        assert_eq!(fwd.p_sentiment(), vec![0.5, 0.5]);
        assert!(fwd.p_domain().iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(fwd.instance, h.cls());
    }

    #[test]
    fn predict_examples() {
        let pred = predict_from(&[0.9, 0.2], &[0.2, 0.8]);
        assert_eq!(pred, Prediction { polarity: Polarity::Positive, domain: 1 });
        assert_eq!(predict_from(&[0.4, 0.4], &[1.0 / 3.0; 3]), Prediction { polarity: Polarity::Positive, domain: 0 });
        assert_eq!(predict_from(&[0.1, 0.7], &[0.5, 0.5]).polarity, Polarity::Negative);
    }

    #[test]
    fn zero_params_loss_is_three_ln2() {
        let mut rng = RandomSource::new(2);
        let h = random_hidden(3, 4, &mut rng);
        let fwd = forward(&h, &CapsuleParams::zeros(4, 2).unwrap()).unwrap();
        let weights = LossWeights { reconstruction: 0.0, ..LossWeights::default() };
        let l = loss(&fwd, Polarity::Negative, 1, &weights).unwrap();
        // Two sigmoid capsules at 0.5 plus a two-way uniform softmax.
        let expected = -2.0 * 0.5f64.ln() + 2.0f64.ln();
        assert!((l.total - expected).abs() < 1e-12);
        assert!((l.total - 2.0794).abs() < 1e-4);
    }

    #[test]
    fn perfect_activations_have_near_zero_loss() {
        let d = 4;
        let h = HiddenStates::new(Matrix::from_rows(&[[1.0, 0.0, 0.0, 0.0]; 3]).unwrap()).unwrap();
        let cap = |u: f64| Capsule::new(&[0.0; 4], &[u, 0.0, 0.0, 0.0], 0.0).unwrap();
        let params = CapsuleParams { sentiment: vec![cap(40.0), cap(-40.0)], domain: vec![cap(0.0), cap(40.0), cap(0.0)] };
        assert_eq!(params.hidden_size(), d);
        let fwd = forward(&h, &params).unwrap();
        let l = loss(&fwd, Polarity::Positive, 1, &LossWeights::default()).unwrap();
        assert!(l.total >= 0.0 && l.total < 1e-6, "{l:?}");
    }

    #[test]
    fn reconstruction_weight_enters_linearly() {
        let mut rng = RandomSource::new(3);
        let h = random_hidden(6, 5, &mut rng);
        let params = random_params(5, 3, &mut rng);
        let fwd = forward(&h, &params).unwrap();
        let off = loss(&fwd, Polarity::Positive, 2, &LossWeights { reconstruction: 0.0, ..Default::default() }).unwrap();
        let on = loss(&fwd, Polarity::Positive, 2, &LossWeights { reconstruction: 0.1, ..Default::default() }).unwrap();
        assert!(on.reconstruction > 0.0);
        assert!(((on.total - off.total) - 0.1 * on.reconstruction).abs() < 1e-12);
    }

    #[test]
    fn invalid_domain_label_is_rejected() {
        let mut rng = RandomSource::new(4);
        let h = random_hidden(3, 4, &mut rng);
        let fwd = forward(&h, &CapsuleParams::zeros(4, 2).unwrap()).unwrap();
        assert!(matches!(loss(&fwd, Polarity::Positive, 2, &LossWeights::default()), Err(Error::Input(_))));
    }

    #[test]
    fn forward_invariants_over_random_inputs() {
        let mut rng = RandomSource::with_stream(5, streams::SYNTH);
        for _ in 0..1000 {
            let rows = 2 + rng.below(7);
            let d = 1 + rng.below(6);
            let k = 2 + rng.below(4);
            let h = random_hidden(rows, d, &mut rng);
            let fwd = forward(&h, &random_params(d, k, &mut rng)).unwrap();
            for c in fwd.sentiment.iter().chain(&fwd.domain) {
                assert!((c.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert_eq!(c.reconstruction, reconstruct(c.probability, &c.representation));
            }
            assert!((fwd.p_domain().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(fwd.p_sentiment().iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn tape_forward_matches_plain_forward() {
        let mut rng = RandomSource::new(6);
        let h = random_hidden(5, 4, &mut rng);
        let params = random_params(4, 3, &mut rng);
        let weights = LossWeights::default();
        let fwd = forward(&h, &params).unwrap();
        let plain = loss(&fwd, Polarity::Negative, 0, &weights).unwrap();

        let mut tape = Tape::new();
        let nodes = CapsuleNodes::bind(&mut tape, &params);
        let hn = tape.leaf(h.matrix().clone());
        let out = loss_on_tape(&mut tape, hn, &nodes, Polarity::Negative, 0, &weights).unwrap();
        assert!((tape.scalar(out.loss) - plain.total).abs() < 1e-12);
        assert_eq!(tape.scalar(out.p_sentiment[0]), fwd.sentiment[0].probability);
        assert_eq!(tape.value(out.p_domain).data(), &fwd.p_domain()[..]);
        assert_eq!(out.prediction(&tape), predict(&fwd));
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = RandomSource::new(7);
        let (rows, d, k) = (5, 4, 3);
        let h = random_hidden(rows, d, &mut rng);
        let params = random_params(d, k, &mut rng);
        let weights = LossWeights { reconstruction: 0.1, sentiment_class: [1.3, 0.7] };
        let (polarity, domain) = (Polarity::Negative, 2);

        let mut tape = Tape::new();
        let nodes = CapsuleNodes::bind(&mut tape, &params);
        let hn = tape.leaf(h.matrix().clone());
        let out = loss_on_tape(&mut tape, hn, &nodes, polarity, domain, &weights).unwrap();
        tape.backward(out.loss).unwrap();

        let mut analytic: Vec<f64> = nodes.ids().iter().flat_map(|&id| tape.grad(id).into_data()).collect();
        analytic.extend(tape.grad(hn).into_data());
        let mut theta: Vec<f64> = params.tensors().iter().flat_map(|t| t.data().to_vec()).collect();
        let n_head = theta.len();
        theta.extend_from_slice(h.matrix().data());

        let f = |x: &[f64]| -> Result<f64> {
            let mut p = params.clone();
            let mut offset = 0;
            for t in p.tensors_mut() {
                let n = t.len();
                t.data_mut().copy_from_slice(&x[offset..offset + n]);
                offset += n;
            }
            let hx = HiddenStates::new(Matrix::new(rows, d, x[n_head..].to_vec())?)?;
            Ok(loss(&forward(&hx, &p)?, polarity, domain, &weights)?.total)
        };
        let report = grad_check(f, &theta, &analytic, 1e-5).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    proptest! {
        #[test]
        fn attention_is_shift_invariant(seed in any::<u64>(), c in -50.0f64..50.0) {
            let mut rng = RandomSource::new(seed);
            let h = Matrix::from_parts(4, 3, rng.normal_vec(12, 1.0));
            let w = rng.normal_vec(3, 1.0);
            let norm2: f64 = w.iter().map(|x| x * x).sum();
            prop_assume!(norm2 > 1e-3);
            // Moving every row along w adds exactly c to each score.
            let shift: Vec<f64> = w.iter().map(|x| c * x / norm2).collect();
            let shifted = h.add_row(&Matrix::row_vector(&shift).unwrap()).unwrap();
            let (a0, _) = attention_pool(&h, &w).unwrap();
            let (a1, _) = attention_pool(&shifted, &w).unwrap();
            for (x, y) in a0.iter().zip(&a1) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn predict_survives_monotone_transforms(a in 0.0f64..1.0, b in 0.0f64..1.0, k in 0.1f64..5.0) {
            let base = predict_from(&[a, b], &[0.5, 0.5]);
            let cubed = predict_from(&[a.powi(3), b.powi(3)], &[0.5, 0.5]);
            let logit = |p: f64| (p / (1.0 - p)).ln();
            let scaled = predict_from(&[k * a + 1.0, k * b + 1.0], &[0.5, 0.5]);
            prop_assert_eq!(base, cubed);
            prop_assert_eq!(base, scaled);
            if a > 0.0 && b > 0.0 {
                prop_assert_eq!(base, predict_from(&[logit(a), logit(b)], &[0.5, 0.5]));
            }
        }
    }
}
