use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::stats::{mean, sample_std};
use super::{evaluate_records, Evaluation, MetricSet, UndefinedFlags};
use crate::capshead::Prediction;
use crate::datapipe::{kfold_plan, CorpusRecord, FoldPlan};
use crate::encoder::HiddenStates;
use crate::error::{Error, Result};
use crate::trainer::{train, EncoderMode, TrainConfig, TrainHistory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    /// Indices (into the full corpus) of the held-out records.
    pub test_indices: Vec<usize>,
    pub test_predictions: Vec<Prediction>,
    pub train: Evaluation,
    pub test: Evaluation,
    pub history: TrainHistory,
}

/// Per-fold values of one task with their mean and sample std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSeries {
    pub values: Vec<MetricSet>,
    pub mean: MetricSet,
    pub std: MetricSet,
}

impl FoldSeries {
    pub fn from_values(values: Vec<MetricSet>) -> Self {
        let column = |f: fn(&MetricSet) -> f64| -> Vec<f64> { values.iter().map(f).collect() };
        let agg = |g: fn(&[f64]) -> f64| MetricSet {
            accuracy: g(&column(|m| m.accuracy)),
            precision: g(&column(|m| m.precision)),
            recall: g(&column(|m| m.recall)),
            f1: g(&column(|m| m.f1)),
            undefined: values.iter().fold(UndefinedFlags::default(), |acc, m| UndefinedFlags {
                precision: acc.precision | m.undefined.precision,
                recall: acc.recall | m.undefined.recall,
                f1: acc.f1 | m.undefined.f1,
            }),
        };
        let mean = agg(mean);
        let std = agg(sample_std);
        FoldSeries { values, mean, std }
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.values.iter().map(|m| m.accuracy).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KFoldResult {
    pub plan: FoldPlan,
    pub folds: Vec<FoldOutcome>,
    pub polarity: FoldSeries,
    pub domain: FoldSeries,
}

impl KFoldResult {
    /// Out-of-fold prediction for every record, in corpus order.
    pub fn pooled_predictions(&self) -> Vec<Prediction> {
        let mut out: Vec<Option<Prediction>> = alloc::vec![None; self.plan.assignment.len()];
        for f in &self.folds {
            for (&i, &p) in f.test_indices.iter().zip(&f.test_predictions) {
                out[i] = Some(p);
            }
        }
        out.into_iter().flatten().collect()
    }
}

fn pick(records: &[CorpusRecord], idx: &[usize]) -> Vec<CorpusRecord> {
    idx.iter().map(|&i| records[i].clone()).collect()
}

/// Trains on every fold but `fold` and evaluates on `fold`.
pub fn run_fold(
    records: &[CorpusRecord],
    domains: &[String],
    plan: &FoldPlan,
    fold: usize,
    mode: EncoderMode<'_>,
    config: &TrainConfig,
) -> Result<FoldOutcome> {
    let test_indices = plan.fold(fold);
    if test_indices.is_empty() {
        return Err(Error::Input(alloc::format!("fold {fold} is empty")));
    }
    let train_recs = pick(records, &plan.complement(fold));
    let test_recs = pick(records, &test_indices);
    let trained = train(&train_recs, domains, mode, config)?;
    let hidden = match mode {
        EncoderMode::Precomputed(map) => Some(map),
        EncoderMode::Toy => None,
    };
    let train_eval = evaluate_records(&trained.model, &train_recs, hidden)?;
    let test_eval = evaluate_records(&trained.model, &test_recs, hidden)?;
    Ok(FoldOutcome {
        fold,
        test_indices,
        test_predictions: test_eval.predictions.clone(),
        train: train_eval,
        test: test_eval,
        history: trained.history,
    })
}

pub fn assemble(plan: FoldPlan, mut folds: Vec<FoldOutcome>) -> KFoldResult {
    folds.sort_by_key(|f| f.fold);
    let polarity = FoldSeries::from_values(folds.iter().map(|f| f.test.polarity).collect());
    let domain = FoldSeries::from_values(folds.iter().map(|f| f.test.domain).collect());
    KFoldResult { plan, folds, polarity, domain }
}

/// Stratified k-fold cross-validation. Each fold trains with `config`.
pub fn kfold_run(
    records: &[CorpusRecord],
    domains: &[String],
    k: usize,
    mode: EncoderMode<'_>,
    config: &TrainConfig,
    seed: u64,
) -> Result<KFoldResult> {
    let plan = kfold_plan(records, k, seed)?;
    let folds = (0..k).map(|f| run_fold(records, domains, &plan, f, mode, config)).collect::<Result<Vec<_>>>()?;
    Ok(assemble(plan, folds))
}

/// Hidden-state lookup for precomputed-mode runs.
pub type HiddenMap = BTreeMap<String, HiddenStates>;
