//! Evaluation: confusion counts, accuracy/precision/recall/F1, k-fold
//! cross-validation and paired t-tests between approaches.

mod confusion;
mod kfold;
mod stats;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use confusion::{
    binary_metrics, confusion_binary, confusion_matrix, macro_metrics, per_class_accuracy, BinaryConfusion,
    ConfusionMatrix, MetricSet, UndefinedFlags,
};
pub use kfold::{assemble, kfold_run, run_fold, FoldOutcome, FoldSeries, HiddenMap, KFoldResult};
pub use stats::{
    mean, paired_ttest, regularized_incomplete_beta, sample_std, student_t_cdf, student_t_two_sided, ttest_matrix,
    TTest, TTestMatrix,
};

use crate::capshead::Prediction;
use crate::datapipe::CorpusRecord;
use crate::encoder::HiddenStates;
use crate::error::Result;
use crate::label::Polarity;
use crate::model::Model;
use crate::trainer::{evaluate_examples, prepare_examples};

/// Accuracy breakdown for one domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainRow {
    pub records: usize,
    /// Share of this domain's records assigned to it (`None` without records).
    pub domain_accuracy: Option<f64>,
    /// Polarity accuracy within this domain.
    pub polarity_accuracy: Option<f64>,
}

/// Both tasks scored on one set of records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub predictions: Vec<Prediction>,
    pub polarity_confusion: BinaryConfusion,
    pub domain_confusion: ConfusionMatrix,
    pub polarity: MetricSet,
    pub domain: MetricSet,
    pub per_domain: Vec<DomainRow>,
}

/// Scores predictions against labelled records (positive class = positive).
pub fn score(records: &[CorpusRecord], predictions: Vec<Prediction>, domains: usize) -> Result<Evaluation> {
    let truth_p: Vec<Option<Polarity>> = records.iter().map(|r| r.polarity).collect();
    let pred_p: Vec<Option<Polarity>> = predictions.iter().map(|p| Some(p.polarity)).collect();
    let polarity_confusion = confusion_binary(&pred_p, &truth_p, &Some(Polarity::Positive))?;
    let truth_d: Vec<usize> = records.iter().map(|r| r.domain).collect();
    let pred_d: Vec<usize> = predictions.iter().map(|p| p.domain).collect();
    let domain_confusion = confusion_matrix(&pred_d, &truth_d, domains)?;
    let dom_acc = per_class_accuracy(&domain_confusion);
    let per_domain = (0..domains)
        .map(|d| {
            let members: Vec<usize> = (0..records.len()).filter(|&i| records[i].domain == d).collect();
            let correct = members.iter().filter(|&&i| Some(predictions[i].polarity) == records[i].polarity).count();
            DomainRow {
                records: members.len(),
                domain_accuracy: dom_acc[d],
                polarity_accuracy: (!members.is_empty()).then(|| correct as f64 / members.len() as f64),
            }
        })
        .collect();
    Ok(Evaluation {
        polarity: binary_metrics(&polarity_confusion)?,
        domain: macro_metrics(&domain_confusion)?,
        predictions,
        polarity_confusion,
        domain_confusion,
        per_domain,
    })
}

/// Runs `model` over labelled records and scores both tasks.
pub fn evaluate_records(
    model: &Model,
    records: &[CorpusRecord],
    hidden: Option<&BTreeMap<String, HiddenStates>>,
) -> Result<Evaluation> {
    let examples = prepare_examples(model, records, hidden)?;
    let (predictions, _) = evaluate_examples(model, &examples, &model.loss_weights())?;
    score(records, predictions, model.domain_count())
}
