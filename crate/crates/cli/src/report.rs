//! Evaluation reports: one JSON document plus CSV companions per table.

use bertcaps_core::datapipe::IngestSummary;
use bertcaps_core::evalkit::{
    ttest_matrix, BinaryConfusion, Evaluation, FoldSeries, KFoldResult, MetricSet, TTestMatrix,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::{g17, to_json};
use crate::outdir::OutputDir;

pub const AVERAGING: &str = "domain precision/recall are macro-averaged one-vs-rest; f1 is their harmonic mean";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainCount {
    pub domain: String,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub rows: usize,
    pub kept: usize,
    pub positive: usize,
    pub negative: usize,
    pub dropped_empty: usize,
    pub dropped_score: usize,
    pub dropped_unlabeled: usize,
    pub per_domain: Vec<DomainCount>,
}

impl DatasetSummary {
    pub fn new(summary: &IngestSummary, domains: &[String]) -> Self {
        DatasetSummary {
            rows: summary.rows,
            kept: summary.kept,
            positive: summary.positive(),
            negative: summary.negative(),
            dropped_empty: summary.dropped_empty,
            dropped_score: summary.dropped_score,
            dropped_unlabeled: summary.dropped_unlabeled,
            per_domain: domains
                .iter()
                .zip(&summary.per_domain)
                .map(|(d, c)| DomainCount { domain: d.clone(), positive: c[0], negative: c[1] })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarityReport {
    pub train: Option<MetricSet>,
    pub test: MetricSet,
    /// Positive is the positive class.
    pub confusion: BinaryConfusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRowReport {
    pub domain: String,
    pub records: usize,
    pub domain_accuracy: Option<f64>,
    pub polarity_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub labels: Vec<String>,
    pub train: Option<MetricSet>,
    pub metrics: MetricSet,
    pub per_domain_accuracy: Vec<DomainRowReport>,
    /// Rows are true domains, columns predicted domains.
    pub confusion: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPair {
    pub polarity: MetricSet,
    pub domain: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRow {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub epochs: usize,
    pub stopped_early: bool,
    pub polarity: MetricSet,
    pub domain: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldsReport {
    pub k: usize,
    pub series: Vec<FoldRow>,
    pub mean: TaskPair,
    /// Sample standard deviation across folds.
    pub std: TaskPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestReport {
    /// Which per-fold value the approaches are compared on.
    pub metric: String,
    pub labels: Vec<String>,
    pub p: Vec<Vec<f64>>,
    pub t: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: serde_json::Value,
    pub averaging: String,
    pub dataset_summary: DatasetSummary,
    pub polarity: PolarityReport,
    pub domain: DomainReport,
    pub folds: Option<FoldsReport>,
    pub ttest: Option<TTestReport>,
    /// The same comparison on domain accuracy.
    pub ttest_domain: Option<TTestReport>,
}

/// Per-fold accuracies of one approach, as written to `series.json` and
/// read back by `kfold --compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFile {
    pub label: String,
    pub polarity: Vec<f64>,
    pub domain: Vec<f64>,
}

fn domain_rows(eval: &Evaluation, labels: &[String]) -> Vec<DomainRowReport> {
    labels
        .iter()
        .zip(&eval.per_domain)
        .map(|(d, r)| DomainRowReport {
            domain: d.clone(),
            records: r.records,
            domain_accuracy: r.domain_accuracy,
            polarity_accuracy: r.polarity_accuracy,
        })
        .collect()
}

/// Report for one trained model: `test` is scored, `train` optionally.
pub fn single_run(
    config: serde_json::Value,
    summary: DatasetSummary,
    labels: &[String],
    train: Option<&Evaluation>,
    test: &Evaluation,
) -> Report {
    Report {
        config,
        averaging: AVERAGING.into(),
        dataset_summary: summary,
        polarity: PolarityReport {
            train: train.map(|e| e.polarity),
            test: test.polarity,
            confusion: test.polarity_confusion,
        },
        domain: DomainReport {
            labels: labels.to_vec(),
            train: train.map(|e| e.domain),
            metrics: test.domain,
            per_domain_accuracy: domain_rows(test, labels),
            confusion: test.domain_confusion.counts.clone(),
        },
        folds: None,
        ttest: None,
        ttest_domain: None,
    }
}

fn ttest_report(metric: &str, series: &[SeriesFile], pick: fn(&SeriesFile) -> &[f64]) -> Result<TTestReport> {
    let values: Vec<&[f64]> = series.iter().map(pick).collect();
    let TTestMatrix { t, p } = ttest_matrix(&values)?;
    Ok(TTestReport { metric: metric.into(), labels: series.iter().map(|s| s.label.clone()).collect(), p, t })
}

/// Report for a k-fold run. Confusions and the per-domain table pool the
/// out-of-fold predictions; metrics are fold means.
pub fn kfold(
    config: serde_json::Value,
    summary: DatasetSummary,
    labels: &[String],
    result: &KFoldResult,
    pooled: &Evaluation,
    series: &[SeriesFile],
) -> Result<Report> {
    let train_mean = |f: fn(&Evaluation) -> MetricSet| {
        FoldSeries::from_values(result.folds.iter().map(|o| f(&o.train)).collect()).mean
    };
    let mut report = single_run(config, summary, labels, None, pooled);
    report.polarity.train = Some(train_mean(|e| e.polarity));
    report.polarity.test = result.polarity.mean;
    report.domain.train = Some(train_mean(|e| e.domain));
    report.domain.metrics = result.domain.mean;
    report.folds = Some(FoldsReport {
        k: result.plan.k,
        series: result
            .folds
            .iter()
            .map(|o| FoldRow {
                fold: o.fold,
                train_size: o.train.predictions.len(),
                test_size: o.test.predictions.len(),
                epochs: o.history.epochs.len(),
                stopped_early: o.history.stopped_early,
                polarity: o.test.polarity,
                domain: o.test.domain,
            })
            .collect(),
        mean: TaskPair { polarity: result.polarity.mean, domain: result.domain.mean },
        std: TaskPair { polarity: result.polarity.std, domain: result.domain.std },
    });
    report.ttest = Some(ttest_report("polarity accuracy", series, |s| &s.polarity)?);
    report.ttest_domain = Some(ttest_report("domain accuracy", series, |s| &s.domain)?);
    Ok(report)
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::data(format!("cannot write csv: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::data(format!("cannot write csv: {e}")))
}

fn strings<const N: usize>(xs: [&str; N]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn metric_cells(m: &MetricSet) -> Vec<String> {
    vec![g17(m.accuracy), g17(m.precision), g17(m.recall), g17(m.f1)]
}

fn opt(x: Option<f64>) -> String {
    x.map(g17).unwrap_or_default()
}

fn metrics_table(train: Option<&MetricSet>, test: &MetricSet) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    if let Some(m) = train {
        rows.push([vec!["train".to_string()], metric_cells(m)].concat());
    }
    rows.push([vec!["test".to_string()], metric_cells(test)].concat());
    csv_bytes(&strings(["split", "accuracy", "precision", "recall", "f1"]), &rows)
}

fn matrix_table(labels: &[String], values: &[Vec<String>]) -> Result<Vec<u8>> {
    let header: Vec<String> = std::iter::once(String::new()).chain(labels.iter().cloned()).collect();
    let rows: Vec<Vec<String>> =
        labels.iter().zip(values).map(|(l, r)| std::iter::once(l.clone()).chain(r.iter().cloned()).collect()).collect();
    csv_bytes(&header, &rows)
}

/// Writes `report.json` and its CSV companions into `out`.
pub fn write_report(out: &OutputDir, report: &Report) -> Result<()> {
    let json = to_json(report).map_err(|e| Error::numeric(format!("cannot serialize report: {e}")))?;
    out.write("report.json", &json)?;
    out.write("polarity_metrics.csv", &metrics_table(report.polarity.train.as_ref(), &report.polarity.test)?)?;
    out.write("domain_metrics.csv", &metrics_table(report.domain.train.as_ref(), &report.domain.metrics)?)?;

    let rows: Vec<Vec<String>> = report
        .domain
        .per_domain_accuracy
        .iter()
        .map(|r| vec![r.domain.clone(), r.records.to_string(), opt(r.domain_accuracy), opt(r.polarity_accuracy)])
        .collect();
    out.write(
        "per_domain_accuracy.csv",
        &csv_bytes(&strings(["domain", "records", "domain_accuracy", "polarity_accuracy"]), &rows)?,
    )?;

    let c = &report.polarity.confusion;
    let polarity_labels = strings(["positive", "negative"]);
    let cells = vec![vec![c.tp.to_string(), c.fn_.to_string()], vec![c.fp.to_string(), c.tn.to_string()]];
    out.write("confusion_polarity.csv", &matrix_table(&polarity_labels, &cells)?)?;
    let cells: Vec<Vec<String>> =
        report.domain.confusion.iter().map(|r| r.iter().map(|x| x.to_string()).collect()).collect();
    out.write("confusion_domain.csv", &matrix_table(&report.domain.labels, &cells)?)?;

    if let Some(f) = &report.folds {
        let header = strings([
            "fold",
            "train_size",
            "test_size",
            "epochs",
            "polarity_accuracy",
            "polarity_precision",
            "polarity_recall",
            "polarity_f1",
            "domain_accuracy",
            "domain_precision",
            "domain_recall",
            "domain_f1",
        ]);
        let mut rows: Vec<Vec<String>> = f
            .series
            .iter()
            .map(|r| {
                [
                    vec![r.fold.to_string(), r.train_size.to_string(), r.test_size.to_string(), r.epochs.to_string()],
                    metric_cells(&r.polarity),
                    metric_cells(&r.domain),
                ]
                .concat()
            })
            .collect();
        for (name, pair) in [("mean", &f.mean), ("std", &f.std)] {
            let blank = vec![name.to_string(), String::new(), String::new(), String::new()];
            rows.push([blank, metric_cells(&pair.polarity), metric_cells(&pair.domain)].concat());
        }
        out.write("folds.csv", &csv_bytes(&header, &rows)?)?;
    }
    for (name, t) in [("ttest", &report.ttest), ("ttest_domain", &report.ttest_domain)] {
        if let Some(t) = t {
            let fmt = |m: &[Vec<f64>]| -> Vec<Vec<String>> {
                m.iter().map(|r| r.iter().map(|&x| g17(x)).collect()).collect()
            };
            out.write(&format!("{name}_t.csv"), &matrix_table(&t.labels, &fmt(&t.t))?)?;
            out.write(&format!("{name}_p.csv"), &matrix_table(&t.labels, &fmt(&t.p))?)?;
        }
    }
    Ok(())
}
