use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BinaryConfusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl BinaryConfusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// K x K counts, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Class `c` against all others.
    pub fn one_vs_rest(&self, c: usize) -> BinaryConfusion {
        let tp = self.counts[c][c];
        let row: u64 = self.counts[c].iter().sum();
        let col: u64 = self.counts.iter().map(|r| r[c]).sum();
        let fn_ = row - tp;
        let fp = col - tp;
        BinaryConfusion { tp, fp, fn_, tn: self.total() - tp - fn_ - fp }
    }
}

/// Flags for ratios whose denominator was zero; such ratios are reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UndefinedFlags {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub undefined: UndefinedFlags,
}

fn check_lengths(preds: usize, truth: usize) -> Result<()> {
    if preds != truth {
        return Err(Error::Input(alloc::format!("{preds} predictions for {truth} labels")));
    }
    if preds == 0 {
        return Err(Error::Empty("confusion"));
    }
    Ok(())
}

pub fn confusion_binary<T: PartialEq>(preds: &[T], truth: &[T], positive: &T) -> Result<BinaryConfusion> {
    check_lengths(preds.len(), truth.len())?;
    let mut c = BinaryConfusion::default();
    for (p, t) in preds.iter().zip(truth) {
        match (p == positive, t == positive) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn confusion_matrix(preds: &[usize], truth: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    check_lengths(preds.len(), truth.len())?;
    let mut counts = alloc::vec![alloc::vec![0u64; classes]; classes];
    for (&p, &t) in preds.iter().zip(truth) {
        if p >= classes || t >= classes {
            return Err(Error::Input(alloc::format!("label {} outside {classes} classes", p.max(t))));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn harmonic(p: f64, r: f64) -> (f64, bool) {
    if p + r > 0.0 {
        (2.0 * p * r / (p + r), false)
    } else {
        (0.0, true)
    }
}

/// Accuracy, precision, recall and F1 of a binary confusion.
pub fn binary_metrics(c: &BinaryConfusion) -> Result<MetricSet> {
    let n = c.total();
    if n == 0 {
        return Err(Error::Empty("metrics"));
    }
    let (accuracy, _) = ratio(c.tp + c.tn, n);
    let (precision, p_undef) = ratio(c.tp, c.tp + c.fp);
    let (recall, r_undef) = ratio(c.tp, c.tp + c.fn_);
    let (f1, f_undef) = harmonic(precision, recall);
    Ok(MetricSet { accuracy, precision, recall, f1, undefined: UndefinedFlags { precision: p_undef, recall: r_undef, f1: f_undef } })
}

/// Multi-class metrics: accuracy = trace / N; precision and recall are
/// macro-averaged one-vs-rest; F1 is the harmonic mean of the two averages.
pub fn macro_metrics(m: &ConfusionMatrix) -> Result<MetricSet> {
    let n = m.total();
    if n == 0 {
        return Err(Error::Empty("metrics"));
    }
    let k = m.classes() as f64;
    let mut flags = UndefinedFlags::default();
    let (mut precision, mut recall) = (0.0, 0.0);
    for c in 0..m.classes() {
        let b = m.one_vs_rest(c);
        let (p, pu) = ratio(b.tp, b.tp + b.fp);
        let (r, ru) = ratio(b.tp, b.tp + b.fn_);
        precision += p / k;
        recall += r / k;
        flags.precision |= pu;
        flags.recall |= ru;
    }
    let (f1, fu) = harmonic(precision, recall);
    flags.f1 = fu;
    let (accuracy, _) = ratio(m.correct(), n);
    Ok(MetricSet { accuracy, precision, recall, f1, undefined: flags })
}

/// Recall of each class (share of its records predicted correctly).
pub fn per_class_accuracy(m: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..m.classes())
        .map(|c| {
            let row: u64 = m.counts[c].iter().sum();
            (row > 0).then(|| m.counts[c][c] as f64 / row as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_examples() {
        let all = [true; 6];
        let c = confusion_binary(&all, &all, &true).unwrap();
        assert_eq!(c, BinaryConfusion { tp: 6, ..Default::default() });

        let t = [true, false, true, false];
        let p = [false, true, false, true];
        let c = confusion_binary(&p, &t, &true).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));

        let p = [true, true, true, false, false];
        let t = [true, true, false, false, true];
        let c = confusion_binary(&p, &t, &true).unwrap();
        assert_eq!(c, BinaryConfusion { tp: 2, fp: 1, fn_: 1, tn: 1 });

        assert!(confusion_binary(&p, &t[..4], &true).is_err());
    }

    #[test]
    fn metric_examples() {
        let m = binary_metrics(&BinaryConfusion { tp: 3, fp: 1, fn_: 0, tn: 1 }).unwrap();
        assert!((m.accuracy - 0.8).abs() < 1e-15);
        assert!((m.precision - 0.75).abs() < 1e-15);
        assert_eq!(m.recall, 1.0);
        assert!((m.f1 - 6.0 / 7.0).abs() < 1e-15);

        let m = binary_metrics(&BinaryConfusion { tp: 4, fp: 0, fn_: 0, tn: 4 }).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));

        let m = binary_metrics(&BinaryConfusion { tp: 0, fp: 0, fn_: 5, tn: 5 }).unwrap();
        assert_eq!((m.precision, m.recall, m.accuracy), (0.0, 0.0, 0.5));
        assert!(m.undefined.precision && !m.undefined.recall && m.undefined.f1);

        assert!(binary_metrics(&BinaryConfusion::default()).is_err());
    }

    #[test]
    fn matrix_counts_and_macro_average() {
        let m = confusion_matrix(&[0, 1, 2, 2, 1], &[0, 1, 1, 2, 2], 3).unwrap();
        assert_eq!(m.counts, [[1, 0, 0], [0, 1, 1], [0, 1, 1]]);
        assert_eq!(m.total(), 5);
        let b = m.one_vs_rest(1);
        assert_eq!(b, BinaryConfusion { tp: 1, fp: 1, fn_: 1, tn: 2 });
        let s = macro_metrics(&m).unwrap();
        assert!((s.accuracy - 0.6).abs() < 1e-15);
        assert!((s.precision - (1.0 + 0.5 + 0.5) / 3.0).abs() < 1e-15);
        assert!((s.f1 - 2.0 * s.precision * s.recall / (s.precision + s.recall)).abs() < 1e-15);
        assert_eq!(per_class_accuracy(&m), [Some(1.0), Some(0.5), Some(0.5)]);
        assert!(confusion_matrix(&[3], &[0], 3).is_err());
    }
}
