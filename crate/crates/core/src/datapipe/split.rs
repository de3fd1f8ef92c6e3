use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::CorpusRecord;
use crate::error::{Error, Result};
use crate::numcore::{streams, RandomSource};

/// `(domain, polarity index)`; unlabelled records share polarity slot 2.
pub type StratumKey = (usize, usize);

pub fn stratum_of(r: &CorpusRecord) -> StratumKey {
    (r.domain, r.polarity.map_or(2, |p| p.index()))
}

fn strata(keys: &[StratumKey]) -> BTreeMap<StratumKey, Vec<usize>> {
    let mut map: BTreeMap<StratumKey, Vec<usize>> = BTreeMap::new();
    for (i, &k) in keys.iter().enumerate() {
        map.entry(k).or_default().push(i);
    }
    map
}

/// Record indices on each side of a split, both sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Stratified split over arbitrary stratum keys. Every stratum of two or
/// more records keeps at least one record on each side.
pub fn stratified_split(keys: &[StratumKey], ratio: f64, rng: &mut RandomSource) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(alloc::format!("split ratio {ratio} must lie in (0, 1)")));
    }
    let mut out = Split { train: Vec::new(), test: Vec::new(), warnings: Vec::new() };
    for (key, mut members) in strata(keys) {
        if members.len() < 2 {
            out.warnings.push(alloc::format!(
                "stratum domain={} polarity={} has {} record(s); kept in train",
                key.0,
                key.1,
                members.len()
            ));
            out.train.extend(members);
            continue;
        }
        rng.shuffle(&mut members);
        let n = members.len();
        let n_train = (libm::round(ratio * n as f64) as usize).clamp(1, n - 1);
        out.test.extend_from_slice(&members[n_train..]);
        members.truncate(n_train);
        out.train.extend(members);
    }
    out.train.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

/// Seeded stratified train/test split by polarity x domain.
pub fn split(records: &[CorpusRecord], ratio: f64, seed: u64) -> Result<Split> {
    let keys: Vec<StratumKey> = records.iter().map(stratum_of).collect();
    stratified_split(&keys, ratio, &mut RandomSource::with_stream(seed, streams::SPLIT))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold index of each record, parallel to the input records.
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn fold(&self, f: usize) -> Vec<usize> {
        self.assignment.iter().enumerate().filter(|(_, &a)| a == f).map(|(i, _)| i).collect()
    }

    /// Every record outside fold `f`.
    pub fn complement(&self, f: usize) -> Vec<usize> {
        self.assignment.iter().enumerate().filter(|(_, &a)| a != f).map(|(i, _)| i).collect()
    }
}

pub fn stratified_folds(keys: &[StratumKey], k: usize, rng: &mut RandomSource) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(alloc::format!("k-fold needs k >= 2, got {k}")));
    }
    if k > keys.len() {
        return Err(Error::Input(alloc::format!("k = {k} exceeds the {} available records", keys.len())));
    }
    let mut assignment = alloc::vec![0; keys.len()];
    // Dealing continues where the previous stratum stopped, so fold totals
    // stay within one of each other as well.
    let mut next = 0;
    for (_, mut members) in strata(keys) {
        rng.shuffle(&mut members);
        for i in members {
            assignment[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldPlan { k, assignment })
}

pub fn kfold_plan(records: &[CorpusRecord], k: usize, seed: u64) -> Result<FoldPlan> {
    let keys: Vec<StratumKey> = records.iter().map(stratum_of).collect();
    stratified_folds(&keys, k, &mut RandomSource::with_stream(seed, streams::FOLDS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::Polarity;
    use alloc::string::ToString;

    fn records(cells: &[(usize, Polarity, usize)]) -> Vec<CorpusRecord> {
        let mut out = Vec::new();
        for &(domain, p, n) in cells {
            for _ in 0..n {
                out.push(CorpusRecord {
                    id: alloc::format!("r{}", out.len()),
                    text: "t".to_string(),
                    score: None,
                    domain,
                    polarity: Some(p),
                });
            }
        }
        out
    }

    fn assert_partition(s: &Split, n: usize) {
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn balanced_split_is_80_20_per_stratum() {
        use Polarity::*;
        let recs = records(&[(0, Positive, 25), (0, Negative, 25), (1, Positive, 25), (1, Negative, 25)]);
        let s = split(&recs, 0.8, 7).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (80, 20));
        assert_partition(&s, 100);
        for key in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let test_in = s.test.iter().filter(|&&i| stratum_of(&recs[i]) == key).count();
            assert_eq!(test_in, 5);
        }
        assert_eq!(split(&recs, 0.8, 7).unwrap(), s);
        assert_ne!(split(&recs, 0.8, 8).unwrap(), s);
    }

    #[test]
    fn singleton_strata_go_to_train_with_warning() {
        let recs = records(&[(0, Polarity::Positive, 1), (1, Polarity::Negative, 4)]);
        let s = split(&recs, 0.8, 1).unwrap();
        assert_eq!(s.warnings.len(), 1);
        assert!(s.train.contains(&0));
        assert_partition(&s, 5);
        assert!(split(&recs, 1.0, 1).is_err());
    }

    #[test]
    fn fold_plan_examples() {
        let recs = records(&[(0, Polarity::Positive, 10)]);
        let plan = kfold_plan(&recs, 5, 3).unwrap();
        for f in 0..5 {
            assert_eq!(plan.fold(f).len(), 2);
        }
        assert_eq!(kfold_plan(&recs, 5, 3).unwrap(), plan);

        let recs = records(&[(0, Polarity::Positive, 50), (0, Polarity::Negative, 50)]);
        let plan = kfold_plan(&recs, 5, 3).unwrap();
        for f in 0..5 {
            let fold = plan.fold(f);
            let pos = fold.iter().filter(|&&i| recs[i].polarity == Some(Polarity::Positive)).count();
            assert_eq!((pos, fold.len() - pos), (10, 10));
        }
        assert!(kfold_plan(&recs[..3], 5, 0).is_err());
        assert!(kfold_plan(&recs, 1, 0).is_err());
    }
}
