use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::normalize;
use crate::error::{Error, Result};
use crate::label::Polarity;

/// One comment after normalization and labelling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
    pub score: Option<u8>,
    /// Index into the corpus domain list.
    pub domain: usize,
    /// `None` while undetermined; training requires a label.
    pub polarity: Option<Polarity>,
}

/// Score rule: 4 and 5 are positive, 1 is negative, 2 and 3 carry no label.
pub fn derive_polarity(score: i64) -> Result<Option<Polarity>> {
    match score {
        4 | 5 => Ok(Some(Polarity::Positive)),
        1 => Ok(Some(Polarity::Negative)),
        2 | 3 => Ok(None),
        _ => Err(Error::Input(alloc::format!("score {score} outside 1..5"))),
    }
}

/// A raw input row before cleaning. `line` is the 1-based data row number
/// used in error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRow {
    pub line: usize,
    pub id: String,
    pub domain: String,
    pub score: Option<String>,
    pub text: String,
    pub polarity: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows: usize,
    pub kept: usize,
    /// Empty after normalization.
    pub dropped_empty: usize,
    /// Score 2 or 3 without an explicit polarity.
    pub dropped_score: usize,
    /// Neither score nor polarity present.
    pub dropped_unlabeled: usize,
    /// `[positive, negative]` kept counts per domain, in domain order.
    pub per_domain: Vec<[usize; 2]>,
}

impl IngestSummary {
    pub fn positive(&self) -> usize {
        self.per_domain.iter().map(|c| c[0]).sum()
    }

    pub fn negative(&self) -> usize {
        self.per_domain.iter().map(|c| c[1]).sum()
    }
}

fn row_error(line: usize, msg: impl core::fmt::Display) -> Error {
    Error::Input(alloc::format!("row {line}: {msg}"))
}

/// Validates, normalizes and labels raw rows. An explicit polarity wins over
/// the score rule. Dropped rows are only tallied.
pub fn ingest<I>(rows: I, domains: &[String]) -> Result<(Vec<CorpusRecord>, IngestSummary)>
where
    I: IntoIterator<Item = RawRow>,
{
    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    let mut summary = IngestSummary { per_domain: alloc::vec![[0, 0]; domains.len()], ..Default::default() };
    for row in rows {
        summary.rows += 1;
        let line = row.line;
        if row.id.trim().is_empty() {
            return Err(row_error(line, "empty id"));
        }
        if !seen.insert(row.id.clone()) {
            return Err(row_error(line, alloc::format!("duplicate id {:?}", row.id)));
        }
        let domain = domains
            .iter()
            .position(|d| d == row.domain.trim())
            .ok_or_else(|| row_error(line, alloc::format!("unknown domain {:?}", row.domain)))?;
        let score = match row.score.as_deref().map(str::trim).filter(|s| !s.is_empty()) {
            None => None,
            Some(s) => {
                let v: i64 = s.parse().map_err(|_| row_error(line, alloc::format!("score {s:?} is not an integer")))?;
                derive_polarity(v).map_err(|e| row_error(line, e))?;
                Some(v as u8)
            }
        };
        let explicit = match row.polarity.as_deref().map(str::trim).filter(|s| !s.is_empty()) {
            None => None,
            Some(s) => Some(Polarity::parse(s).ok_or_else(|| row_error(line, alloc::format!("unknown polarity {s:?}")))?),
        };
        let Some(text) = normalize(&row.text) else {
            summary.dropped_empty += 1;
            continue;
        };
        let polarity = match (explicit, score) {
            (Some(p), _) => p,
            (None, Some(s)) => match derive_polarity(s as i64)? {
                Some(p) => p,
                None => {
                    summary.dropped_score += 1;
                    continue;
                }
            },
            (None, None) => {
                summary.dropped_unlabeled += 1;
                continue;
            }
        };
        summary.kept += 1;
        summary.per_domain[domain][polarity.index()] += 1;
        records.push(CorpusRecord { id: row.id, text, score, domain, polarity: Some(polarity) });
    }
    Ok((records, summary))
}
