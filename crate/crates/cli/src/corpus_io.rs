//! Corpus CSV files: `id,domain,score,text[,polarity]` with a header row.

use std::collections::BTreeSet;
use std::path::Path;

use bertcaps_core::datapipe::{ingest, CorpusRecord, IngestSummary, RawRow};
use serde::Serialize;

use crate::error::{Error, Result};

const REQUIRED: [&str; 4] = ["id", "domain", "score", "text"];

/// Raw rows of a corpus file, with 1-based data row numbers.
pub fn read_rows(path: &Path) -> Result<Vec<RawRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| Error::data(format!("{}: {e}", path.display())))?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = column(name).ok_or_else(|| Error::data(format!("{}: missing column {name:?}", path.display())))?;
    }
    let polarity = column("polarity");
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::data(format!("{}: row {line}: {e}", path.display())))?;
        let field = |j: usize| rec.get(j).unwrap_or("").to_string();
        rows.push(RawRow {
            line,
            id: field(idx[0]),
            domain: field(idx[1]),
            score: Some(field(idx[2])),
            text: field(idx[3]),
            polarity: polarity.map(field),
        });
    }
    Ok(rows)
}

/// Domain names in first-seen order when none are declared.
pub fn infer_domains(rows: &[RawRow]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    rows.iter().map(|r| r.domain.trim().to_string()).filter(|d| seen.insert(d.clone())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadedCorpus {
    pub domains: Vec<String>,
    pub records: Vec<CorpusRecord>,
    pub summary: IngestSummary,
}

/// Reads, normalizes and labels a corpus file.
pub fn load_corpus(path: &Path, domains: Option<&[String]>) -> Result<LoadedCorpus> {
    let rows = read_rows(path)?;
    let domains = match domains {
        Some(d) => d.to_vec(),
        None => infer_domains(&rows),
    };
    let (records, summary) = ingest(rows, &domains).map_err(|e| Error::from(e).context(path.display()))?;
    if records.is_empty() {
        return Err(Error::data(format!("{}: no usable records", path.display())));
    }
    Ok(LoadedCorpus { domains, records, summary })
}

/// Writes cleaned records as a corpus CSV (explicit polarity column filled in).
pub fn corpus_csv(records: &[CorpusRecord], domains: &[String]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::data(format!("cannot write corpus: {e}"));
    w.write_record(["id", "domain", "score", "text", "polarity"]).map_err(err)?;
    for r in records {
        let score = r.score.map(|s| s.to_string()).unwrap_or_default();
        let polarity = r.polarity.map(|p| p.as_str()).unwrap_or("");
        w.write_record([r.id.as_str(), domains[r.domain].as_str(), &score, &r.text, polarity]).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::data(format!("cannot write corpus: {e}")))
}

/// `(id, text)` pairs for prediction; only those two columns are required.
pub fn read_texts(path: &Path) -> Result<Vec<(usize, String, String)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| Error::data(format!("{}: {e}", path.display())))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::data(format!("{}: missing column {name:?}", path.display())))
    };
    let (id, text) = (column("id")?, column("text")?);
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::data(format!("{}: row {}: {e}", path.display(), i + 1)))?;
        out.push((i + 1, rec.get(id).unwrap_or("").to_string(), rec.get(text).unwrap_or("").to_string()));
    }
    Ok(out)
}
