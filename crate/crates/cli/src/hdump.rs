//! Text exchange format for encoder hidden states:
//!
//! ```text
//! HDUMP v1 <num_records> <d>
//! <record_id> <length>
//! <length lines of d space-separated floats>
//! ...
//! ```

use std::fmt;
use std::io::{self, BufRead, Write};

use bertcaps_core::encoder::HiddenStates;
use bertcaps_core::Matrix;

use crate::numfmt::g17;

/// Parse failure with its 1-based line and the byte offset of the
/// offending token from the start of the input.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, offset {}: {}", self.line, self.offset, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HdumpError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

pub fn write_hdump<W: Write>(mut w: W, records: &[(String, HiddenStates)]) -> io::Result<()> {
    let d = records.first().map_or(0, |(_, h)| h.hidden_size());
    writeln!(w, "HDUMP v1 {} {d}", records.len())?;
    for (id, h) in records {
        if id.is_empty() || id.contains(char::is_whitespace) {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, format!("record id {id:?} is empty or has whitespace")));
        }
        if h.hidden_size() != d {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, format!("record {id} has width {}, expected {d}", h.hidden_size())));
        }
        writeln!(w, "{id} {}", h.len())?;
        for r in 0..h.len() {
            let row: Vec<String> = h.matrix().row(r).iter().map(|&x| g17(x)).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
    }
    w.flush()
}

struct Lines<R> {
    reader: R,
    line: usize,
    /// Byte offset of the start of the current line.
    start: usize,
    next_start: usize,
    buf: String,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self, what: &str) -> Result<String, HdumpError> {
        self.buf.clear();
        let n = self.reader.read_line(&mut self.buf)?;
        self.line += 1;
        self.start = self.next_start;
        self.next_start += n;
        if n == 0 {
            return Err(self.error(0, format!("unexpected end of file, expected {what}")).into());
        }
        Ok(self.buf.trim_end_matches(['\n', '\r']).to_string())
    }

    fn error(&self, col: usize, message: String) -> ParseError {
        ParseError { line: self.line, offset: self.start + col, message }
    }
}

/// Whitespace-separated tokens of `s` with their byte columns.
fn tokens(s: &str) -> impl Iterator<Item = (usize, &str)> {
    s.split(' ').scan(0, |col, t| {
        let at = *col;
        *col += t.len() + 1;
        Some((at, t))
    })
}

fn parse_count(lines: &Lines<impl BufRead>, col: usize, tok: Option<&str>, what: &str) -> Result<usize, ParseError> {
    let tok = tok.ok_or_else(|| lines.error(col, format!("missing {what}")))?;
    tok.parse().map_err(|_| lines.error(col, format!("{what} {tok:?} is not a count")))
}

pub fn read_hdump<R: BufRead>(reader: R) -> Result<Vec<(String, HiddenStates)>, HdumpError> {
    let mut lines = Lines { reader, line: 0, start: 0, next_start: 0, buf: String::new() };
    let header: Vec<(usize, String)> = tokens(&lines.next("header")?).map(|(c, t)| (c, t.to_string())).collect();
    if header.len() != 4 || header[0].1 != "HDUMP" || header[1].1 != "v1" {
        return Err(lines.error(0, "header must be `HDUMP v1 <num_records> <d>`".into()).into());
    }
    let count = parse_count(&lines, header[2].0, Some(&header[2].1), "record count")?;
    let d = parse_count(&lines, header[3].0, Some(&header[3].1), "width")?;
    if count > 0 && d == 0 {
        return Err(lines.error(header[3].0, "width must be positive".into()).into());
    }

    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let head = lines.next("record header")?;
        let parts: Vec<(usize, &str)> = tokens(&head).collect();
        if parts.len() != 2 || parts[0].1.is_empty() {
            return Err(lines.error(0, "record header must be `<record_id> <length>`".into()).into());
        }
        let id = parts[0].1.to_string();
        let len = parse_count(&lines, parts[1].0, Some(parts[1].1), "length")?;
        let mut data = Vec::with_capacity(len * d);
        for _ in 0..len {
            let row = lines.next("hidden-state row")?;
            let mut n = 0;
            for (col, tok) in tokens(&row) {
                let x: f64 = tok.parse().map_err(|_| lines.error(col, format!("{tok:?} is not a number")))?;
                if !x.is_finite() {
                    return Err(lines.error(col, format!("non-finite value {tok}")).into());
                }
                data.push(x);
                n += 1;
            }
            if n != d {
                return Err(lines.error(0, format!("row has {n} values, expected {d}")).into());
            }
        }
        let h = Matrix::new(len, d, data)
            .and_then(HiddenStates::new)
            .map_err(|e| lines.error(0, format!("record {id}: {e}")))?;
        out.push((id, h));
    }
    let mut rest = String::new();
    lines.reader.read_line(&mut rest)?;
    if !rest.trim().is_empty() {
        lines.line += 1;
        lines.start = lines.next_start;
        return Err(lines.error(0, "trailing data after the declared records".into()).into());
    }
    Ok(out)
}
