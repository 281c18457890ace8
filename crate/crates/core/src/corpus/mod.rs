//! Report corpus preparation: CSV ingest, reference-length filtering,
//! per-specialty splitting, extractiveness statistics and the Lead-3
//! baseline.

mod lead3;
mod rouge;
mod split;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lead3::{lead3, segment_sentences, ABBREVIATIONS};
pub use rouge::{lcs_len, rouge_precision, rouge_tokens, RougePrecision};
pub use split::{stratified_split, CorpusSplit, SplitRatios};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("column `{0}` not found in CSV header")]
    MissingColumn(String),
    #[error("malformed CSV at line {line}: {message}")]
    MalformedRow { line: u64, message: String },
    #[error("malformed report JSON at line {line}: {message}")]
    MalformedJson { line: usize, message: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("summary has no tokens")]
    EmptySummary,
}

/// One source document with its reference description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalReport {
    pub id: String,
    pub specialty: String,
    pub body: String,
    pub reference: String,
}

impl ClinicalReport {
    pub fn body_words(&self) -> usize {
        word_count(&self.body)
    }

    pub fn reference_words(&self) -> usize {
        word_count(&self.reference)
    }
}

/// Whitespace-delimited word count, punctuation kept attached.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// CSV header names for each report field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub id: String,
    pub specialty: String,
    pub body: String,
    pub reference: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            id: "sample_name".into(),
            specialty: "medical_specialty".into(),
            body: "transcription".into(),
            reference: "description".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    EmptyBody,
    EmptyReference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DroppedRow {
    /// Line of the record in the source file (header is line 1).
    pub line: u64,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub reports: Vec<ClinicalReport>,
    pub dropped: Vec<DroppedRow>,
}

pub fn ingest_corpus(path: &Path, columns: &ColumnMap) -> Result<Ingested, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    ingest_reader(file, columns)
}

/// Reads an RFC-4180 CSV. Rows with an empty body or reference are dropped
/// and reported; ids are de-duplicated with a `-N` suffix.
pub fn ingest_reader<R: Read>(reader: R, columns: &ColumnMap) -> Result<Ingested, CorpusError> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = csv.headers().map_err(|e| malformed(&e, 1))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CorpusError::MissingColumn(name.to_owned()))
    };
    let id_col = find(&columns.id)?;
    let specialty_col = find(&columns.specialty)?;
    let body_col = find(&columns.body)?;
    let reference_col = find(&columns.reference)?;

    let mut out = Ingested::default();
    let mut seen = HashSet::new();
    for (index, row) in csv.records().enumerate() {
        let row = row.map_err(|e| malformed(&e, index as u64 + 2))?;
        let line = row.position().map_or(index as u64 + 2, |p| p.line());
        let field = |col: usize| row.get(col).unwrap_or("").trim();

        let body = field(body_col);
        let reference = field(reference_col);
        if body.is_empty() {
            out.dropped.push(DroppedRow {
                line,
                reason: DropReason::EmptyBody,
            });
            continue;
        }
        if reference.is_empty() {
            out.dropped.push(DroppedRow {
                line,
                reason: DropReason::EmptyReference,
            });
            continue;
        }

        let base = match field(id_col) {
            "" => format!("row-{line}"),
            id => id.to_owned(),
        };
        let mut id = base.clone();
        let mut suffix = 2;
        while !seen.insert(id.clone()) {
            id = format!("{base}-{suffix}");
            suffix += 1;
        }

        out.reports.push(ClinicalReport {
            id,
            specialty: field(specialty_col).to_owned(),
            body: body.to_owned(),
            reference: reference.to_owned(),
        });
    }
    Ok(out)
}

fn malformed(err: &csv::Error, fallback_line: u64) -> CorpusError {
    let line = err.position().map_or(fallback_line, |p| p.line());
    CorpusError::MalformedRow {
        line,
        message: err.to_string(),
    }
}

/// Keeps the reports whose reference has at least `min_words` words.
pub fn filter_by_reference_length(reports: Vec<ClinicalReport>, min_words: usize) -> Vec<ClinicalReport> {
    reports
        .into_iter()
        .filter(|r| r.reference_words() >= min_words)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub report_count: usize,
    pub mean_body_words: f64,
    pub mean_reference_words: f64,
    pub rouge1_precision: f64,
    #[serde(rename = "rougeL_precision")]
    pub rouge_l_precision: f64,
}

/// Means over reports. The ROUGE fields are unweighted means of
/// `rouge_precision(reference, body)`.
pub fn corpus_stats(reports: &[ClinicalReport]) -> Result<CorpusStats, CorpusError> {
    if reports.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let n = reports.len() as f64;
    let mut body_words = 0usize;
    let mut reference_words = 0usize;
    let mut rouge1 = 0.0;
    let mut rouge_l = 0.0;
    for report in reports {
        body_words += report.body_words();
        reference_words += report.reference_words();
        let scores = rouge_precision(&report.reference, &report.body)?;
        rouge1 += scores.rouge1;
        rouge_l += scores.rouge_l;
    }
    Ok(CorpusStats {
        report_count: reports.len(),
        mean_body_words: body_words as f64 / n,
        mean_reference_words: reference_words as f64 / n,
        rouge1_precision: rouge1 / n,
        rouge_l_precision: rouge_l / n,
    })
}

/// Reads reports stored one JSON object per line.
pub fn read_reports_jsonl(path: &Path) -> Result<Vec<ClinicalReport>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_owned(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut reports = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let report = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedJson {
            line: i + 1,
            message: e.to_string(),
        })?;
        reports.push(report);
    }
    Ok(reports)
}

pub fn write_reports_jsonl<W: Write>(mut out: W, reports: &[ClinicalReport]) -> std::io::Result<()> {
    for report in reports {
        serde_json::to_writer(&mut out, report)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
