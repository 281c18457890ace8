//! Blinded annotation tasks: bundle construction, export to disk, and import
//! of evaluator annotations back onto model ids.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ClinicalReport, CorpusSplit};
use crate::metrics::{validate_with_waiver, CoherenceRating, RawCounts, Violation};
use crate::rng::keyed_rng;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const INSTRUCTIONS_FILE: &str = "instructions.md";

/// Evaluator instructions shipped with every export.
pub const INSTRUCTIONS: &str = include_str!("instructions.md");

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("report `{report_id}` has no output from model `{model_id}`")]
    MissingOutput { report_id: String, model_id: String },
    #[error("duplicate output for model `{model_id}` on report `{report_id}`")]
    DuplicateOutput { report_id: String, model_id: String },
    #[error("empty output text for model `{model_id}` on report `{report_id}`")]
    EmptyOutput { report_id: String, model_id: String },
    #[error("no evaluators given")]
    NoEvaluators,
    #[error("no system outputs given")]
    NoModels,
    #[error("{0} models exceed the 26 available blind labels")]
    TooManyModels(usize),
    #[error("report `{0}` listed in the split is missing from the corpus")]
    UnknownReport(String),
    #[error("{} invalid annotation record(s):\n{}", .0.len(), .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    InvalidRecords(Vec<RecordDiagnostic>),
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> TaskError + '_ {
    move |source| TaskError::Io {
        path: path.to_owned(),
        source,
    }
}

/// A generated description for one report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemOutput {
    pub model_id: String,
    pub report_id: String,
    pub text: String,
}

/// Reads `model_id,report_id,text` CSV.
pub fn read_outputs_csv<R: Read>(reader: R) -> Result<Vec<SystemOutput>, csv::Error> {
    csv::Reader::from_reader(reader).deserialize().collect()
}

pub fn write_outputs_csv<W: std::io::Write>(writer: W, outputs: &[SystemOutput]) -> Result<(), csv::Error> {
    let mut csv = csv::Writer::from_writer(writer);
    for output in outputs {
        csv.serialize(output)?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub label: String,
    pub model_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskBundle {
    pub task_id: String,
    pub report: ClinicalReport,
    pub candidates: Vec<Candidate>,
    pub shuffle_seed: u64,
    pub assigned: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportView {
    pub id: String,
    pub body: String,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateView {
    pub label: String,
    pub text: String,
}

/// What an evaluator sees: no model identities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundlePayload {
    pub task_id: String,
    pub report: ReportView,
    pub candidates: Vec<CandidateView>,
    pub assigned: Vec<String>,
}

impl TaskBundle {
    pub fn payload(&self) -> BundlePayload {
        BundlePayload {
            task_id: self.task_id.clone(),
            report: ReportView {
                id: self.report.id.clone(),
                body: self.report.body.clone(),
                reference: self.report.reference.clone(),
            },
            candidates: self
                .candidates
                .iter()
                .map(|c| CandidateView {
                    label: c.label.clone(),
                    text: c.text.clone(),
                })
                .collect(),
            assigned: self.assigned.clone(),
        }
    }

    pub fn mapping(&self) -> BTreeMap<String, String> {
        self.candidates
            .iter()
            .map(|c| (c.label.clone(), c.model_id.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskMapping {
    pub task_id: String,
    pub mapping: BTreeMap<String, String>,
}

/// Blinding map for a study, plus the model and evaluator order used for
/// reporting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    #[serde(default)]
    pub models: Vec<String>,
    #[serde(default)]
    pub evaluators: Vec<String>,
    pub tasks: Vec<TaskMapping>,
}

pub fn blind_label(index: usize) -> String {
    char::from(b'A' + index as u8).to_string()
}

pub fn task_id(index: usize) -> String {
    format!("task-{:03}", index + 1)
}

/// The first `n` test-split reports under a shuffle keyed by `seed`.
pub fn sample_study_reports(
    split: &CorpusSplit,
    reports: &[ClinicalReport],
    n: usize,
    seed: u64,
) -> Result<Vec<ClinicalReport>, TaskError> {
    let by_id: HashMap<&str, &ClinicalReport> = reports.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut ids: Vec<&String> = split.test.iter().collect();
    ids.sort();
    ids.shuffle(&mut keyed_rng(seed, "study-sample"));
    ids.into_iter()
        .take(n)
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|r| (*r).clone())
                .ok_or_else(|| TaskError::UnknownReport(id.clone()))
        })
        .collect()
}

/// One bundle per report, every evaluator assigned every bundle. Models are
/// taken in sorted order and shuffled per task with a generator keyed by
/// `(seed, task_id)`. Outputs for reports outside `reports` are ignored.
pub fn build_tasks(
    reports: &[ClinicalReport],
    outputs: &[SystemOutput],
    evaluators: &[String],
    seed: u64,
) -> Result<Vec<TaskBundle>, TaskError> {
    if evaluators.is_empty() {
        return Err(TaskError::NoEvaluators);
    }
    let models: Vec<&str> = {
        let mut m: Vec<&str> = outputs.iter().map(|o| o.model_id.as_str()).collect();
        m.sort_unstable();
        m.dedup();
        m
    };
    if models.is_empty() {
        return Err(TaskError::NoModels);
    }
    if models.len() > 26 {
        return Err(TaskError::TooManyModels(models.len()));
    }

    let mut by_key: HashMap<(&str, &str), &SystemOutput> = HashMap::new();
    for output in outputs {
        if by_key.insert((&output.report_id, &output.model_id), output).is_some() {
            return Err(TaskError::DuplicateOutput {
                report_id: output.report_id.clone(),
                model_id: output.model_id.clone(),
            });
        }
    }

    reports
        .iter()
        .enumerate()
        .map(|(index, report)| {
            let id = task_id(index);
            let mut order = models.clone();
            order.shuffle(&mut keyed_rng(seed, &id));
            let candidates = order
                .iter()
                .enumerate()
                .map(|(slot, &model)| {
                    let output = by_key
                        .get(&(report.id.as_str(), model))
                        .ok_or_else(|| TaskError::MissingOutput {
                            report_id: report.id.clone(),
                            model_id: model.to_owned(),
                        })?;
                    if output.text.trim().is_empty() {
                        return Err(TaskError::EmptyOutput {
                            report_id: report.id.clone(),
                            model_id: model.to_owned(),
                        });
                    }
                    Ok(Candidate {
                        label: blind_label(slot),
                        model_id: model.to_owned(),
                        text: output.text.clone(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(TaskBundle {
                task_id: id,
                report: report.clone(),
                candidates,
                shuffle_seed: seed,
                assigned: evaluators.to_vec(),
            })
        })
        .collect()
}

pub fn manifest_for(bundles: &[TaskBundle], seed: u64) -> Manifest {
    let mut models: Vec<String> = bundles
        .iter()
        .flat_map(|b| b.candidates.iter().map(|c| c.model_id.clone()))
        .collect();
    models.sort();
    models.dedup();
    let mut evaluators: Vec<String> = Vec::new();
    for e in bundles.iter().flat_map(|b| &b.assigned) {
        if !evaluators.contains(e) {
            evaluators.push(e.clone());
        }
    }
    Manifest {
        seed,
        models,
        evaluators,
        tasks: bundles
            .iter()
            .map(|b| TaskMapping {
                task_id: b.task_id.clone(),
                mapping: b.mapping(),
            })
            .collect(),
    }
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text
}

/// Writes `<task_id>.json` per bundle, `manifest.json` and `instructions.md`.
pub fn export_tasks(bundles: &[TaskBundle], dir: &Path, seed: u64) -> Result<Vec<PathBuf>, TaskError> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let mut written = Vec::new();
    let mut write = |name: String, contents: String| {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(io_error(&path))?;
        written.push(path);
        Ok::<_, TaskError>(())
    };
    for bundle in bundles {
        write(format!("{}.json", bundle.task_id), to_pretty_json(&bundle.payload()))?;
    }
    write(MANIFEST_FILE.into(), to_pretty_json(&manifest_for(bundles, seed)))?;
    write(INSTRUCTIONS_FILE.into(), INSTRUCTIONS.to_owned())?;
    Ok(written)
}

/// Half-open character range an evaluator highlighted as a fact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactSpan {
    /// `"reference"` or a candidate's blind label.
    pub target: String,
    pub start: usize,
    pub end: usize,
}

/// An annotation as submitted: the candidate is named by blind label, by
/// model id, or both.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub task_id: String,
    pub evaluator_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(flatten)]
    pub counts: RawCounts,
    pub coherence: CoherenceRating,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fact_spans: Option<Vec<FactSpan>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub waiver: bool,
    pub submitted_at: DateTime<Utc>,
}

/// An annotation resolved against the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub task_id: String,
    pub evaluator_id: String,
    pub model_id: String,
    pub label: String,
    #[serde(flatten)]
    pub counts: RawCounts,
    pub coherence: CoherenceRating,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fact_spans: Vec<FactSpan>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub waiver: bool,
    pub submitted_at: DateTime<Utc>,
}

impl Annotation {
    pub fn key(&self) -> CellKey {
        CellKey {
            evaluator_id: self.evaluator_id.clone(),
            task_id: self.task_id.clone(),
            model_id: self.model_id.clone(),
        }
    }
}

/// `(evaluator, task, model)`: at most one live annotation each.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub evaluator_id: String,
    pub task_id: String,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordIssue {
    UnknownTask { task_id: String },
    UnknownLabel { label: String },
    UnknownModel { model_id: String },
    LabelModelMismatch { label: String, model_id: String },
    MissingCandidate,
    UnassignedEvaluator { evaluator_id: String },
    Invariant { violation: Violation, rule: String },
    SpanOutOfRange { target: String, start: usize, end: usize },
    UnknownSpanTarget { target: String },
    Duplicate,
    Schema { message: String },
}

impl std::fmt::Display for RecordIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RecordIssue::UnknownTask { task_id } => write!(f, "unknown task_id `{task_id}`"),
            RecordIssue::UnknownLabel { label } => write!(f, "unknown blind label `{label}`"),
            RecordIssue::UnknownModel { model_id } => write!(f, "unknown model_id `{model_id}`"),
            RecordIssue::LabelModelMismatch { label, model_id } => {
                write!(f, "label `{label}` does not map to model `{model_id}`")
            }
            RecordIssue::MissingCandidate => f.write_str("record names neither label nor model_id"),
            RecordIssue::UnassignedEvaluator { evaluator_id } => {
                write!(f, "evaluator `{evaluator_id}` is not assigned to this task")
            }
            RecordIssue::Invariant { rule, .. } => write!(f, "violates {rule}"),
            RecordIssue::SpanOutOfRange { target, start, end } => {
                write!(f, "fact span {start}..{end} out of range for `{target}`")
            }
            RecordIssue::UnknownSpanTarget { target } => write!(f, "unknown fact span target `{target}`"),
            RecordIssue::Duplicate => f.write_str("duplicate (evaluator, task, model) record"),
            RecordIssue::Schema { message } => write!(f, "schema: {message}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordDiagnostic {
    /// `file:line` or stream line of the offending record.
    pub source: String,
    pub issues: Vec<RecordIssue>,
}

impl std::fmt::Display for RecordDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let issues: Vec<String> = self.issues.iter().map(ToString::to_string).collect();
        write!(f, "{}: {}", self.source, issues.join("; "))
    }
}

/// Manifest plus evaluator-facing payloads, indexed for lookups.
#[derive(Debug, Clone)]
pub struct Study {
    pub manifest: Manifest,
    pub payloads: Vec<BundlePayload>,
    index: HashMap<String, usize>,
}

impl Study {
    pub fn new(manifest: Manifest, payloads: Vec<BundlePayload>) -> Result<Self, TaskError> {
        let mut by_id: HashMap<String, BundlePayload> = payloads.into_iter().map(|p| (p.task_id.clone(), p)).collect();
        // Payloads follow manifest order; bundles the manifest does not name are dropped.
        let payloads = manifest
            .tasks
            .iter()
            .map(|t| {
                by_id.remove(&t.task_id).ok_or_else(|| TaskError::Parse {
                    path: PathBuf::from(MANIFEST_FILE),
                    message: format!("no bundle for task `{}`", t.task_id),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let index = payloads
            .iter()
            .enumerate()
            .map(|(i, p)| (p.task_id.clone(), i))
            .collect();
        Ok(Self {
            manifest,
            payloads,
            index,
        })
    }

    pub fn from_bundles(bundles: &[TaskBundle], seed: u64) -> Self {
        Self::new(
            manifest_for(bundles, seed),
            bundles.iter().map(TaskBundle::payload).collect(),
        )
        .expect("manifest built from the same bundles")
    }

    /// Loads `manifest.json` and every bundle it names from `dir`.
    pub fn load(dir: &Path) -> Result<Self, TaskError> {
        fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, TaskError> {
            let text = fs::read_to_string(path).map_err(io_error(path))?;
            serde_json::from_str(&text).map_err(|e| TaskError::Parse {
                path: path.to_owned(),
                message: e.to_string(),
            })
        }
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest: Manifest = read_json(&manifest_path)?;
        let payloads = manifest
            .tasks
            .iter()
            .map(|t| read_json(&dir.join(format!("{}.json", t.task_id))))
            .collect::<Result<Vec<BundlePayload>, _>>()?;
        Self::new(manifest, payloads)
    }

    pub fn payload(&self, task_id: &str) -> Option<&BundlePayload> {
        self.index.get(task_id).map(|&i| &self.payloads[i])
    }

    pub fn mapping(&self, task_id: &str) -> Option<&BTreeMap<String, String>> {
        self.index.get(task_id).map(|&i| &self.manifest.tasks[i].mapping)
    }

    pub fn models(&self) -> Vec<String> {
        if !self.manifest.models.is_empty() {
            return self.manifest.models.clone();
        }
        let mut models: Vec<String> = self
            .manifest
            .tasks
            .iter()
            .flat_map(|t| t.mapping.values().cloned())
            .collect();
        models.sort();
        models.dedup();
        models
    }

    pub fn evaluators(&self) -> Vec<String> {
        if !self.manifest.evaluators.is_empty() {
            return self.manifest.evaluators.clone();
        }
        let mut out: Vec<String> = Vec::new();
        for e in self.payloads.iter().flat_map(|p| &p.assigned) {
            if !out.contains(e) {
                out.push(e.clone());
            }
        }
        out
    }

    /// Every `(evaluator, task, model)` cell a complete run fills.
    pub fn expected_cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for (payload, task) in self.payloads.iter().zip(&self.manifest.tasks) {
            for evaluator in &payload.assigned {
                for model in task.mapping.values() {
                    out.push(CellKey {
                        evaluator_id: evaluator.clone(),
                        task_id: task.task_id.clone(),
                        model_id: model.clone(),
                    });
                }
            }
        }
        out.sort();
        out
    }

    /// Resolves a record's candidate and checks it against the study and the
    /// count invariants. Duplicates are not checked here.
    pub fn resolve(&self, record: &AnnotationRecord) -> Result<Annotation, Vec<RecordIssue>> {
        let Some(payload) = self.payload(&record.task_id) else {
            return Err(vec![RecordIssue::UnknownTask {
                task_id: record.task_id.clone(),
            }]);
        };
        let mapping = self.mapping(&record.task_id).expect("indexed with payload");
        let mut issues = Vec::new();

        let resolved = match (&record.label, &record.model_id) {
            (Some(label), model) => match mapping.get(label) {
                Some(mapped) if model.as_ref().is_none_or(|m| m == mapped) => Some((label.clone(), mapped.clone())),
                Some(_) => {
                    issues.push(RecordIssue::LabelModelMismatch {
                        label: label.clone(),
                        model_id: model.clone().unwrap_or_default(),
                    });
                    None
                }
                None => {
                    issues.push(RecordIssue::UnknownLabel { label: label.clone() });
                    None
                }
            },
            (None, Some(model)) => match mapping.iter().find(|(_, m)| *m == model) {
                Some((label, _)) => Some((label.clone(), model.clone())),
                None => {
                    issues.push(RecordIssue::UnknownModel {
                        model_id: model.clone(),
                    });
                    None
                }
            },
            (None, None) => {
                issues.push(RecordIssue::MissingCandidate);
                None
            }
        };

        if !payload.assigned.contains(&record.evaluator_id) {
            issues.push(RecordIssue::UnassignedEvaluator {
                evaluator_id: record.evaluator_id.clone(),
            });
        }
        for violation in validate_with_waiver(&record.counts, record.waiver) {
            issues.push(RecordIssue::Invariant {
                violation,
                rule: violation.name().to_owned(),
            });
        }
        let spans = record.fact_spans.clone().unwrap_or_default();
        for span in &spans {
            let text = if span.target == "reference" {
                Some(&payload.report.reference)
            } else {
                payload
                    .candidates
                    .iter()
                    .find(|c| c.label == span.target)
                    .map(|c| &c.text)
            };
            match text {
                None => issues.push(RecordIssue::UnknownSpanTarget {
                    target: span.target.clone(),
                }),
                Some(text) if !(span.start < span.end && span.end <= text.chars().count()) => {
                    issues.push(RecordIssue::SpanOutOfRange {
                        target: span.target.clone(),
                        start: span.start,
                        end: span.end,
                    })
                }
                Some(_) => {}
            }
        }

        match resolved {
            Some((label, model_id)) if issues.is_empty() => Ok(Annotation {
                task_id: record.task_id.clone(),
                evaluator_id: record.evaluator_id.clone(),
                model_id,
                label,
                counts: record.counts,
                coherence: record.coherence,
                fact_spans: spans,
                waiver: record.waiver,
                submitted_at: record.submitted_at,
            }),
            _ => Err(issues),
        }
    }

    /// Expected cells without an annotation.
    pub fn coverage_gaps(&self, annotations: &[Annotation]) -> Vec<CellKey> {
        let done: HashSet<CellKey> = annotations.iter().map(Annotation::key).collect();
        self.expected_cells()
            .into_iter()
            .filter(|k| !done.contains(k))
            .collect()
    }
}

/// A record read from a file or stream, with its position for diagnostics.
#[derive(Debug, Clone)]
pub struct SourcedRecord {
    pub source: String,
    pub record: Result<AnnotationRecord, String>,
}

/// One JSON record per non-blank line.
pub fn read_records<R: Read>(reader: R, name: &str) -> Result<Vec<SourcedRecord>, std::io::Error> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(SourcedRecord {
            source: format!("{name}:{}", i + 1),
            record: serde_json::from_str(&line).map_err(|e| e.to_string()),
        });
    }
    Ok(out)
}

/// Reads every `*.jsonl` file in `dir` (sorted by name), or `path` itself
/// when it is a file.
pub fn read_records_path(path: &Path) -> Result<Vec<SourcedRecord>, TaskError> {
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io_error(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_owned()]
    };
    let mut out = Vec::new();
    for file in files {
        let reader = fs::File::open(&file).map_err(io_error(&file))?;
        let name = file
            .file_name()
            .map_or_else(|| file.display().to_string(), |n| n.to_string_lossy().into_owned());
        out.extend(read_records(reader, &name).map_err(io_error(&file))?);
    }
    Ok(out)
}

/// Resolves and validates every record; fails with all diagnostics if any
/// record is bad. Output is sorted by `(evaluator, task, model)`.
pub fn import_annotations(study: &Study, records: Vec<SourcedRecord>) -> Result<Vec<Annotation>, TaskError> {
    let mut diagnostics = Vec::new();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for SourcedRecord { source, record } in records {
        let resolved = match record {
            Ok(record) => study.resolve(&record),
            Err(message) => Err(vec![RecordIssue::Schema { message }]),
        };
        match resolved {
            Ok(annotation) if !seen.insert(annotation.key()) => diagnostics.push(RecordDiagnostic {
                source,
                issues: vec![RecordIssue::Duplicate],
            }),
            Ok(annotation) => out.push(annotation),
            Err(issues) => diagnostics.push(RecordDiagnostic { source, issues }),
        }
    }
    if !diagnostics.is_empty() {
        return Err(TaskError::InvalidRecords(diagnostics));
    }
    out.sort_by_key(Annotation::key);
    Ok(out)
}

pub fn write_annotations_jsonl<W: std::io::Write>(mut out: W, annotations: &[Annotation]) -> std::io::Result<()> {
    for a in annotations {
        serde_json::to_writer(&mut out, a)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_annotations_jsonl(path: &Path) -> Result<Vec<Annotation>, TaskError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| TaskError::Parse {
                path: path.to_owned(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}
