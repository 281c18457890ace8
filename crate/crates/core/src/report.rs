//! Results and agreement tables rendered as Markdown and CSV.
//!
//! Aggregation runs on exact rationals; values are converted to `f64` and
//! rounded (half away from zero, two decimals) only when rendered. Both
//! renderings of a table share the same cell strings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agreement::{
    agreement_report, coherence_distribution, coherence_labels, AgreementError, AgreementOptions, AgreementReport,
    CoherenceDistribution,
};
use crate::metrics::{aggregate_cell, aggregate_row, derive_metrics, CellAggregate, CoherenceRating, Metric};
use crate::scalar::{format_2dp, round_half_away, Exact, Scalar};
use crate::tasks::{Annotation, Study};

/// Rows of the results table for each model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultRow {
    Precision,
    Recall,
    FScore,
    Accuracy,
    Coherence,
}

impl ResultRow {
    pub const ALL: [ResultRow; 5] = [
        ResultRow::Precision,
        ResultRow::Recall,
        ResultRow::FScore,
        ResultRow::Accuracy,
        ResultRow::Coherence,
    ];

    pub fn label(self) -> &'static str {
        match self.metric() {
            Some(m) => m.label(),
            None => "Coherence",
        }
    }

    fn metric(self) -> Option<Metric> {
        match self {
            ResultRow::Precision => Some(Metric::Precision),
            ResultRow::Recall => Some(Metric::Recall),
            ResultRow::FScore => Some(Metric::FScore),
            ResultRow::Accuracy => Some(Metric::Accuracy),
            ResultRow::Coherence => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultLine {
    pub row: ResultRow,
    /// One entry per evaluator; `None` when undefined or not annotated.
    pub evaluators: Vec<Option<f64>>,
    /// Tasks behind each evaluator's value, after excluding undefined ones.
    pub n_defined: Vec<usize>,
    pub average: Option<f64>,
    /// Highest rounded average for this row across models (ties included).
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResults {
    pub model_id: String,
    /// Tasks aggregated per evaluator.
    pub n_tasks: Vec<usize>,
    pub lines: Vec<ResultLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub evaluators: Vec<String>,
    pub expected_tasks: usize,
    pub models: Vec<ModelResults>,
}

fn defined_tasks(cell: &CellAggregate<Exact>, row: ResultRow) -> usize {
    match row.metric() {
        Some(m) => cell.n_tasks - cell.metric(m).n_excluded,
        None => cell.n_tasks,
    }
}

fn cell_value(cell: &CellAggregate<Exact>, row: ResultRow) -> Option<f64> {
    match row.metric() {
        Some(m) => cell.metric(m).mean.as_ref().map(Scalar::as_f64),
        None => Some(cell.coherence.as_f64()),
    }
}

/// Per-evaluator cell means and their average for every model of the study.
pub fn results_table(annotations: &[Annotation], study: &Study) -> ResultsTable {
    let evaluators = study.evaluators();
    let mut grouped: BTreeMap<(&str, &str), Vec<_>> = BTreeMap::new();
    for a in annotations {
        // Imported records already passed validation, so the waiver is honoured.
        if let Ok(derived) = derive_metrics::<Exact>(&a.counts, true) {
            grouped
                .entry((a.model_id.as_str(), a.evaluator_id.as_str()))
                .or_default()
                .push((derived, a.coherence));
        }
    }

    let mut models: Vec<ModelResults> = study
        .models()
        .into_iter()
        .map(|model| {
            let cells: Vec<Option<CellAggregate<Exact>>> = evaluators
                .iter()
                .map(|e| {
                    grouped
                        .get(&(model.as_str(), e.as_str()))
                        .and_then(|tasks| aggregate_cell(&model, e, tasks).ok())
                })
                .collect();
            let present: Vec<CellAggregate<Exact>> = cells.iter().flatten().cloned().collect();
            let average = aggregate_row(&present).ok();
            let lines = ResultRow::ALL
                .iter()
                .map(|&row| ResultLine {
                    row,
                    evaluators: cells
                        .iter()
                        .map(|c| c.as_ref().and_then(|c| cell_value(c, row)))
                        .collect(),
                    n_defined: cells
                        .iter()
                        .map(|c| c.as_ref().map_or(0, |c| defined_tasks(c, row)))
                        .collect(),
                    average: average.as_ref().and_then(|avg| match row.metric() {
                        Some(m) => avg.metric(m).map(Scalar::as_f64),
                        None => avg.coherence.as_ref().map(Scalar::as_f64),
                    }),
                    best: false,
                })
                .collect();
            ModelResults {
                model_id: model,
                n_tasks: cells.iter().map(|c| c.as_ref().map_or(0, |c| c.n_tasks)).collect(),
                lines,
            }
        })
        .collect();

    for (i, _) in ResultRow::ALL.iter().enumerate() {
        let best = models
            .iter()
            .filter_map(|m| m.lines[i].average)
            .map(|v| round_half_away(v, 2))
            .fold(f64::NEG_INFINITY, f64::max);
        for m in &mut models {
            let line = &mut m.lines[i];
            line.best = line.average.is_some_and(|v| round_half_away(v, 2) == best);
        }
    }

    ResultsTable {
        evaluators,
        expected_tasks: study.payloads.len(),
        models,
    }
}

/// Rows of cell strings with a header, shared by the Markdown and CSV output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Grid {
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
        out.push_str(&line(&self.header));
        out.push_str(&line(&vec!["---".to_owned(); self.header.len()]));
        for row in &self.rows {
            out.push_str(&line(row));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            writer.write_record(row).expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map_or_else(|| "n/a".to_owned(), format_2dp)
}

impl ResultsTable {
    pub fn grid(&self) -> Grid {
        let mut header = vec!["Model".to_owned(), "Metric".to_owned()];
        header.extend(self.evaluators.iter().cloned());
        header.extend(["Avg".to_owned(), "Best".to_owned()]);
        let mut rows = Vec::new();
        for model in &self.models {
            for line in &model.lines {
                let mut row = vec![model.model_id.clone(), line.row.label().to_owned()];
                for (value, &n) in line.evaluators.iter().zip(&line.n_defined) {
                    let mut cell = fmt_opt(*value);
                    if n < self.expected_tasks {
                        cell.push_str(&format!(" (n={n})"));
                    }
                    row.push(cell);
                }
                row.push(fmt_opt(line.average));
                row.push(if line.best { "*".to_owned() } else { String::new() });
                rows.push(row);
            }
        }
        Grid { header, rows }
    }
}

/// Alpha table: five raw rows and four derived rows; columns are the
/// all-rater alpha followed by each rater pair.
pub fn agreement_grid<T: Scalar>(report: &AgreementReport<T>) -> Grid {
    let mut header = vec!["Group".to_owned(), "Metric".to_owned(), report.raters.join("-")];
    if let Some(row) = report.rows.first() {
        header.extend(row.pairs.iter().map(|p| format!("{}-{}", p.first, p.second)));
    }
    let rows = report
        .rows
        .iter()
        .map(|row| {
            let group = if row.quantity.is_raw() {
                "Raw Counts"
            } else {
                "Derived Metrics"
            };
            let mut cells = vec![
                group.to_owned(),
                row.quantity.label().to_owned(),
                format_2dp(row.overall.alpha.as_f64()),
            ];
            cells.extend(
                row.pairs
                    .iter()
                    .map(|p| fmt_opt(p.result.as_ref().map(|r| r.alpha.as_f64()))),
            );
            cells
        })
        .collect();
    Grid { header, rows }
}

pub fn agreement_table(
    annotations: &[Annotation],
    options: AgreementOptions,
) -> Result<AgreementReport<Exact>, AgreementError> {
    agreement_report::<Exact>(annotations, options)
}

/// Percentage with two decimals, e.g. `91.67%`.
pub fn format_percent(share: f64) -> String {
    format!("{}%", format_2dp(share * 100.0))
}

pub fn coherence_summary(annotations: &[Annotation]) -> CoherenceDistribution {
    coherence_distribution(&coherence_labels(annotations))
}

pub fn coherence_markdown(dist: &CoherenceDistribution) -> String {
    let mut out = String::from("| Label | Count | Share |\n| --- | --- | --- |\n");
    for rating in CoherenceRating::ALL {
        out.push_str(&format!(
            "| {} | {} | {} |\n",
            rating.display_name(),
            dist.count(rating),
            format_percent(dist.share(rating))
        ));
    }
    out.push_str(&format!(
        "\nAll raters Coherent: {} of {} units ({})\n",
        dist.unanimous_coherent,
        dist.units,
        format_percent(dist.unanimity_rate())
    ));
    out
}

/// Every rendered report file, keyed by file name.
pub fn render_all(
    annotations: &[Annotation],
    study: &Study,
    options: AgreementOptions,
) -> Result<BTreeMap<&'static str, String>, AgreementError> {
    let results = results_table(annotations, study).grid();
    let agreement = agreement_grid(&agreement_table(annotations, options)?);
    let mut files = BTreeMap::new();
    files.insert("results.md", results.to_markdown());
    files.insert("results.csv", results.to_csv());
    files.insert("agreement.md", agreement.to_markdown());
    files.insert("agreement.csv", agreement.to_csv());
    files.insert("coherence.md", coherence_markdown(&coherence_summary(annotations)));
    Ok(files)
}
