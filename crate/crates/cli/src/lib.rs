//! Command-line front end for the evaluation pipeline.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use facteval::agreement::{AgreementOptions, DistanceMetric};
use facteval::corpus::{
    corpus_stats, filter_by_reference_length, ingest_corpus, lead3, read_reports_jsonl, stratified_split,
    write_reports_jsonl, ClinicalReport, ColumnMap, CorpusSplit, DropReason, SplitRatios,
};
use facteval::report::{agreement_grid, agreement_table, render_all, results_table, Grid};
use facteval::tasks::{
    build_tasks, export_tasks, import_annotations, read_annotations_jsonl, read_outputs_csv, read_records,
    read_records_path, sample_study_reports, write_annotations_jsonl, write_outputs_csv, Annotation, Study,
    SystemOutput,
};
use facteval_service::ServiceConfig;
use serde::Serialize;
use tracing_subscriber::filter::LevelFilter;

const LEAD3_MODEL: &str = "lead-3";

#[derive(Debug, Parser)]
#[command(
    name = "facteval",
    version,
    about = "Fact-counting human evaluation of generated clinical descriptions"
)]
struct Cli {
    /// Seed for every shuffle (split, study sampling, candidate order).
    #[arg(long, global = true, default_value_t = facteval::DEFAULT_SEED)]
    seed: u64,
    /// Output format for tables and summaries.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Suppress progress messages on standard error.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Md,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Distance {
    Interval,
    Nominal,
}

impl From<Distance> for DistanceMetric {
    fn from(d: Distance) -> Self {
        match d {
            Distance::Interval => DistanceMetric::Interval,
            Distance::Nominal => DistanceMetric::Nominal,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Subset {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read a report CSV and write one JSON report per line.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        columns: Columns,
    },
    /// Keep reports whose reference has at least --min-words words.
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        min_words: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-specialty train/dev/test split manifest.
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        /// Train, dev and test shares; must sum to 1.
        #[arg(long, value_parser = parse_ratios, default_value = "0.8,0.1,0.1")]
        ratios: SplitRatios,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Corpus size, mean lengths and reference-vs-body ROUGE precision.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        min_words: usize,
    },
    /// First-three-sentence descriptions as a system-output CSV.
    Lead3 {
        #[arg(long = "in")]
        input: PathBuf,
        /// Restrict to one subset of this split manifest.
        #[arg(long, requires = "subset")]
        split: Option<PathBuf>,
        #[arg(long, value_enum, requires = "split")]
        subset: Option<Subset>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample study reports from the test split and export blinded bundles.
    BuildTasks {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// System-output CSV (model_id,report_id,text); repeatable.
        #[arg(long, required = true)]
        outputs: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        evaluators: Vec<String>,
        #[arg(long, default_value_t = 10)]
        n_reports: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve bundles to evaluators and record their annotations.
    Serve {
        #[arg(long)]
        bundles: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Accept `?overwrite=true` resubmissions.
        #[arg(long)]
        allow_overwrite: bool,
    },
    /// Validate annotation records and resolve blind labels to models.
    Import {
        #[arg(long)]
        bundles: PathBuf,
        /// A .jsonl file, a directory of them, or `-` for standard input.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-model, per-evaluator metric table.
    Metrics {
        #[arg(long)]
        bundles: PathBuf,
        /// Resolved annotations written by `import`.
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Krippendorff's alpha for every counted and derived quantity.
    Agreement {
        #[arg(long)]
        annotations: PathBuf,
        /// Distance for the coherence row.
        #[arg(long, value_enum, default_value = "interval")]
        coherence_metric: Distance,
    },
    /// Write results, agreement and coherence tables to a directory.
    Report {
        #[arg(long)]
        bundles: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, value_enum, default_value = "interval")]
        coherence_metric: Distance,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Columns {
    #[arg(long, default_value = "sample_name")]
    id_column: String,
    #[arg(long, default_value = "medical_specialty")]
    specialty_column: String,
    #[arg(long, default_value = "transcription")]
    body_column: String,
    #[arg(long, default_value = "description")]
    reference_column: String,
}

impl From<Columns> for ColumnMap {
    fn from(c: Columns) -> Self {
        ColumnMap {
            id: c.id_column,
            specialty: c.specialty_column,
            body: c.body_column,
            reference: c.reference_column,
        }
    }
}

struct Ctx {
    seed: u64,
    format: Option<Format>,
    quiet: bool,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit status: 0 on success, 1 for data errors, 2 for usage errors.
pub fn run_from<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let ctx = Ctx {
        seed: cli.seed,
        format: cli.format,
        quiet: cli.quiet,
    };
    match run(cli.command, &ctx) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            1
        }
    }
}

fn run(command: Command, ctx: &Ctx) -> Result<()> {
    match command {
        Command::Ingest { input, out, columns } => {
            let ingested = ingest_corpus(&input, &columns.into())?;
            for d in &ingested.dropped {
                let why = match d.reason {
                    DropReason::EmptyBody => "empty body",
                    DropReason::EmptyReference => "empty reference",
                };
                ctx.note(format!("dropped line {}: {why}", d.line));
            }
            ctx.note(format!(
                "{} reports kept, {} dropped",
                ingested.reports.len(),
                ingested.dropped.len()
            ));
            write_file(&out, |w| Ok(write_reports_jsonl(w, &ingested.reports)?))
        }
        Command::Filter { input, min_words, out } => {
            let reports = load_reports(&input, ctx)?;
            let before = reports.len();
            let kept = filter_by_reference_length(reports, min_words);
            ctx.note(format!(
                "{} of {before} reports have references of {min_words}+ words",
                kept.len()
            ));
            write_file(&out, |w| Ok(write_reports_jsonl(w, &kept)?))
        }
        Command::Split { input, ratios, out } => {
            let reports = load_reports(&input, ctx)?;
            let split = stratified_split(&reports, ratios, ctx.seed)?;
            ctx.note(format!(
                "train {} / dev {} / test {}",
                split.train.len(),
                split.dev.len(),
                split.test.len()
            ));
            let json = pretty(&split)?;
            match out {
                Some(path) => write_file(&path, |w| Ok(w.write_all(json.as_bytes())?)),
                None => stdout(&json),
            }
        }
        Command::Stats { input, min_words } => {
            let reports = filter_by_reference_length(load_reports(&input, ctx)?, min_words);
            let stats = corpus_stats(&reports)?;
            let text = match ctx.format_or(Format::Json) {
                Format::Json => pretty(&stats)?,
                fmt => render_grid(
                    &Grid {
                        header: vec!["Statistic".into(), "Value".into()],
                        rows: vec![
                            vec!["Reports".into(), stats.report_count.to_string()],
                            vec!["Mean body words".into(), format!("{:.1}", stats.mean_body_words)],
                            vec![
                                "Mean reference words".into(),
                                format!("{:.1}", stats.mean_reference_words),
                            ],
                            vec!["ROUGE-1 precision".into(), format!("{:.3}", stats.rouge1_precision)],
                            vec!["ROUGE-L precision".into(), format!("{:.3}", stats.rouge_l_precision)],
                        ],
                    },
                    fmt,
                ),
            };
            stdout(&text)
        }
        Command::Lead3 {
            input,
            split,
            subset,
            out,
        } => {
            let mut reports = load_reports(&input, ctx)?;
            if let (Some(split), Some(subset)) = (split, subset) {
                let split = load_split(&split)?;
                let ids = match subset {
                    Subset::Train => &split.train,
                    Subset::Dev => &split.dev,
                    Subset::Test => &split.test,
                };
                reports.retain(|r| ids.contains(&r.id));
            }
            let outputs: Vec<SystemOutput> = reports
                .iter()
                .map(|r| SystemOutput {
                    model_id: LEAD3_MODEL.into(),
                    report_id: r.id.clone(),
                    text: lead3(r),
                })
                .collect();
            ctx.note(format!("{} lead-3 descriptions", outputs.len()));
            write_file(&out, |w| Ok(write_outputs_csv(w, &outputs)?))
        }
        Command::BuildTasks {
            input,
            split,
            outputs,
            evaluators,
            n_reports,
            out,
        } => {
            let reports = load_reports(&input, ctx)?;
            let split = load_split(&split)?;
            let sampled = sample_study_reports(&split, &reports, n_reports, ctx.seed)?;
            if sampled.len() < n_reports {
                ctx.note(format!("test split has only {} reports", sampled.len()));
            }
            let mut all = Vec::new();
            for path in &outputs {
                let file = File::open(path).with_context(|| path.display().to_string())?;
                all.extend(read_outputs_csv(file).with_context(|| path.display().to_string())?);
            }
            let bundles = build_tasks(&sampled, &all, &evaluators, ctx.seed)?;
            let written = export_tasks(&bundles, &out, ctx.seed)?;
            ctx.note(format!("{} files written to {}", written.len(), out.display()));
            Ok(())
        }
        Command::Serve {
            bundles,
            data,
            port,
            host,
            allow_overwrite,
        } => {
            let level = if ctx.quiet {
                LevelFilter::WARN
            } else {
                LevelFilter::INFO
            };
            let _ = tracing_subscriber::fmt()
                .with_max_level(level)
                .with_writer(io::stderr)
                .try_init();
            let config = ServiceConfig {
                bundles,
                data,
                addr: SocketAddr::new(host, port),
                allow_overwrite,
            };
            tokio::runtime::Runtime::new()?.block_on(facteval_service::serve(config))?;
            Ok(())
        }
        Command::Import { bundles, input, out } => {
            let study = Study::load(&bundles)?;
            let records = if input.as_os_str() == "-" {
                read_records(io::stdin().lock(), "stdin")?
            } else {
                read_records_path(&input)?
            };
            let annotations = import_annotations(&study, records)?;
            let gaps = study.coverage_gaps(&annotations);
            ctx.note(format!(
                "{} annotations imported, {} expected cells missing",
                annotations.len(),
                gaps.len()
            ));
            write_file(&out, |w| Ok(write_annotations_jsonl(w, &annotations)?))
        }
        Command::Metrics { bundles, annotations } => {
            let study = Study::load(&bundles)?;
            let annotations = load_annotations(&annotations)?;
            note_gaps(&study, &annotations, ctx);
            let table = results_table(&annotations, &study);
            let text = match ctx.format_or(Format::Md) {
                Format::Json => pretty(&table)?,
                fmt => render_grid(&table.grid(), fmt),
            };
            stdout(&text)
        }
        Command::Agreement {
            annotations,
            coherence_metric,
        } => {
            let annotations = load_annotations(&annotations)?;
            let report = agreement_table(
                &annotations,
                AgreementOptions {
                    coherence_metric: coherence_metric.into(),
                },
            )?;
            let text = match ctx.format_or(Format::Md) {
                Format::Json => pretty(&report.to_f64())?,
                fmt => render_grid(&agreement_grid(&report), fmt),
            };
            stdout(&text)
        }
        Command::Report {
            bundles,
            annotations,
            coherence_metric,
            out,
        } => {
            let study = Study::load(&bundles)?;
            let annotations = load_annotations(&annotations)?;
            note_gaps(&study, &annotations, ctx);
            let files = render_all(
                &annotations,
                &study,
                AgreementOptions {
                    coherence_metric: coherence_metric.into(),
                },
            )?;
            fs::create_dir_all(&out).with_context(|| out.display().to_string())?;
            for (name, text) in &files {
                write_file(&out.join(name), |w| Ok(w.write_all(text.as_bytes())?))?;
            }
            ctx.note(format!("{} files written to {}", files.len(), out.display()));
            Ok(())
        }
    }
}

fn parse_ratios(s: &str) -> Result<SplitRatios, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    let [train, dev, test] = parts[..] else {
        return Err(format!("expected three comma-separated shares, got {}", parts.len()));
    };
    SplitRatios::new(train, dev, test).map_err(|e| e.to_string())
}

/// The error and its causes, skipping causes already spelled out.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let cause = cause.to_string();
        if !msg.contains(&cause) {
            msg = format!("{msg}: {cause}");
        }
    }
    msg
}

/// `.csv` inputs are ingested with the default columns; anything else is
/// read as report JSONL.
fn load_reports(path: &Path, ctx: &Ctx) -> Result<Vec<ClinicalReport>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let ingested = ingest_corpus(path, &ColumnMap::default())?;
        if !ingested.dropped.is_empty() {
            ctx.note(format!("{} rows dropped for empty fields", ingested.dropped.len()));
        }
        Ok(ingested.reports)
    } else {
        Ok(read_reports_jsonl(path)?)
    }
}

fn load_split(path: &Path) -> Result<CorpusSplit> {
    let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
    serde_json::from_str(&text).with_context(|| format!("{}: invalid split manifest", path.display()))
}

fn load_annotations(path: &Path) -> Result<Vec<Annotation>> {
    let annotations = read_annotations_jsonl(path)?;
    if annotations.is_empty() {
        bail!("{}: no annotations", path.display());
    }
    Ok(annotations)
}

fn note_gaps(study: &Study, annotations: &[Annotation], ctx: &Ctx) {
    let gaps = study.coverage_gaps(annotations);
    if !gaps.is_empty() {
        ctx.note(format!("warning: {} expected cells have no annotation", gaps.len()));
    }
}

fn render_grid(grid: &Grid, format: Format) -> String {
    match format {
        Format::Csv => grid.to_csv(),
        _ => grid.to_markdown(),
    }
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn stdout(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| parent.display().to_string())?;
    }
    let file = File::create(path).with_context(|| path.display().to_string())?;
    let mut w = BufWriter::new(file);
    body(&mut w).with_context(|| path.display().to_string())?;
    w.flush().with_context(|| path.display().to_string())?;
    Ok(())
}
