//! Shared fixtures for the acceptance suite: the bundled sample study and
//! an in-process run of the command-line pipeline over it.

use std::path::{Path, PathBuf};

/// Files written by `facteval report`, compared against `data/golden`.
pub const REPORT_FILES: [&str; 5] = [
    "agreement.csv",
    "agreement.md",
    "coherence.md",
    "results.csv",
    "results.md",
];

fn workspace() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../.."))
}

pub fn sample(name: &str) -> PathBuf {
    workspace().join("data/sample").join(name)
}

pub fn golden(name: &str) -> PathBuf {
    workspace().join("data/golden").join(name)
}

fn step(args: &[&str]) -> Result<(), String> {
    let argv = std::iter::once("facteval")
        .chain(["--quiet"])
        .chain(args.iter().copied());
    match facteval_cli::run_from(argv) {
        0 => Ok(()),
        code => Err(format!("`facteval {}` exited with {code}", args.join(" "))),
    }
}

/// ingest → filter → split → lead3 → build-tasks → import → report inside
/// `dir`; returns the report directory.
pub fn run_pipeline(dir: &Path) -> Result<PathBuf, String> {
    let p = |name: &str| dir.join(name).display().to_string();
    let s = |name: &str| sample(name).display().to_string();
    step(&["ingest", "--in", &s("sample_corpus.csv"), "--out", &p("reports.jsonl")])?;
    step(&[
        "filter",
        "--in",
        &p("reports.jsonl"),
        "--min-words",
        "12",
        "--out",
        &p("filtered.jsonl"),
    ])?;
    step(&[
        "split",
        "--in",
        &p("filtered.jsonl"),
        "--ratios",
        "0.6,0.2,0.2",
        "--out",
        &p("split.json"),
    ])?;
    step(&[
        "lead3",
        "--in",
        &p("filtered.jsonl"),
        "--split",
        &p("split.json"),
        "--subset",
        "test",
        "--out",
        &p("lead3.csv"),
    ])?;
    step(&[
        "build-tasks",
        "--in",
        &p("filtered.jsonl"),
        "--split",
        &p("split.json"),
        "--outputs",
        &p("lead3.csv"),
        "--outputs",
        &s("synthetic_outputs.csv"),
        "--evaluators",
        "e1,e2,e3",
        "--out",
        &p("bundles"),
    ])?;
    step(&[
        "import",
        "--bundles",
        &p("bundles"),
        "--in",
        &s("synthetic_annotations.jsonl"),
        "--out",
        &p("annotations.jsonl"),
    ])?;
    step(&[
        "report",
        "--bundles",
        &p("bundles"),
        "--annotations",
        &p("annotations.jsonl"),
        "--out",
        &p("report"),
    ])?;
    Ok(dir.join("report"))
}
