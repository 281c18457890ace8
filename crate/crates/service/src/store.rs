//! Append-only JSONL annotation log with an in-memory index.
//!
//! Each line is one [`LogEvent`]. The index is a pure fold of the events:
//! `accepted` inserts a record for a key that has none, `overwrite`
//! replaces whatever the key holds. A record reaches the index only after
//! its line is on disk.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use facteval::tasks::{Annotation, CellKey};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LOG_FILE: &str = "annotations.log.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: corrupt log line {line}: {message}")]
    CorruptLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("an annotation for this (evaluator, task, model) already exists")]
    Duplicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Accepted,
    Overwrite,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEvent {
    pub seq: u64,
    pub event: EventKind,
    pub record: Annotation,
}

pub type Index = BTreeMap<CellKey, Annotation>;

/// Replays events in order.
pub fn fold<'a>(events: impl IntoIterator<Item = &'a LogEvent>) -> Index {
    let mut index = Index::new();
    for e in events {
        let key = e.record.key();
        match e.event {
            EventKind::Accepted => {
                index.entry(key).or_insert_with(|| e.record.clone());
            }
            EventKind::Overwrite => {
                index.insert(key, e.record.clone());
            }
        }
    }
    index
}

/// Parses log text; blank lines are skipped, anything else must parse.
pub fn parse_log(text: &str) -> Result<Vec<LogEvent>, (usize, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e.to_string())))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Accepted,
    Overwritten,
}

pub struct AnnotationStore {
    path: PathBuf,
    file: File,
    events: Vec<LogEvent>,
    index: Index,
}

impl AnnotationStore {
    /// Opens (creating if needed) the log at `path` and replays it.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let io = |source| StoreError::Io {
            path: path.to_owned(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io(e)),
        };
        let events = parse_log(&text).map_err(|(line, message)| StoreError::CorruptLine {
            path: path.to_owned(),
            line,
            message,
        })?;
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        let index = fold(&events);
        Ok(Self {
            path: path.to_owned(),
            file,
            events,
            index,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn index(&self) -> &Index {
        &self.index
    }

    pub fn events(&self) -> &[LogEvent] {
        &self.events
    }

    pub fn annotations(&self) -> Vec<Annotation> {
        self.index.values().cloned().collect()
    }

    pub fn contains(&self, key: &CellKey) -> bool {
        self.index.contains_key(key)
    }

    /// Appends and syncs the record, then updates the index. An existing key
    /// is rejected unless `overwrite` is set.
    pub fn submit(&mut self, record: Annotation, overwrite: bool) -> Result<Outcome, StoreError> {
        let key = record.key();
        let exists = self.index.contains_key(&key);
        if exists && !overwrite {
            return Err(StoreError::Duplicate);
        }
        let event = LogEvent {
            seq: self.events.last().map_or(1, |e| e.seq + 1),
            event: if exists {
                EventKind::Overwrite
            } else {
                EventKind::Accepted
            },
            record,
        };
        let mut line = serde_json::to_string(&event).expect("serializable event");
        line.push('\n');
        let io = |source| StoreError::Io {
            path: self.path.clone(),
            source,
        };
        // One write call per line keeps appends whole under O_APPEND.
        self.file.write_all(line.as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(io)?;

        self.index.insert(key, event.record.clone());
        self.events.push(event);
        Ok(if exists {
            Outcome::Overwritten
        } else {
            Outcome::Accepted
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use facteval::metrics::{CoherenceRating, RawCounts};

    fn annotation(evaluator: &str, task: &str, g: u32) -> Annotation {
        Annotation {
            task_id: task.into(),
            evaluator_id: evaluator.into(),
            model_id: "lead-3".into(),
            label: "A".into(),
            counts: RawCounts::new(3, g, 1, 1),
            coherence: CoherenceRating::Coherent,
            fact_spans: vec![],
            waiver: false,
            submitted_at: Utc.with_ymd_and_hms(2021, 4, 1, 0, 0, 0).unwrap(),
        }
    }

    #[test]
    fn duplicate_rejected_and_log_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(LOG_FILE);
        let mut store = AnnotationStore::open(&path).unwrap();
        assert_eq!(
            store.submit(annotation("e1", "t1", 2), false).unwrap(),
            Outcome::Accepted
        );
        let before = fs::read(&path).unwrap();
        assert!(matches!(
            store.submit(annotation("e1", "t1", 3), false),
            Err(StoreError::Duplicate)
        ));
        assert_eq!(fs::read(&path).unwrap(), before);
        assert_eq!(store.index().len(), 1);
    }

    #[test]
    fn overwrite_supersedes_and_keeps_history() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(LOG_FILE);
        let mut store = AnnotationStore::open(&path).unwrap();
        store.submit(annotation("e1", "t1", 2), false).unwrap();
        assert_eq!(
            store.submit(annotation("e1", "t1", 3), true).unwrap(),
            Outcome::Overwritten
        );
        drop(store);
        let store = AnnotationStore::open(&path).unwrap();
        assert_eq!(store.events().len(), 2);
        assert_eq!(store.annotations()[0].counts.g_facts, 3);
    }

    #[test]
    fn reopen_reproduces_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(LOG_FILE);
        let mut store = AnnotationStore::open(&path).unwrap();
        for (e, t) in [("e1", "t1"), ("e2", "t1"), ("e1", "t2")] {
            store.submit(annotation(e, t, 2), false).unwrap();
        }
        let index = store.index().clone();
        drop(store);
        assert_eq!(AnnotationStore::open(&path).unwrap().index(), &index);
    }

    #[test]
    fn corrupt_line_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(LOG_FILE);
        let mut store = AnnotationStore::open(&path).unwrap();
        store.submit(annotation("e1", "t1", 2), false).unwrap();
        drop(store);
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{not json\n");
        fs::write(&path, text).unwrap();
        match AnnotationStore::open(&path) {
            Err(StoreError::CorruptLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {:?}", other.map(|s| s.events().len())),
        }
    }

    #[test]
    fn fold_keeps_first_accept_and_last_overwrite() {
        let event = |seq, event, g| LogEvent {
            seq,
            event,
            record: annotation("e1", "t1", g),
        };
        let events = [
            event(1, EventKind::Accepted, 1),
            event(2, EventKind::Accepted, 2),
            event(3, EventKind::Overwrite, 3),
            event(4, EventKind::Accepted, 4),
        ];
        assert_eq!(fold(&events[..2]).values().next().unwrap().counts.g_facts, 1);
        assert_eq!(fold(&events).values().next().unwrap().counts.g_facts, 3);
    }
}
