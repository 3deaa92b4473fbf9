//! Durable review queue: an append-only JSONL log in a local directory.
//!
//! Every write appends a full snapshot of one entry; on load the last snapshot
//! per id wins. The log is rewritten without superseded snapshots when it is
//! opened and whenever it grows past twice the number of live entries.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use traffic_mtl::parse_formula;
use traffic_mtl::pipeline::TranslationResult;

pub const LOG_FILE: &str = "reviews.log";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    Accepted,
    Edited,
    Rejected,
}

impl ReviewStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ReviewStatus::Pending => "pending",
            ReviewStatus::Accepted => "accepted",
            ReviewStatus::Edited => "edited",
            ReviewStatus::Rejected => "rejected",
        }
    }
}

impl FromStr for ReviewStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pending" => Ok(ReviewStatus::Pending),
            "accepted" => Ok(ReviewStatus::Accepted),
            "edited" => Ok(ReviewStatus::Edited),
            "rejected" => Ok(ReviewStatus::Rejected),
            other => Err(format!("unknown review status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewEntry {
    pub id: u64,
    pub rule_id: String,
    pub submitted_text: String,
    pub result: TranslationResult,
    pub status: ReviewStatus,
    #[serde(default)]
    pub final_mtl: Option<String>,
    #[serde(default)]
    pub reviewer_note: Option<String>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl ReviewEntry {
    /// Printed form of the winning candidate, if any sample parsed.
    pub fn winner_text(&self) -> Option<String> {
        self.result.winner_formula().map(ToString::to_string)
    }
}

/// A requested review decision.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewUpdate {
    pub status: ReviewStatus,
    #[serde(default)]
    pub final_mtl: Option<String>,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("review store is corrupt at {path}:{line}: {reason}")]
    StoreCorrupt { path: PathBuf, line: usize, reason: String },
    #[error("review store I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("no review with id {0}")]
    NotFound(u64),
    #[error("cannot move review {id} from {from} to {to}")]
    IllegalTransition {
        id: u64,
        from: &'static str,
        to: &'static str,
    },
    #[error("final_mtl does not parse: {message}")]
    InvalidFormula { message: String, offset: usize },
    #[error("{0}")]
    InvalidUpdate(String),
}

struct Inner {
    entries: BTreeMap<u64, ReviewEntry>,
    log: BufWriter<File>,
    log_lines: usize,
}

/// Review entries keyed by id, persisted under one directory.
///
/// All mutations go through one lock, so concurrent updates are serialized
/// and each is validated against the state left by the previous one.
pub struct ReviewStore {
    dir: PathBuf,
    inner: Mutex<Inner>,
}

impl ReviewStore {
    /// Opens (creating if needed) the store in `dir` and compacts its log.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        let path = dir.join(LOG_FILE);
        let entries = match std::fs::read_to_string(&path) {
            Ok(text) => replay_log(&path, &text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e.into()),
        };
        let log = write_compacted(&dir, &entries)?;
        let log_lines = entries.len();
        Ok(ReviewStore {
            dir,
            inner: Mutex::new(Inner {
                entries,
                log,
                log_lines,
            }),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Records a new pending review for `result`.
    pub fn create(&self, result: TranslationResult) -> Result<ReviewEntry, StoreError> {
        let mut inner = self.inner.lock().unwrap();
        let id = inner.entries.keys().next_back().map_or(1, |last| last + 1);
        let now = Utc::now();
        let entry = ReviewEntry {
            id,
            rule_id: result.rule_id.clone(),
            submitted_text: result.rule_text.clone(),
            result,
            status: ReviewStatus::Pending,
            final_mtl: None,
            reviewer_note: None,
            created_at: now,
            updated_at: now,
        };
        self.persist(&mut inner, entry)
    }

    pub fn get(&self, id: u64) -> Option<ReviewEntry> {
        self.inner.lock().unwrap().entries.get(&id).cloned()
    }

    /// All entries in creation order, optionally filtered by status.
    pub fn list(&self, status: Option<ReviewStatus>) -> Vec<ReviewEntry> {
        let inner = self.inner.lock().unwrap();
        inner
            .entries
            .values()
            .filter(|e| status.is_none_or(|s| e.status == s))
            .cloned()
            .collect()
    }

    /// Applies a review decision.
    ///
    /// Only pending entries can change state. `final_mtl` is stored in
    /// printed form: accepting without one takes the winner, editing requires
    /// one that differs from the winner.
    pub fn update(&self, id: u64, update: ReviewUpdate) -> Result<ReviewEntry, StoreError> {
        let mut inner = self.inner.lock().unwrap();
        let current = inner.entries.get(&id).ok_or(StoreError::NotFound(id))?;
        if current.status != ReviewStatus::Pending || update.status == ReviewStatus::Pending {
            return Err(StoreError::IllegalTransition {
                id,
                from: current.status.as_str(),
                to: update.status.as_str(),
            });
        }
        let submitted = match &update.final_mtl {
            Some(text) => Some(
                parse_formula(text)
                    .map_err(|e| StoreError::InvalidFormula {
                        message: e.to_string(),
                        offset: e.offset,
                    })?
                    .to_string(),
            ),
            None => None,
        };
        let winner = current.winner_text();
        let final_mtl = match update.status {
            ReviewStatus::Accepted => match (submitted, winner) {
                (None, Some(w)) => Some(w),
                (None, None) => {
                    return Err(StoreError::InvalidUpdate(
                        "no candidate parsed; supply final_mtl with status edited".into(),
                    ))
                }
                (Some(s), w) if w.as_deref() == Some(s.as_str()) => Some(s),
                (Some(_), _) => {
                    return Err(StoreError::InvalidUpdate(
                        "final_mtl differs from the winning candidate; use status edited".into(),
                    ))
                }
            },
            ReviewStatus::Edited => match submitted {
                None => return Err(StoreError::InvalidUpdate("status edited requires final_mtl".into())),
                Some(s) if winner.as_deref() == Some(s.as_str()) => {
                    return Err(StoreError::InvalidUpdate(
                        "final_mtl equals the winning candidate; use status accepted".into(),
                    ))
                }
                Some(s) => Some(s),
            },
            ReviewStatus::Rejected => submitted,
            ReviewStatus::Pending => unreachable!("rejected above"),
        };
        let mut entry = current.clone();
        entry.status = update.status;
        entry.final_mtl = final_mtl;
        entry.reviewer_note = update.note;
        entry.updated_at = advance(entry.updated_at);
        self.persist(&mut inner, entry)
    }

    /// Rewrites the log with one line per live entry.
    pub fn compact(&self) -> Result<(), StoreError> {
        let mut inner = self.inner.lock().unwrap();
        inner.log.flush()?;
        inner.log = write_compacted(&self.dir, &inner.entries)?;
        inner.log_lines = inner.entries.len();
        Ok(())
    }

    fn persist(&self, inner: &mut Inner, entry: ReviewEntry) -> Result<ReviewEntry, StoreError> {
        let line = serde_json::to_string(&entry).expect("entries always serialize");
        writeln!(inner.log, "{line}")?;
        inner.log.flush()?;
        inner.log.get_ref().sync_data()?;
        inner.log_lines += 1;
        inner.entries.insert(entry.id, entry.clone());
        if inner.log_lines > 2 * inner.entries.len() + 16 {
            inner.log = write_compacted(&self.dir, &inner.entries)?;
            inner.log_lines = inner.entries.len();
        }
        Ok(entry)
    }
}

/// The current time, or one microsecond past `previous` if the clock has
/// not moved beyond it.
fn advance(previous: DateTime<Utc>) -> DateTime<Utc> {
    Utc::now().max(previous + TimeDelta::microseconds(1))
}

fn replay_log(path: &Path, text: &str) -> Result<BTreeMap<u64, ReviewEntry>, StoreError> {
    let mut entries = BTreeMap::new();
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    for (i, raw) in lines.iter().enumerate() {
        let corrupt = |reason: String| StoreError::StoreCorrupt {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let line = raw.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        if !raw.ends_with('\n') && i + 1 == lines.len() {
            return Err(corrupt("truncated final record".into()));
        }
        let entry: ReviewEntry = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
        if let Some(f) = &entry.final_mtl {
            parse_formula(f).map_err(|e| corrupt(format!("final_mtl does not parse: {e}")))?;
        }
        entries.insert(entry.id, entry);
    }
    Ok(entries)
}

/// Writes a fresh log next to the old one and swaps it in atomically.
fn write_compacted(dir: &Path, entries: &BTreeMap<u64, ReviewEntry>) -> Result<BufWriter<File>, StoreError> {
    let tmp = dir.join(format!("{LOG_FILE}.tmp"));
    {
        let mut out = BufWriter::new(File::create(&tmp)?);
        for entry in entries.values() {
            writeln!(out, "{}", serde_json::to_string(entry).expect("entries always serialize"))?;
        }
        out.flush()?;
        out.get_ref().sync_all()?;
    }
    let path = dir.join(LOG_FILE);
    std::fs::rename(&tmp, &path)?;
    Ok(BufWriter::new(OpenOptions::new().append(true).open(&path)?))
}
