//! Local (per-task) and global (cross-task) memory pools.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::types::{ExecutionOutcome, MathModel, RevisionTip, SolverProgram};

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("round {got} recorded out of order; next round must be {expected}")]
    OrderViolation { expected: u32, got: u32 },
    #[error("global journal {path}: {source}")]
    Journal {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One generation or revision round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRound {
    pub round: u32,
    pub model: MathModel,
    pub program: SolverProgram,
    pub outcome: ExecutionOutcome,
    pub model_tip: Option<RevisionTip>,
    pub code_tip: Option<RevisionTip>,
}

/// Revision history of one task. Round 0 is the generation phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMemory {
    pub task_id: String,
    pub rounds: Vec<MemoryRound>,
}

impl LocalMemory {
    pub fn new(task_id: &str) -> Self {
        Self {
            task_id: task_id.to_owned(),
            rounds: Vec::new(),
        }
    }

    pub fn record_round(&mut self, entry: MemoryRound) -> Result<(), MemoryError> {
        let expected = self.rounds.len() as u32;
        if entry.round != expected {
            return Err(MemoryError::OrderViolation {
                expected,
                got: entry.round,
            });
        }
        self.rounds.push(entry);
        Ok(())
    }

    /// Most recent modeling tip and most recent code tip.
    pub fn last_tips(&self) -> (Option<&RevisionTip>, Option<&RevisionTip>) {
        let model = self.rounds.iter().rev().find_map(|r| r.model_tip.as_ref());
        let code = self.rounds.iter().rev().find_map(|r| r.code_tip.as_ref());
        (model, code)
    }

    pub fn last(&self) -> Option<&MemoryRound> {
        self.rounds.last()
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalRecord {
    pub task_id: String,
    pub role: String,
    pub round: u32,
    /// SHA-256 of the compact payload JSON.
    pub digest: String,
    pub payload: Value,
}

impl GlobalRecord {
    pub fn new(task_id: &str, role: &str, round: u32, payload: Value) -> Self {
        let digest = hex::encode(Sha256::digest(payload.to_string().as_bytes()));
        Self {
            task_id: task_id.to_owned(),
            role: role.to_owned(),
            round,
            digest,
            payload,
        }
    }
}

#[derive(Default)]
struct Journal {
    records: Vec<GlobalRecord>,
    sink: Option<(PathBuf, BufWriter<File>)>,
}

/// Append-only cross-task log, optionally mirrored to a JSONL journal.
///
/// Appends are serialized through one lock, so concurrent tasks interleave
/// without loss and every read sees a prefix of the final log.
#[derive(Default)]
pub struct GlobalMemory {
    inner: Mutex<Journal>,
}

impl GlobalMemory {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a journal file; existing lines are kept and new records appended.
    pub fn with_journal(path: &Path) -> Result<Self, MemoryError> {
        let journal_err = |source| MemoryError::Journal {
            path: path.to_owned(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(journal_err)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(journal_err)?;
        Ok(Self {
            inner: Mutex::new(Journal {
                records: Vec::new(),
                sink: Some((path.to_owned(), BufWriter::new(file))),
            }),
        })
    }

    pub fn append(&self, record: GlobalRecord) {
        let mut journal = self.inner.lock().expect("global memory poisoned");
        if let Some((path, sink)) = journal.sink.as_mut() {
            let line = serde_json::to_string(&record).expect("records serialize");
            if let Err(e) = writeln!(sink, "{line}").and_then(|_| sink.flush()) {
                // the in-memory log stays authoritative for this run
                tracing::error!(path = %path.display(), "global journal write failed: {e}");
            }
        }
        journal.records.push(record);
    }

    pub fn records(&self) -> Vec<GlobalRecord> {
        self.inner.lock().expect("global memory poisoned").records.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("global memory poisoned").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
