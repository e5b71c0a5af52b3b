//! Append-only store log: one JSON record per line, replayed at startup.
//!
//! A record carries either `dsl_text` or a `tombstone`. Replaying `dsl_text`
//! adds its policies, except that a single policy whose id already exists is
//! a revision.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use dsa_policy_core::dsl::{parse_policy_doc, serialize_policy_doc, DslError, PolicyDocument};
use dsa_policy_core::geo::RegionStore;
use dsa_policy_core::model::{format_instant, parse_instant, Policy, PolicyId};
use dsa_policy_core::store::{PolicyStore, StoreError};
use dsa_policy_core::taxonomy::Taxonomy;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tombstone {
    pub id: String,
    pub cascade: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub version: u64,
    pub actor: String,
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dsl_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tombstone: Option<Tombstone>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mutation {
    Add(PolicyDocument),
    Revise(Policy),
    Delete { id: PolicyId, cascade: bool },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Applied {
    pub version: u64,
    /// Ids created, revised or removed.
    pub ids: Vec<PolicyId>,
}

/// Applies `m` to `store`. Returns `None` for a no-op (an empty document).
pub fn apply(store: &mut PolicyStore, m: &Mutation, actor: &str, at: DateTime<Utc>) -> Result<Option<Applied>, StoreError> {
    match m {
        Mutation::Add(doc) if doc.is_empty() => Ok(None),
        Mutation::Add(doc) => Ok(Some(Applied {
            version: store.add_policies(doc, actor, at)?,
            ids: doc.policies.iter().map(|p| p.id.clone()).collect(),
        })),
        Mutation::Revise(p) => Ok(Some(Applied {
            version: store.revise_policy(&p.id, p.clone(), actor, at)?,
            ids: vec![p.id.clone()],
        })),
        Mutation::Delete { id, cascade } => {
            let (version, ids) = store.delete_policy(id, *cascade, actor, at)?;
            Ok(Some(Applied { version, ids }))
        }
    }
}

pub fn record_for(m: &Mutation, version: u64, actor: &str, at: DateTime<Utc>) -> LogRecord {
    let (dsl_text, tombstone) = match m {
        Mutation::Add(doc) => (Some(serialize_policy_doc(&doc.policies)), None),
        Mutation::Revise(p) => (Some(serialize_policy_doc([p])), None),
        Mutation::Delete { id, cascade } => (
            None,
            Some(Tombstone {
                id: id.to_string(),
                cascade: *cascade,
            }),
        ),
    };
    LogRecord {
        version,
        actor: actor.into(),
        timestamp: format_instant(&at),
        dsl_text,
        tombstone,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("store log I/O: {0}")]
    Io(#[from] io::Error),
    #[error("store log line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("store log line {line}: policy text: {source}")]
    Dsl { line: usize, source: DslError },
    #[error("store log line {line}: {source}")]
    Store { line: usize, source: StoreError },
    #[error("store log line {line}: expected version {expected}, replay produced {actual}")]
    Version { line: usize, expected: u64, actual: u64 },
}

fn mutation_of(record: &LogRecord, store: &PolicyStore, line: usize) -> Result<Mutation, ReplayError> {
    match (&record.dsl_text, &record.tombstone) {
        (Some(text), None) => {
            let doc = parse_policy_doc(text).map_err(|source| ReplayError::Dsl { line, source })?;
            match doc.policies.as_slice() {
                [single] if store.snapshot().policy(&single.id).is_some() => Ok(Mutation::Revise(single.clone())),
                _ => Ok(Mutation::Add(doc)),
            }
        }
        (None, Some(t)) => Ok(Mutation::Delete {
            id: t.id.as_str().into(),
            cascade: t.cascade,
        }),
        _ => Err(ReplayError::Corrupt {
            line,
            message: "record needs exactly one of dsl_text or tombstone".into(),
        }),
    }
}

pub fn replay<'a>(
    records: impl IntoIterator<Item = &'a LogRecord>,
    taxonomy: Arc<Taxonomy>,
    regions: Arc<RegionStore>,
) -> Result<PolicyStore, ReplayError> {
    let mut store = PolicyStore::new(taxonomy, regions);
    for (i, record) in records.into_iter().enumerate() {
        let line = i + 1;
        let at = parse_instant(&record.timestamp).map_err(|e| ReplayError::Corrupt {
            line,
            message: e.to_string(),
        })?;
        let m = mutation_of(record, &store, line)?;
        let applied = apply(&mut store, &m, &record.actor, at).map_err(|source| ReplayError::Store { line, source })?;
        let actual = applied.map_or(store.version(), |a| a.version);
        if actual != record.version {
            return Err(ReplayError::Version {
                line,
                expected: record.version,
                actual,
            });
        }
    }
    Ok(store)
}

/// The on-disk log, opened for appending.
#[derive(Debug)]
pub struct PolicyLog {
    path: PathBuf,
    file: File,
}

impl PolicyLog {
    /// Opens (creating if needed) the log at `path` and returns its existing records.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<LogRecord>), ReplayError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().create(true).read(true).append(true).open(&path)?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(&file).lines().enumerate() {
            let line_text = line?;
            if line_text.trim().is_empty() {
                continue;
            }
            let record = serde_json::from_str(&line_text).map_err(|e| ReplayError::Corrupt {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(record);
        }
        Ok((Self { path, file }, records))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &LogRecord) -> io::Result<()> {
        let mut line = serde_json::to_string(record).map_err(io::Error::other)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()
    }
}
