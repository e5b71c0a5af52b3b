//! Thread-safe store handle: one writer at a time, lock-free snapshot reads.

use std::path::Path;
use std::sync::{Arc, Mutex, PoisonError, RwLock};

use chrono::{DateTime, Utc};
use dsa_policy_core::geo::RegionStore;
use dsa_policy_core::model::PolicyId;
use dsa_policy_core::store::{PolicyStore, ProvenanceRecord, Snapshot, StoreError};
use dsa_policy_core::taxonomy::Taxonomy;

use crate::persist::{apply, record_for, replay, Applied, Mutation, PolicyLog, ReplayError};

#[derive(Debug, thiserror::Error)]
pub enum MutationError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("could not persist mutation: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug)]
struct Writer {
    store: PolicyStore,
    log: Option<PolicyLog>,
}

#[derive(Debug)]
pub struct SharedStore {
    writer: Mutex<Writer>,
    current: RwLock<Arc<Snapshot>>,
}

impl SharedStore {
    pub fn in_memory(taxonomy: Arc<Taxonomy>, regions: Arc<RegionStore>) -> Self {
        Self::from_parts(PolicyStore::new(taxonomy, regions), None)
    }

    /// Replays the log at `path` (created if missing) and keeps appending to it.
    pub fn open(path: impl AsRef<Path>, taxonomy: Arc<Taxonomy>, regions: Arc<RegionStore>) -> Result<Self, ReplayError> {
        let (log, records) = PolicyLog::open(path)?;
        let store = replay(&records, taxonomy, regions)?;
        Ok(Self::from_parts(store, Some(log)))
    }

    fn from_parts(store: PolicyStore, log: Option<PolicyLog>) -> Self {
        let current = RwLock::new(store.snapshot());
        Self {
            writer: Mutex::new(Writer { store, log }),
            current,
        }
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().unwrap_or_else(PoisonError::into_inner).clone()
    }

    pub fn apply(&self, m: Mutation, actor: &str) -> Result<Applied, MutationError> {
        self.apply_at(m, actor, Utc::now())
    }

    /// Validates, logs, then publishes. A failure at any step leaves the store untouched.
    pub fn apply_at(&self, m: Mutation, actor: &str, at: DateTime<Utc>) -> Result<Applied, MutationError> {
        let mut w = self.writer.lock().unwrap_or_else(PoisonError::into_inner);
        let mut next = w.store.clone();
        let Some(applied) = apply(&mut next, &m, actor, at)? else {
            return Ok(Applied {
                version: next.version(),
                ids: Vec::new(),
            });
        };
        if let Some(log) = w.log.as_mut() {
            log.append(&record_for(&m, applied.version, actor, at))?;
        }
        let snap = next.snapshot();
        w.store = next;
        *self.current.write().unwrap_or_else(PoisonError::into_inner) = snap;
        Ok(applied)
    }

    pub fn provenance_of(&self, id: &PolicyId) -> Vec<ProvenanceRecord> {
        let w = self.writer.lock().unwrap_or_else(PoisonError::into_inner);
        w.store.provenance_of(id).cloned().collect()
    }

    /// Canonical text of the live snapshot, for replay comparisons.
    pub fn canonical_text(&self) -> String {
        self.snapshot().canonical_text()
    }
}
