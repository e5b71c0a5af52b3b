//! Loading taxonomy, region, policy and request files from disk.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dsa_policy_core::dsl::{parse_policy_doc, PolicyDocument};
use dsa_policy_core::fixtures;
use dsa_policy_core::geo::RegionStore;
use dsa_policy_core::model::{PolicyId, SpectrumRequest};
use dsa_policy_core::store::{Snapshot, StoreError};
use dsa_policy_core::taxonomy::Taxonomy;
use serde_json::Value;

use crate::capture::parse_capture_csv;
use crate::regions::parse_regions;
use crate::taxonomy_file::parse_taxonomy;
use crate::wire::{request_from_value, FieldError};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
    #[error("{0}")]
    Store(#[from] StoreError),
}

impl LoadError {
    fn invalid(path: &Path, message: impl fmt::Display) -> Self {
        LoadError::Invalid {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// I/O problems and content problems map to different exit codes.
    pub fn is_io(&self) -> bool {
        matches!(self, LoadError::Io { .. })
    }
}

pub fn read_text(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Falls back to the bundled device taxonomy when no file is given.
pub fn load_taxonomy(path: Option<&Path>) -> Result<Taxonomy, LoadError> {
    match path {
        None => Ok(fixtures::taxonomy()),
        Some(p) => parse_taxonomy(&read_text(p)?).map_err(|e| LoadError::invalid(p, e)),
    }
}

/// Falls back to the bundled training-range regions when no file is given.
pub fn load_regions(path: Option<&Path>) -> Result<RegionStore, LoadError> {
    match path {
        None => Ok(fixtures::regions()),
        Some(p) => parse_regions(&read_text(p)?).map_err(|e| LoadError::invalid(p, e)),
    }
}

pub fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Parses a DSL document, or a capture sheet when the file ends in `.csv`.
pub fn load_policy_file(
    path: &Path,
    regions: &RegionStore,
    known_parent: &dyn Fn(&PolicyId) -> bool,
) -> Result<PolicyDocument, LoadError> {
    let text = read_text(path)?;
    if is_csv(path) {
        parse_capture_csv(&text, regions, known_parent).map_err(|e| LoadError::invalid(path, e))
    } else {
        parse_policy_doc(&text).map_err(|e| LoadError::invalid(path, e))
    }
}

/// Loads every policy file into one validated snapshot (version 1).
pub fn load_snapshot(
    policy_files: &[PathBuf],
    taxonomy: Taxonomy,
    regions: RegionStore,
) -> Result<Snapshot, LoadError> {
    let mut policies = BTreeMap::new();
    for path in policy_files {
        let doc = load_policy_file(path, &regions, &|id| policies.contains_key(id))?;
        for p in doc.policies {
            if policies.contains_key(&p.id) {
                return Err(LoadError::invalid(path, format!("duplicate policy id '{}'", p.id)));
            }
            policies.insert(p.id.clone(), p);
        }
    }
    Ok(Snapshot::build(1, policies, Arc::new(taxonomy), Arc::new(regions))?)
}

/// One JSON-lines entry that could not be turned into a request.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestLineError {
    pub line: usize,
    pub request_id: Option<String>,
    pub error: FieldError,
}

/// Requests file: one JSON object per line; blank lines are skipped.
pub fn load_requests(path: &Path) -> Result<Vec<Result<SpectrumRequest, RequestLineError>>, LoadError> {
    let text = read_text(path)?;
    Ok(parse_requests(&text))
}

pub fn parse_requests(text: &str) -> Vec<Result<SpectrumRequest, RequestLineError>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let fail = |request_id, error| RequestLineError {
                line: i + 1,
                request_id,
                error,
            };
            let value: Value = serde_json::from_str(l).map_err(|e| fail(None, FieldError::new("body", e)))?;
            let id = value.get("id").and_then(Value::as_str).map(str::to_string);
            request_from_value(value).map_err(|e| fail(id, e))
        })
        .collect()
}
