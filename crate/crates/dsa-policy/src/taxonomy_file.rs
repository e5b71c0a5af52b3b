//! Taxonomy files: a JSON list of `{class_id, parent_ids, affiliation?}`.

use dsa_policy_core::model::{Affiliation, ModelError};
use dsa_policy_core::taxonomy::{ClassEntry, Taxonomy, TaxonomyError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub class_id: String,
    #[serde(default)]
    pub parent_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affiliation: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum TaxonomyFileError {
    #[error("taxonomy file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("class '{class}': {source}")]
    Affiliation { class: String, source: ModelError },
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

pub fn parse_taxonomy(text: &str) -> Result<Taxonomy, TaxonomyFileError> {
    let records: Vec<ClassRecord> = serde_json::from_str(text)?;
    let mut entries = Vec::with_capacity(records.len());
    for r in records {
        let affiliation = r
            .affiliation
            .as_deref()
            .map(Affiliation::parse)
            .transpose()
            .map_err(|source| TaxonomyFileError::Affiliation {
                class: r.class_id.clone(),
                source,
            })?;
        entries.push(ClassEntry {
            class_id: r.class_id.into(),
            parent_ids: r.parent_ids.into_iter().map(Into::into).collect(),
            affiliation,
        });
    }
    Ok(Taxonomy::new(entries)?)
}

pub fn taxonomy_records(taxonomy: &Taxonomy) -> Vec<ClassRecord> {
    taxonomy
        .entries()
        .map(|e| ClassRecord {
            class_id: e.class_id.to_string(),
            parent_ids: e.parent_ids.iter().map(ToString::to_string).collect(),
            affiliation: e.affiliation.map(|a| a.to_string()),
        })
        .collect()
}
