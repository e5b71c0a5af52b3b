//! Policy capture sheets: one policy per CSV row.
//!
//! Parent ids follow the sub-policy naming convention: `X-n` extends `X` and
//! `X-n.m` extends `X-n`.

use std::collections::BTreeSet;

use dsa_policy_core::dsl::PolicyDocument;
use dsa_policy_core::geo::RegionStore;
use dsa_policy_core::model::{
    Affiliation, Effect, FrequencyRange, FrequencyUnit, ModelError, Policy, PolicyId, RegionId, Restriction,
};

pub const HEADER: [&str; 11] = [
    "Policy",
    "Requester",
    "Affiliation",
    "Frequency",
    "Location",
    "Effect",
    "Obligations",
    "OriginalText",
    "SourceDocument",
    "URL",
    "Page",
];

#[derive(Debug, thiserror::Error)]
pub enum CaptureError {
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("header must be exactly {expected:?}, found {found:?}")]
    Header { expected: Vec<String>, found: Vec<String> },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
}

impl CaptureError {
    fn row(line: u64, message: impl Into<String>) -> Self {
        CaptureError::Row {
            line,
            message: message.into(),
        }
    }
}

/// `US91-3.1` -> `US91-3`, `US91-3` -> `US91`, `US91` -> none.
pub fn derived_parent(id: &str) -> Option<&str> {
    for sep in ['.', '-'] {
        if let Some((head, tail)) = id.rsplit_once(sep) {
            if !head.is_empty() && !tail.is_empty() && tail.chars().all(|c| c.is_ascii_digit()) {
                return Some(head);
            }
        }
    }
    None
}

/// Parses "1755-1780 MHz", "1755–1780 MHz" or a single "1760 MHz".
pub fn parse_frequency_cell(cell: &str) -> Result<FrequencyRange, ModelError> {
    let cell = cell.trim();
    let (numbers, unit) = cell
        .rsplit_once(char::is_whitespace)
        .ok_or_else(|| ModelError::MalformedFrequency(cell.to_string()))?;
    let unit = FrequencyUnit::parse(unit.trim())?;
    let numbers = numbers.trim();
    match numbers.split_once(['-', '–']) {
        Some((lo, hi)) => FrequencyRange::parse(lo.trim(), hi.trim(), unit),
        None => FrequencyRange::parse(numbers, numbers, unit),
    }
}

fn split_list(cell: &str) -> Vec<&str> {
    cell.split(';').map(str::trim).filter(|s| !s.is_empty()).collect()
}

/// `known_parent` lets rows extend policies that already live elsewhere (e.g. in a store).
pub fn parse_capture_csv(
    text: &str,
    regions: &RegionStore,
    known_parent: &dyn Fn(&PolicyId) -> bool,
) -> Result<PolicyDocument, CaptureError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let found: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if found != HEADER {
        return Err(CaptureError::Header {
            expected: HEADER.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }

    let mut policies: Vec<Policy> = Vec::new();
    let mut seen = BTreeSet::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |i: usize| record.get(i).unwrap_or("");
        let id = cell(0);
        if id.is_empty() {
            return Err(CaptureError::row(line, "empty Policy cell"));
        }
        let mut p = Policy::new(id);
        if let Some(parent) = derived_parent(id) {
            let parent = PolicyId::from(parent);
            if !seen.contains(&parent) && !known_parent(&parent) {
                return Err(CaptureError::row(line, format!("orphan sub-policy '{id}': parent '{parent}' not found")));
            }
            p.parent = Some(parent);
        }
        if !cell(3).is_empty() {
            let range = parse_frequency_cell(cell(3)).map_err(|e| CaptureError::row(line, e.to_string()))?;
            p.restrictions.push(Restriction::FrequencyWithin(range));
        }
        if !cell(1).is_empty() {
            p.restrictions.push(Restriction::RequesterIsA(cell(1).into()));
        }
        if !cell(2).is_empty() {
            let a = Affiliation::parse(cell(2)).map_err(|e| CaptureError::row(line, e.to_string()))?;
            p.restrictions.push(Restriction::AffiliationIs(a));
        }
        if !cell(4).is_empty() {
            let mut ids: Vec<RegionId> = Vec::new();
            for token in split_list(cell(4)) {
                let id = regions
                    .resolve(token)
                    .ok_or_else(|| CaptureError::row(line, format!("unknown region '{token}'")))?;
                ids.push(id.clone());
            }
            let r = Restriction::location_within_any(ids).map_err(|e| CaptureError::row(line, e.to_string()))?;
            p.restrictions.push(r);
        }
        let obligations: Vec<String> = split_list(cell(6)).into_iter().map(str::to_string).collect();
        p.effect = match cell(5).to_ascii_lowercase().as_str() {
            "" if obligations.is_empty() => None,
            "" => return Err(CaptureError::row(line, "obligations listed without an effect")),
            "permit" | "permit with obligations" if !obligations.is_empty() => {
                Some(Effect::PermitWithObligations(obligations))
            }
            "permit" => Some(Effect::Permit),
            "permit with obligations" => {
                return Err(CaptureError::row(line, "Permit with Obligations needs an Obligations cell"))
            }
            "deny" if obligations.is_empty() => Some(Effect::Deny),
            "deny" => return Err(CaptureError::row(line, "a Deny effect cannot carry obligations")),
            other => return Err(CaptureError::row(line, format!("unknown effect '{other}'"))),
        };
        for (key, idx) in [("original_text", 7), ("source_document", 8), ("url", 9), ("page", 10)] {
            if !cell(idx).is_empty() {
                p.meta.set(key, cell(idx).to_string());
            }
        }
        p.validate().map_err(|e| CaptureError::row(line, e.to_string()))?;
        if !seen.insert(p.id.clone()) {
            return Err(CaptureError::row(line, format!("duplicate policy id '{}'", p.id)));
        }
        policies.push(p);
    }
    Ok(PolicyDocument::from_policies(policies))
}
