//! JSON shapes shared by the HTTP service and the CLI.

use dsa_policy_core::dsl::restriction_clause;
use dsa_policy_core::geo::{parse_wkt_point, RegionStore};
use dsa_policy_core::model::{
    format_instant, Action, Affiliation, Decision, Effect, EvaluationResult, FrequencyRange, FrequencyUnit, Policy,
    PolicyMeta, Reason, Restriction, SpectrumRequest, TimeWindow,
};
use dsa_policy_core::reasoner::EvalError;
use dsa_policy_core::satisfy::ResolveError;
use dsa_policy_core::store::{ProvenanceAction, ProvenanceRecord};
use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

/// A request body or policy body that failed validation, with the JSON path at fault.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{field}: {message}")]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl ToString) -> Self {
        Self {
            field: field.into(),
            message: message.to_string(),
        }
    }
}

/// Numbers are accepted as JSON numbers or decimal strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Decimal {
    Number(Number),
    Text(String),
}

impl Decimal {
    fn text(&self) -> String {
        match self {
            Decimal::Number(n) => n.to_string(),
            Decimal::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyJson {
    pub min: Decimal,
    pub max: Decimal,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeJson {
    pub start: String,
    pub end: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestJson {
    pub id: String,
    pub requester_class: String,
    #[serde(default = "default_action")]
    pub action: String,
    pub location_wkt: String,
    pub frequency: FrequencyJson,
    pub time: TimeJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affiliation: Option<String>,
}

fn default_action() -> String {
    "Transmission".into()
}

impl RequestJson {
    pub fn to_request(&self) -> Result<SpectrumRequest, FieldError> {
        let unit = FrequencyUnit::parse(&self.frequency.unit).map_err(|e| FieldError::new("frequency.unit", e))?;
        let frequency = FrequencyRange::parse(&self.frequency.min.text(), &self.frequency.max.text(), unit)
            .map_err(|e| FieldError::new("frequency", e))?;
        Ok(SpectrumRequest {
            id: self.id.clone(),
            requester_class: self.requester_class.as_str().into(),
            action: Action::parse(&self.action).map_err(|e| FieldError::new("action", e))?,
            location: parse_wkt_point(&self.location_wkt).map_err(|e| FieldError::new("location_wkt", e))?,
            frequency,
            time: TimeWindow::parse(&self.time.start, &self.time.end).map_err(|e| FieldError::new("time", e))?,
            affiliation: self
                .affiliation
                .as_deref()
                .map(Affiliation::parse)
                .transpose()
                .map_err(|e| FieldError::new("affiliation", e))?,
        })
    }

    pub fn from_request(r: &SpectrumRequest) -> Self {
        let (min, max, unit) = r.frequency.render_parts();
        RequestJson {
            id: r.id.clone(),
            requester_class: r.requester_class.to_string(),
            action: default_action(),
            location_wkt: format!("POINT({} {})", r.location.lon(), r.location.lat()),
            frequency: FrequencyJson {
                min: Decimal::Text(min),
                max: Decimal::Text(max),
                unit: unit.symbol().into(),
            },
            time: TimeJson {
                start: format_instant(&r.time.start()),
                end: format_instant(&r.time.end()),
            },
            affiliation: r.affiliation.map(|a| a.to_string()),
        }
    }
}

/// Parses one request from a JSON value, reporting the failing field.
pub fn request_from_value(value: Value) -> Result<SpectrumRequest, FieldError> {
    let body: RequestJson = serde_json::from_value(value).map_err(|e| FieldError::new("body", e))?;
    body.to_request()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonJson {
    pub policy_id: Option<String>,
    /// The rule as DSL clause text.
    pub restriction: Option<String>,
    pub satisfied: bool,
    pub text: String,
}

impl From<&Reason> for ReasonJson {
    fn from(r: &Reason) -> Self {
        ReasonJson {
            policy_id: r.policy_id.as_ref().map(ToString::to_string),
            restriction: r.restriction.as_ref().map(restriction_clause),
            satisfied: r.satisfied,
            text: r.text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultJson {
    pub request_id: String,
    pub snapshot_version: u64,
    /// `Permit`, `Deny` or `PermitWithObligations`.
    pub effect: String,
    pub default_deny: bool,
    pub triggering_policy: Option<String>,
    pub applicable_policies: Vec<String>,
    pub obligations: Vec<String>,
    pub reasons: Vec<ReasonJson>,
    pub conflict: bool,
}

impl ResultJson {
    pub fn new(r: &EvaluationResult, snapshot_version: u64) -> Self {
        ResultJson {
            request_id: r.request_id.clone(),
            snapshot_version,
            effect: r.decision.effect().name().into(),
            default_deny: r.decision == Decision::DefaultDeny,
            triggering_policy: r.triggering_policy.as_ref().map(ToString::to_string),
            applicable_policies: r.applicable_policies.iter().map(ToString::to_string).collect(),
            obligations: r.obligations.clone(),
            reasons: r.reasons.iter().map(ReasonJson::from).collect(),
            conflict: r.conflict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(code: &str, message: impl ToString) -> Self {
        Self {
            code: code.into(),
            message: message.to_string(),
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

impl From<&FieldError> for ApiError {
    fn from(e: &FieldError) -> Self {
        ApiError::new("invalid_request", &e.message).with_detail(serde_json::json!({ "field": e.field }))
    }
}

impl From<&EvalError> for ApiError {
    fn from(e: &EvalError) -> Self {
        let detail = match e {
            EvalError::Resolve(ResolveError::UnknownClass(c)) => serde_json::json!({ "class": c.as_str() }),
            EvalError::Resolve(ResolveError::UnknownRegion(r)) => serde_json::json!({ "region": r.as_str() }),
            EvalError::Explain(_) => Value::Null,
        };
        ApiError::new("unresolvable", e).with_detail(detail)
    }
}

/// One line of batch output: a result or the error for that request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchItem {
    Ok(ResultJson),
    Err { request_id: Option<String>, error: ApiError },
}

/// Restriction as structured JSON, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RestrictionJson {
    Frequency { min: Decimal, max: Decimal, unit: String },
    Requester { class: String },
    Affiliation { value: String },
    Location { regions: Vec<String> },
    Time { start: String, end: String },
}

impl RestrictionJson {
    pub fn from_restriction(r: &Restriction) -> Self {
        match r {
            Restriction::FrequencyWithin(f) => {
                let (min, max, unit) = f.render_parts();
                RestrictionJson::Frequency {
                    min: Decimal::Text(min),
                    max: Decimal::Text(max),
                    unit: unit.symbol().into(),
                }
            }
            Restriction::RequesterIsA(c) => RestrictionJson::Requester { class: c.to_string() },
            Restriction::AffiliationIs(a) => RestrictionJson::Affiliation { value: a.to_string() },
            Restriction::LocationWithinAny(set) => RestrictionJson::Location {
                regions: set.iter().map(ToString::to_string).collect(),
            },
            Restriction::ActiveDuring(w) => RestrictionJson::Time {
                start: format_instant(&w.start()),
                end: format_instant(&w.end()),
            },
        }
    }

    /// Region tokens may be ids or display names when `regions` is given.
    pub fn to_restriction(&self, field: &str, regions: Option<&RegionStore>) -> Result<Restriction, FieldError> {
        let err = |e: &dyn ToString| FieldError::new(field, e.to_string());
        Ok(match self {
            RestrictionJson::Frequency { min, max, unit } => {
                let unit = FrequencyUnit::parse(unit).map_err(|e| err(&e))?;
                Restriction::FrequencyWithin(FrequencyRange::parse(&min.text(), &max.text(), unit).map_err(|e| err(&e))?)
            }
            RestrictionJson::Requester { class } => Restriction::RequesterIsA(class.as_str().into()),
            RestrictionJson::Affiliation { value } => {
                Restriction::AffiliationIs(Affiliation::parse(value).map_err(|e| err(&e))?)
            }
            RestrictionJson::Location { regions: tokens } => {
                let ids: Vec<String> = tokens
                    .iter()
                    .map(|t| match regions.and_then(|r| r.resolve(t)) {
                        Some(id) => id.to_string(),
                        None => t.clone(),
                    })
                    .collect();
                Restriction::location_within_any(ids).map_err(|e| err(&e))?
            }
            RestrictionJson::Time { start, end } => {
                Restriction::ActiveDuring(TimeWindow::parse(start, end).map_err(|e| err(&e))?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyJson {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default)]
    pub restrictions: Vec<RestrictionJson>,
    /// `Permit`, `Deny`, `PermitWithObligations` or absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub obligations: Vec<String>,
    #[serde(default)]
    pub precedence: u32,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub meta: serde_json::Map<String, Value>,
}

impl PolicyJson {
    pub fn from_policy(p: &Policy) -> Self {
        PolicyJson {
            id: p.id.to_string(),
            parent: p.parent.as_ref().map(ToString::to_string),
            restrictions: p.restrictions.iter().map(RestrictionJson::from_restriction).collect(),
            effect: p.effect.as_ref().map(|e| e.name().to_string()),
            obligations: p.obligations().to_vec(),
            precedence: p.precedence,
            meta: p.meta.entries().map(|(k, v)| (k.to_string(), Value::String(v.clone()))).collect(),
        }
    }

    pub fn to_policy(&self, regions: Option<&RegionStore>) -> Result<Policy, FieldError> {
        let mut p = Policy::new(self.id.as_str());
        p.parent = self.parent.as_deref().map(Into::into);
        for (i, r) in self.restrictions.iter().enumerate() {
            p.restrictions.push(r.to_restriction(&format!("restrictions[{i}]"), regions)?);
        }
        p.effect = match (self.effect.as_deref(), self.obligations.is_empty()) {
            (None, true) => None,
            (None, false) => return Err(FieldError::new("obligations", "obligations require an effect")),
            (Some("Permit"), true) => Some(Effect::Permit),
            (Some("Deny"), true) => Some(Effect::Deny),
            (Some("Permit" | "PermitWithObligations"), false) => {
                Some(Effect::PermitWithObligations(self.obligations.clone()))
            }
            (Some("PermitWithObligations"), true) => {
                return Err(FieldError::new("obligations", "PermitWithObligations needs at least one obligation"))
            }
            (Some("Deny"), false) => return Err(FieldError::new("obligations", "a Deny effect cannot carry obligations")),
            (Some(other), _) => return Err(FieldError::new("effect", format!("unknown effect '{other}'"))),
        };
        p.precedence = self.precedence;
        for (k, v) in &self.meta {
            let v = v
                .as_str()
                .ok_or_else(|| FieldError::new(format!("meta.{k}"), "meta values must be strings"))?;
            if !p.meta.set(k, v.to_string()) {
                return Err(FieldError::new(
                    format!("meta.{k}"),
                    format!("unknown meta key; expected one of {:?}", PolicyMeta::KEYS),
                ));
            }
        }
        p.validate().map_err(|e| FieldError::new("policy", e))?;
        Ok(p)
    }
}

/// Human rendering of a rule for detail views.
pub fn describe_restriction(r: &Restriction, regions: &RegionStore) -> String {
    match r {
        Restriction::FrequencyWithin(f) => format!("frequency within {f}"),
        Restriction::RequesterIsA(c) => format!("requester is a {c}"),
        Restriction::AffiliationIs(a) => format!("requester affiliation is {a}"),
        Restriction::LocationWithinAny(set) => {
            let names: Vec<&str> = set
                .iter()
                .map(|id| regions.get(id).map_or(id.as_str(), |r| r.name()))
                .collect();
            format!("location within any of: {}", names.join(", "))
        }
        Restriction::ActiveDuring(w) => {
            format!("active from {} to {}", format_instant(&w.start()), format_instant(&w.end()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceJson {
    pub assertion_id: u64,
    pub policy_id: String,
    pub action: String,
    pub actor: String,
    pub timestamp: String,
    pub version: u64,
    pub source_note: String,
}

impl From<&ProvenanceRecord> for ProvenanceJson {
    fn from(r: &ProvenanceRecord) -> Self {
        ProvenanceJson {
            assertion_id: r.assertion_id,
            policy_id: r.policy_id.to_string(),
            action: match r.action {
                ProvenanceAction::Created => "Created",
                ProvenanceAction::Revised => "Revised",
                ProvenanceAction::Deleted => "Deleted",
            }
            .into(),
            actor: r.actor.clone(),
            timestamp: format_instant(&r.timestamp),
            version: r.version,
            source_note: r.source_note.clone(),
        }
    }
}
