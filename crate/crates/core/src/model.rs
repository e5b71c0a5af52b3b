//! Shared domain types: requests, policies, restrictions and evaluation results.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use chrono::{DateTime, Utc};

use crate::geo::GeoPoint;

/// Violation of a domain-type invariant.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("frequency must be strictly positive")]
    NonPositiveFrequency,
    #[error("frequency range is inverted: {min} Hz > {max} Hz")]
    InvertedFrequencyRange { min: u64, max: u64 },
    #[error("malformed frequency value '{0}'")]
    MalformedFrequency(String),
    #[error("frequency value '{0}' has sub-hertz precision")]
    SubHertzFrequency(String),
    #[error("unknown frequency unit '{0}'")]
    UnknownUnit(String),
    #[error("time window is inverted: {start} > {end}")]
    InvertedTimeWindow { start: String, end: String },
    #[error("malformed timestamp '{0}'")]
    MalformedTimestamp(String),
    #[error("location restriction has an empty region set")]
    EmptyRegionSet,
    #[error("permit-with-obligations effect carries no obligations")]
    EmptyObligations,
    #[error("policy '{policy}' declares more than one {kind} restriction")]
    DuplicateRestrictionKind { policy: String, kind: &'static str },
    #[error("policy '{0}' lists itself as parent")]
    SelfParent(String),
    #[error("unknown affiliation '{0}'")]
    UnknownAffiliation(String),
    #[error("unsupported action '{0}'; only Transmission is modeled")]
    UnsupportedAction(String),
}

macro_rules! string_id {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl core::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Identifier of a policy node.
    PolicyId
);
string_id!(
    /// Identifier of a device/requester class in the taxonomy.
    ClassId
);
string_id!(
    /// Identifier of a named region.
    RegionId
);

/// A frequency in integer hertz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hz(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrequencyUnit {
    Hz,
    KHz,
    MHz,
    GHz,
}

impl FrequencyUnit {
    fn exponent(self) -> u32 {
        match self {
            FrequencyUnit::Hz => 0,
            FrequencyUnit::KHz => 3,
            FrequencyUnit::MHz => 6,
            FrequencyUnit::GHz => 9,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            FrequencyUnit::Hz => "Hz",
            FrequencyUnit::KHz => "kHz",
            FrequencyUnit::MHz => "MHz",
            FrequencyUnit::GHz => "GHz",
        }
    }

    /// Case-insensitive unit lookup (`hz`, `khz`, `mhz`, `ghz`).
    pub fn parse(s: &str) -> Result<Self, ModelError> {
        match s.to_ascii_lowercase().as_str() {
            "hz" => Ok(FrequencyUnit::Hz),
            "khz" => Ok(FrequencyUnit::KHz),
            "mhz" => Ok(FrequencyUnit::MHz),
            "ghz" => Ok(FrequencyUnit::GHz),
            _ => Err(ModelError::UnknownUnit(s.to_string())),
        }
    }

    /// Unit used when displaying a value of this magnitude.
    pub fn for_magnitude(hz: Hz) -> Self {
        match hz.0 {
            0..=999 => FrequencyUnit::Hz,
            1_000..=999_999 => FrequencyUnit::KHz,
            1_000_000..=9_999_999_999 => FrequencyUnit::MHz,
            _ => FrequencyUnit::GHz,
        }
    }
}

impl Hz {
    /// Parses an unsigned decimal like `1756.25` expressed in `unit` into exact hertz.
    pub fn parse_decimal(text: &str, unit: FrequencyUnit) -> Result<Hz, ModelError> {
        let malformed = || ModelError::MalformedFrequency(text.to_string());
        let t = text.trim();
        let (int_part, frac_part) = match t.split_once('.') {
            Some((i, f)) => (i, f),
            None => (t, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(malformed());
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(malformed());
        }
        let exp = unit.exponent() as usize;
        let frac_trimmed = frac_part.trim_end_matches('0');
        if frac_trimmed.len() > exp {
            return Err(ModelError::SubHertzFrequency(text.to_string()));
        }
        let mut value: u64 = 0;
        let digits = int_part
            .bytes()
            .chain(frac_trimmed.bytes())
            .chain(core::iter::repeat_n(b'0', exp - frac_trimmed.len()));
        for d in digits {
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(u64::from(d - b'0')))
                .ok_or_else(malformed)?;
        }
        Ok(Hz(value))
    }

    /// Exact decimal rendering in `unit` with trailing zeros trimmed.
    pub fn format_in(self, unit: FrequencyUnit) -> String {
        let scale = 10u64.pow(unit.exponent());
        let whole = self.0 / scale;
        let frac = self.0 % scale;
        if frac == 0 {
            return whole.to_string();
        }
        let width = unit.exponent() as usize;
        let digits = format!("{:0width$}", frac, width = width);
        format!("{}.{}", whole, digits.trim_end_matches('0'))
    }
}

/// Inclusive frequency range; a single frequency has `min == max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrequencyRange {
    min: Hz,
    max: Hz,
}

impl FrequencyRange {
    pub fn new(min: Hz, max: Hz) -> Result<Self, ModelError> {
        if min.0 == 0 || max.0 == 0 {
            return Err(ModelError::NonPositiveFrequency);
        }
        if min > max {
            return Err(ModelError::InvertedFrequencyRange {
                min: min.0,
                max: max.0,
            });
        }
        Ok(Self { min, max })
    }

    pub fn single(f: Hz) -> Result<Self, ModelError> {
        Self::new(f, f)
    }

    /// Convenience for fixtures and tests: bounds given in whole MHz.
    pub fn mhz(min: u64, max: u64) -> Result<Self, ModelError> {
        Self::new(Hz(min * 1_000_000), Hz(max * 1_000_000))
    }

    pub fn parse(min: &str, max: &str, unit: FrequencyUnit) -> Result<Self, ModelError> {
        Self::new(Hz::parse_decimal(min, unit)?, Hz::parse_decimal(max, unit)?)
    }

    pub fn min(&self) -> Hz {
        self.min
    }

    pub fn max(&self) -> Hz {
        self.max
    }

    pub fn contains_range(&self, other: &FrequencyRange) -> bool {
        self.min <= other.min && other.max <= self.max
    }

    pub fn intersects(&self, other: &FrequencyRange) -> bool {
        self.min <= other.max && other.min <= self.max
    }

    pub fn display_unit(&self) -> FrequencyUnit {
        FrequencyUnit::for_magnitude(self.min)
    }

    /// `(lo, hi, unit)` rendered in the display unit.
    pub fn render_parts(&self) -> (String, String, FrequencyUnit) {
        let unit = self.display_unit();
        (self.min.format_in(unit), self.max.format_in(unit), unit)
    }
}

impl fmt::Display for FrequencyRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (lo, hi, unit) = self.render_parts();
        if self.min == self.max {
            write!(f, "{} {}", lo, unit.symbol())
        } else {
            write!(f, "{}\u{2013}{} {}", lo, hi, unit.symbol())
        }
    }
}

/// Parses an RFC 3339 timestamp (any offset) and normalizes it to UTC.
pub fn parse_instant(text: &str) -> Result<DateTime<Utc>, ModelError> {
    DateTime::parse_from_rfc3339(text.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|_| ModelError::MalformedTimestamp(text.to_string()))
}

/// Canonical RFC 3339 rendering with a `Z` suffix.
pub fn format_instant(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true)
}

/// Inclusive UTC time window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeWindow {
    start: DateTime<Utc>,
    end: DateTime<Utc>,
}

impl TimeWindow {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self, ModelError> {
        if start > end {
            return Err(ModelError::InvertedTimeWindow {
                start: format_instant(&start),
                end: format_instant(&end),
            });
        }
        Ok(Self { start, end })
    }

    pub fn parse(start: &str, end: &str) -> Result<Self, ModelError> {
        Self::new(parse_instant(start)?, parse_instant(end)?)
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.end
    }

    pub fn overlaps(&self, other: &TimeWindow) -> bool {
        self.end >= other.start && self.start <= other.end
    }

    pub fn contains_window(&self, other: &TimeWindow) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Affiliation {
    Federal,
    NonFederal,
}

impl Affiliation {
    pub fn as_str(self) -> &'static str {
        match self {
            Affiliation::Federal => "Federal",
            Affiliation::NonFederal => "NonFederal",
        }
    }

    /// Accepts `Federal`, `NonFederal`, `Non-Federal` and `Non Federal`, case-insensitively.
    pub fn parse(s: &str) -> Result<Self, ModelError> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | ' ' | '_'))
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "federal" => Ok(Affiliation::Federal),
            "nonfederal" => Ok(Affiliation::NonFederal),
            _ => Err(ModelError::UnknownAffiliation(s.to_string())),
        }
    }
}

impl fmt::Display for Affiliation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One atomic policy rule.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Restriction {
    FrequencyWithin(FrequencyRange),
    RequesterIsA(ClassId),
    AffiliationIs(Affiliation),
    LocationWithinAny(BTreeSet<RegionId>),
    ActiveDuring(TimeWindow),
}

impl Restriction {
    pub fn location_within_any<I, R>(ids: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = R>,
        R: Into<RegionId>,
    {
        let set: BTreeSet<RegionId> = ids.into_iter().map(Into::into).collect();
        if set.is_empty() {
            return Err(ModelError::EmptyRegionSet);
        }
        Ok(Restriction::LocationWithinAny(set))
    }

    pub fn kind(&self) -> RestrictionKind {
        match self {
            Restriction::FrequencyWithin(_) => RestrictionKind::Frequency,
            Restriction::RequesterIsA(_) => RestrictionKind::Requester,
            Restriction::AffiliationIs(_) => RestrictionKind::Affiliation,
            Restriction::LocationWithinAny(_) => RestrictionKind::Location,
            Restriction::ActiveDuring(_) => RestrictionKind::Time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RestrictionKind {
    Frequency,
    Requester,
    Affiliation,
    Location,
    Time,
}

impl RestrictionKind {
    pub fn name(self) -> &'static str {
        match self {
            RestrictionKind::Frequency => "frequency",
            RestrictionKind::Requester => "requester",
            RestrictionKind::Affiliation => "affiliation",
            RestrictionKind::Location => "location",
            RestrictionKind::Time => "time",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Effect {
    Permit,
    Deny,
    PermitWithObligations(Vec<String>),
}

impl Effect {
    pub fn permit_with_obligations(ids: Vec<String>) -> Result<Self, ModelError> {
        if ids.is_empty() {
            return Err(ModelError::EmptyObligations);
        }
        Ok(Effect::PermitWithObligations(ids))
    }

    pub fn is_permit(&self) -> bool {
        !matches!(self, Effect::Deny)
    }

    pub fn obligations(&self) -> &[String] {
        match self {
            Effect::PermitWithObligations(ids) => ids,
            _ => &[],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Effect::Permit => "Permit",
            Effect::Deny => "Deny",
            Effect::PermitWithObligations(_) => "PermitWithObligations",
        }
    }
}

/// Provenance metadata captured alongside a policy.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct PolicyMeta {
    pub original_text: Option<String>,
    pub source_document: Option<String>,
    pub url: Option<String>,
    pub page: Option<String>,
    pub created_by: Option<String>,
    pub created_at: Option<String>,
}

impl PolicyMeta {
    pub const KEYS: [&'static str; 6] = [
        "original_text",
        "source_document",
        "url",
        "page",
        "created_by",
        "created_at",
    ];

    pub fn get(&self, key: &str) -> Option<&String> {
        match key {
            "original_text" => self.original_text.as_ref(),
            "source_document" => self.source_document.as_ref(),
            "url" => self.url.as_ref(),
            "page" => self.page.as_ref(),
            "created_by" => self.created_by.as_ref(),
            "created_at" => self.created_at.as_ref(),
            _ => None,
        }
    }

    /// Returns `false` for an unknown key.
    pub fn set(&mut self, key: &str, value: String) -> bool {
        let slot = match key {
            "original_text" => &mut self.original_text,
            "source_document" => &mut self.source_document,
            "url" => &mut self.url,
            "page" => &mut self.page,
            "created_by" => &mut self.created_by,
            "created_at" => &mut self.created_at,
            _ => return false,
        };
        *slot = Some(value);
        true
    }

    pub fn entries(&self) -> impl Iterator<Item = (&'static str, &String)> {
        Self::KEYS
            .iter()
            .filter_map(move |k| self.get(k).map(|v| (*k, v)))
    }
}

/// One node of the policy hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Policy {
    pub id: PolicyId,
    pub parent: Option<PolicyId>,
    /// Rules added at this node; ancestors contribute the rest.
    pub restrictions: Vec<Restriction>,
    pub effect: Option<Effect>,
    /// Absent precedence is stored as 0, the lowest level.
    pub precedence: u32,
    pub meta: PolicyMeta,
}

impl Policy {
    pub fn new(id: impl Into<PolicyId>) -> Self {
        Self {
            id: id.into(),
            parent: None,
            restrictions: Vec::new(),
            effect: None,
            precedence: 0,
            meta: PolicyMeta::default(),
        }
    }

    pub fn with_parent(mut self, parent: impl Into<PolicyId>) -> Self {
        self.parent = Some(parent.into());
        self
    }

    pub fn with_restriction(mut self, r: Restriction) -> Self {
        self.restrictions.push(r);
        self
    }

    pub fn with_effect(mut self, effect: Effect) -> Self {
        self.effect = Some(effect);
        self
    }

    pub fn with_precedence(mut self, precedence: u32) -> Self {
        self.precedence = precedence;
        self
    }

    pub fn obligations(&self) -> &[String] {
        self.effect.as_ref().map(Effect::obligations).unwrap_or(&[])
    }

    /// Checks node-local invariants: one restriction per kind, non-empty sets, no self parent.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.parent.as_ref() == Some(&self.id) {
            return Err(ModelError::SelfParent(self.id.0.clone()));
        }
        let mut seen = BTreeSet::new();
        for r in &self.restrictions {
            if !seen.insert(r.kind()) {
                return Err(ModelError::DuplicateRestrictionKind {
                    policy: self.id.0.clone(),
                    kind: r.kind().name(),
                });
            }
            if let Restriction::LocationWithinAny(set) = r {
                if set.is_empty() {
                    return Err(ModelError::EmptyRegionSet);
                }
            }
        }
        if let Some(Effect::PermitWithObligations(ids)) = &self.effect {
            if ids.is_empty() {
                return Err(ModelError::EmptyObligations);
            }
        }
        Ok(())
    }

    pub fn referenced_classes(&self) -> impl Iterator<Item = &ClassId> {
        self.restrictions.iter().filter_map(|r| match r {
            Restriction::RequesterIsA(c) => Some(c),
            _ => None,
        })
    }

    pub fn referenced_regions(&self) -> impl Iterator<Item = &RegionId> {
        self.restrictions
            .iter()
            .filter_map(|r| match r {
                Restriction::LocationWithinAny(s) => Some(s.iter()),
                _ => None,
            })
            .flatten()
    }
}

/// A restriction tagged with the policy that contributed it to an effective chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainLink {
    pub policy_id: PolicyId,
    /// Index of the restriction within the contributing policy's own list.
    pub position: usize,
    pub restriction: Restriction,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChainError {
    #[error("unknown policy '{0}'")]
    UnknownPolicy(PolicyId),
    #[error("policy '{policy}' references unknown parent '{parent}'")]
    UnknownParent { policy: PolicyId, parent: PolicyId },
    #[error("cycle in policy hierarchy at '{0}'")]
    Cycle(PolicyId),
}

/// Ancestor ids of `id`, root first, ending with `id` itself.
pub fn lineage(
    policies: &BTreeMap<PolicyId, Policy>,
    id: &PolicyId,
) -> Result<Vec<PolicyId>, ChainError> {
    let mut path = Vec::new();
    let mut visited = BTreeSet::new();
    let mut cursor = policies
        .get(id)
        .ok_or_else(|| ChainError::UnknownPolicy(id.clone()))?;
    loop {
        if !visited.insert(cursor.id.clone()) {
            return Err(ChainError::Cycle(cursor.id.clone()));
        }
        path.push(cursor.id.clone());
        match &cursor.parent {
            None => break,
            Some(parent) => {
                cursor = policies.get(parent).ok_or_else(|| ChainError::UnknownParent {
                    policy: cursor.id.clone(),
                    parent: parent.clone(),
                })?;
            }
        }
    }
    path.reverse();
    Ok(path)
}

/// Concatenation of every ancestor's restrictions (root first) followed by the policy's own.
pub fn effective_restrictions(
    policies: &BTreeMap<PolicyId, Policy>,
    id: &PolicyId,
) -> Result<Vec<ChainLink>, ChainError> {
    let chain = lineage(policies, id)?;
    let mut out = Vec::new();
    for pid in chain {
        let policy = &policies[&pid];
        out.extend(
            policy
                .restrictions
                .iter()
                .enumerate()
                .map(|(position, r)| ChainLink {
                    policy_id: pid.clone(),
                    position,
                    restriction: r.clone(),
                }),
        );
    }
    Ok(out)
}

/// The only action the request model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Action {
    #[default]
    Transmission,
}

impl Action {
    pub fn parse(s: &str) -> Result<Self, ModelError> {
        if s.eq_ignore_ascii_case("transmission") {
            Ok(Action::Transmission)
        } else {
            Err(ModelError::UnsupportedAction(s.to_string()))
        }
    }
}

/// A single spectrum access request.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRequest {
    pub id: String,
    pub requester_class: ClassId,
    pub action: Action,
    pub location: GeoPoint,
    pub frequency: FrequencyRange,
    pub time: TimeWindow,
    pub affiliation: Option<Affiliation>,
}

/// Final outcome of evaluating a request.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Decision {
    /// Effect assigned by an applicable policy.
    Effect(Effect),
    /// No applicable policy carries an effect.
    DefaultDeny,
}

impl Decision {
    pub fn is_permit(&self) -> bool {
        matches!(self, Decision::Effect(e) if e.is_permit())
    }

    pub fn is_deny(&self) -> bool {
        !self.is_permit()
    }

    /// The effect as seen by a requester: default deny collapses to `Deny`.
    pub fn effect(&self) -> Effect {
        match self {
            Decision::Effect(e) => e.clone(),
            Decision::DefaultDeny => Effect::Deny,
        }
    }
}

/// Human-readable explanation entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reason {
    /// `None` only for the "no permitting policy" reason.
    pub policy_id: Option<PolicyId>,
    pub restriction: Option<Restriction>,
    pub satisfied: bool,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvaluationResult {
    pub request_id: String,
    pub decision: Decision,
    pub triggering_policy: Option<PolicyId>,
    pub applicable_policies: Vec<PolicyId>,
    pub obligations: Vec<String>,
    pub reasons: Vec<Reason>,
    pub conflict: bool,
}
