//! Restriction satisfaction: does one request meet one rule?

use alloc::collections::BTreeSet;

use crate::geo::RegionStore;
use crate::model::{ClassId, RegionId, Restriction, SpectrumRequest};
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResolveError {
    #[error("unknown class '{0}'")]
    UnknownClass(ClassId),
    #[error("unknown region '{0}'")]
    UnknownRegion(RegionId),
}

/// Everything a satisfaction check needs beyond the request itself.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub taxonomy: &'a Taxonomy,
    /// Policy terms accepted before curation; only exact class matches satisfy them.
    pub pending_terms: &'a BTreeSet<ClassId>,
    pub regions: &'a RegionStore,
    /// Output of the geo phase for this request.
    pub within_regions: &'a BTreeSet<RegionId>,
}

impl EvalContext<'_> {
    pub fn resolve_class(&self, class: &ClassId) -> Result<(), ResolveError> {
        if self.taxonomy.contains(class) || self.pending_terms.contains(class) {
            Ok(())
        } else {
            Err(ResolveError::UnknownClass(class.clone()))
        }
    }
}

pub fn satisfies(
    request: &SpectrumRequest,
    restriction: &Restriction,
    ctx: &EvalContext<'_>,
) -> Result<bool, ResolveError> {
    Ok(match restriction {
        Restriction::FrequencyWithin(bound) => bound.contains_range(&request.frequency),
        Restriction::RequesterIsA(class) => {
            ctx.resolve_class(class)?;
            if ctx.taxonomy.contains(class) {
                ctx.taxonomy.is_subclass_of(&request.requester_class, class)
            } else {
                request.requester_class == *class
            }
        }
        Restriction::AffiliationIs(wanted) => request
            .affiliation
            .or_else(|| ctx.taxonomy.affiliation_of(&request.requester_class))
            == Some(*wanted),
        Restriction::LocationWithinAny(set) => {
            if let Some(missing) = set.iter().find(|r| !ctx.regions.contains(r)) {
                return Err(ResolveError::UnknownRegion(missing.clone()));
            }
            set.iter().any(|r| ctx.within_regions.contains(r))
        }
        Restriction::ActiveDuring(window) => request.time.overlaps(window),
    })
}
