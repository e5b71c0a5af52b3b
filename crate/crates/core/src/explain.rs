//! Reasons for evaluation outcomes.
//!
//! A decision triggered by a policy is explained by that policy's satisfied rules.
//! A default deny is explained by the rules the request failed on the way from the
//! deepest applicable policies down to the policies that would have permitted it.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::model::{Effect, PolicyId, Reason, RegionId, Restriction, SpectrumRequest};
use crate::reasoner::ClassificationResult;
use crate::satisfy::{satisfies, EvalContext, ResolveError};
use crate::store::Snapshot;

pub const NO_PERMIT_PATH: &str = "no applicable permitting policy exists";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExplainError {
    #[error("policy '{0}' is not in the snapshot")]
    UnknownPolicy(PolicyId),
    #[error("policy '{0}' does not apply to the request")]
    NotApplicable(PolicyId),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
}

/// Whether the rule being described grants or withholds access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stance {
    Permitting,
    Prohibiting,
}

impl Stance {
    pub fn of(effect: Option<&Effect>) -> Self {
        match effect {
            Some(Effect::Deny) => Stance::Prohibiting,
            _ => Stance::Permitting,
        }
    }

    fn word(self) -> &'static str {
        match self {
            Stance::Permitting => "permitted",
            Stance::Prohibiting => "prohibited",
        }
    }
}

pub fn render_reason(restriction: &Restriction, satisfied: bool, stance: Stance) -> String {
    match (restriction, satisfied) {
        (Restriction::FrequencyWithin(r), true) => {
            format!("the requested frequency range is within {}", r)
        }
        (Restriction::FrequencyWithin(r), false) => {
            format!("the requested frequency range is outside {}", r)
        }
        (Restriction::RequesterIsA(c), true) => format!("the requester is a {}", c),
        (Restriction::RequesterIsA(c), false) => format!("the requester is not a {}", c),
        (Restriction::AffiliationIs(a), true) => format!("the requester affiliation is {}", a),
        (Restriction::AffiliationIs(a), false) => {
            format!("the requester affiliation is not {}", a)
        }
        (Restriction::LocationWithinAny(_), true) => {
            format!("the request is in a {} location", stance.word())
        }
        (Restriction::LocationWithinAny(_), false) => {
            format!("the request is not in a {} location", stance.word())
        }
        (Restriction::ActiveDuring(_), true) => {
            format!("the request is in a {} time window", stance.word())
        }
        (Restriction::ActiveDuring(_), false) => {
            format!("the request is not in a {} time window", stance.word())
        }
    }
}

fn context<'a>(snapshot: &'a Snapshot, within: &'a BTreeSet<RegionId>) -> EvalContext<'a> {
    EvalContext {
        taxonomy: snapshot.taxonomy(),
        pending_terms: snapshot.pending_terms(),
        regions: snapshot.regions(),
        within_regions: within,
    }
}

/// One satisfied reason per rule on the triggering policy's effective chain, root first.
pub fn explain_explicit(
    request: &SpectrumRequest,
    triggering: &PolicyId,
    snapshot: &Snapshot,
    within: &BTreeSet<RegionId>,
) -> Result<Vec<Reason>, ExplainError> {
    let policy = snapshot
        .policy(triggering)
        .ok_or_else(|| ExplainError::UnknownPolicy(triggering.clone()))?;
    let stance = Stance::of(policy.effect.as_ref());
    let ctx = context(snapshot, within);
    let mut out = Vec::new();
    for link in snapshot.chain(triggering).unwrap_or(&[]) {
        if !satisfies(request, &link.restriction, &ctx)? {
            return Err(ExplainError::NotApplicable(triggering.clone()));
        }
        out.push(Reason {
            policy_id: Some(link.policy_id.clone()),
            text: render_reason(&link.restriction, true, stance),
            restriction: Some(link.restriction.clone()),
            satisfied: true,
        });
    }
    Ok(out)
}

/// Unfulfilled rules on the paths from the applicable frontier to permitting descendants.
///
/// With nothing applicable, every permitting policy in the snapshot is a target.
pub fn explain_default_deny(
    request: &SpectrumRequest,
    applicable: &BTreeSet<PolicyId>,
    classification: &ClassificationResult,
    snapshot: &Snapshot,
    within: &BTreeSet<RegionId>,
) -> Result<Vec<Reason>, ExplainError> {
    let ctx = context(snapshot, within);

    // Deepest applicable policies: nothing else applicable sits strictly below them.
    let frontier: Vec<&PolicyId> = applicable
        .iter()
        .filter(|f| {
            !applicable.iter().any(|g| {
                g != *f && classification.subsumes(f, g) && !classification.subsumes(g, f)
            })
        })
        .collect();

    // (frontier node or None for the virtual root, permit target)
    let mut targets: Vec<(Option<&PolicyId>, &PolicyId)> = Vec::new();
    if frontier.is_empty() {
        for (id, p) in snapshot.policies() {
            if p.effect.as_ref().is_some_and(Effect::is_permit) {
                targets.push((None, id));
            }
        }
    } else {
        for f in &frontier {
            for d in classification.permit_descendants(f) {
                targets.push((Some(*f), d));
            }
        }
    }
    if targets.is_empty() {
        return Ok(alloc::vec![Reason {
            policy_id: None,
            restriction: None,
            satisfied: false,
            text: NO_PERMIT_PATH.to_string(),
        }]);
    }

    // key: (depth, policy id, position) keeps output ordered and deduplicated.
    let mut found: BTreeMap<(usize, PolicyId, usize), Restriction> = BTreeMap::new();
    let mut note_failures = |owner: &PolicyId,
                             links: &mut dyn Iterator<Item = (usize, &Restriction)>|
     -> Result<(), ExplainError> {
        for (pos, r) in links {
            if !satisfies(request, r, &ctx)? {
                found.insert((snapshot.depth(owner), owner.clone(), pos), r.clone());
            }
        }
        Ok(())
    };

    for (top, target) in targets {
        // The target's own chain.
        for link in snapshot.chain(target).unwrap_or(&[]) {
            note_failures(
                &link.policy_id,
                &mut core::iter::once((link.position, &link.restriction)),
            )?;
        }
        // Every policy strictly between the frontier node and the target, including inferred edges.
        for between in classification.subsumers_of(target) {
            if Some(between) == top {
                continue;
            }
            if let Some(f) = top {
                if !classification.subsumes(f, between) {
                    continue;
                }
            }
            let policy = snapshot
                .policy(between)
                .ok_or_else(|| ExplainError::UnknownPolicy(between.clone()))?;
            note_failures(between, &mut policy.restrictions.iter().enumerate())?;
        }
    }

    Ok(found
        .into_iter()
        .map(|((_, owner, _), r)| Reason {
            text: render_reason(&r, false, Stance::Permitting),
            policy_id: Some(owner),
            restriction: Some(r),
            satisfied: false,
        })
        .collect())
}
