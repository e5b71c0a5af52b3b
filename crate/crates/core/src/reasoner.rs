//! Classification, realization and precedence decision over the restriction fragment.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::explain::{explain_default_deny, explain_explicit, ExplainError};
use crate::geo::infer_within;
use crate::model::{
    Decision, Effect, EvaluationResult, PolicyId, RegionId, Restriction, SpectrumRequest,
};
use crate::satisfy::{satisfies, EvalContext, ResolveError};
use crate::store::Snapshot;
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
}

/// Does every request satisfying `a` also satisfy `b`? Cross-kind pairs never imply.
///
/// Classes outside the taxonomy (pending curation) only imply themselves.
pub fn implies(a: &Restriction, b: &Restriction, taxonomy: &Taxonomy) -> bool {
    match (a, b) {
        (Restriction::FrequencyWithin(x), Restriction::FrequencyWithin(y)) => y.contains_range(x),
        (Restriction::RequesterIsA(c), Restriction::RequesterIsA(d)) => {
            taxonomy.is_subclass_of(c, d)
        }
        (Restriction::AffiliationIs(x), Restriction::AffiliationIs(y)) => x == y,
        (Restriction::LocationWithinAny(s), Restriction::LocationWithinAny(t)) => s.is_subset(t),
        (Restriction::ActiveDuring(x), Restriction::ActiveDuring(y)) => y.contains_window(x),
        _ => false,
    }
}

/// Inferred policy hierarchy.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassificationResult {
    /// `P -> { Q : P ⊑ Q }`, reflexive.
    subsumers: BTreeMap<PolicyId, BTreeSet<PolicyId>>,
    /// `Q -> { P ≠ Q : P ⊑ Q, P permits }`.
    permit_descendants: BTreeMap<PolicyId, BTreeSet<PolicyId>>,
}

impl ClassificationResult {
    /// `sub ⊑ sup`.
    pub fn subsumes(&self, sup: &PolicyId, sub: &PolicyId) -> bool {
        self.subsumers.get(sub).is_some_and(|s| s.contains(sup))
    }

    pub fn subsumers_of(&self, id: &PolicyId) -> impl Iterator<Item = &PolicyId> {
        self.subsumers.get(id).into_iter().flatten()
    }

    pub fn permit_descendants(&self, id: &PolicyId) -> impl Iterator<Item = &PolicyId> {
        self.permit_descendants.get(id).into_iter().flatten()
    }

    /// All `(sub, sup)` pairs with `sub ⊑ sup`.
    pub fn pairs(&self) -> impl Iterator<Item = (&PolicyId, &PolicyId)> {
        self.subsumers
            .iter()
            .flat_map(|(sub, sups)| sups.iter().map(move |sup| (sub, sup)))
    }
}

/// `P ⊑ Q` iff each of Q's effective restrictions is implied by one of P's; declared ancestry always counts.
pub fn classify(snapshot: &Snapshot) -> ClassificationResult {
    let taxonomy = snapshot.taxonomy();
    let mut subsumers: BTreeMap<PolicyId, BTreeSet<PolicyId>> = BTreeMap::new();
    for p in snapshot.policies().keys() {
        let p_chain = snapshot.chain(p).unwrap_or(&[]);
        let mut sups = BTreeSet::new();
        for q in snapshot.policies().keys() {
            let q_chain = snapshot.chain(q).unwrap_or(&[]);
            let covered = q_chain.iter().all(|ql| {
                p_chain
                    .iter()
                    .any(|pl| implies(&pl.restriction, &ql.restriction, taxonomy))
            });
            if covered {
                sups.insert(q.clone());
            }
        }
        // Declared parents are already implied via the shared chain prefix.
        let mut cursor = snapshot.policy(p).and_then(|x| x.parent.clone());
        while let Some(anc) = cursor {
            cursor = snapshot.policy(&anc).and_then(|x| x.parent.clone());
            sups.insert(anc);
        }
        subsumers.insert(p.clone(), sups);
    }

    let mut permit_descendants: BTreeMap<PolicyId, BTreeSet<PolicyId>> = BTreeMap::new();
    for (p, sups) in &subsumers {
        let permits = snapshot
            .policy(p)
            .and_then(|x| x.effect.as_ref())
            .is_some_and(Effect::is_permit);
        if !permits {
            continue;
        }
        for q in sups.iter().filter(|q| *q != p) {
            permit_descendants.entry(q.clone()).or_default().insert(p.clone());
        }
    }
    ClassificationResult {
        subsumers,
        permit_descendants,
    }
}

/// Policies whose full effective restriction chain the request satisfies.
pub fn realize(
    request: &SpectrumRequest,
    snapshot: &Snapshot,
    within_regions: &BTreeSet<RegionId>,
) -> Result<BTreeSet<PolicyId>, ResolveError> {
    let ctx = EvalContext {
        taxonomy: snapshot.taxonomy(),
        pending_terms: snapshot.pending_terms(),
        regions: snapshot.regions(),
        within_regions,
    };
    // Parents are visited before children, so a child only checks its own rules.
    let mut order: Vec<&PolicyId> = snapshot.policies().keys().collect();
    order.sort_by_key(|id| snapshot.depth(id));
    let mut applicable = BTreeSet::new();
    for id in order {
        let policy = &snapshot.policies()[id];
        if let Some(parent) = &policy.parent {
            if !applicable.contains(parent) {
                continue;
            }
        }
        let mut ok = true;
        for r in &policy.restrictions {
            if !satisfies(request, r, &ctx)? {
                ok = false;
                break;
            }
        }
        if ok {
            applicable.insert(id.clone());
        }
    }
    Ok(applicable)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionOutcome {
    pub decision: Decision,
    pub triggering_policy: Option<PolicyId>,
    pub obligations: Vec<String>,
    /// Permit and deny effects tied at the winning precedence.
    pub conflict: bool,
}

/// Highest precedence wins. Ties: deny beats permit, then the smallest policy id triggers.
pub fn decide<'a>(
    applicable: impl IntoIterator<Item = &'a PolicyId>,
    snapshot: &Snapshot,
) -> DecisionOutcome {
    let effectful: Vec<(&PolicyId, &Effect, u32)> = applicable
        .into_iter()
        .filter_map(|id| {
            let p = snapshot.policy(id)?;
            p.effect.as_ref().map(|e| (id, e, p.precedence))
        })
        .collect();
    let Some(top) = effectful.iter().map(|(_, _, prec)| *prec).max() else {
        return DecisionOutcome {
            decision: Decision::DefaultDeny,
            triggering_policy: None,
            obligations: Vec::new(),
            conflict: false,
        };
    };
    let mut tied: Vec<(&PolicyId, &Effect)> = effectful
        .iter()
        .filter(|(_, _, prec)| *prec == top)
        .map(|(id, e, _)| (*id, *e))
        .collect();
    tied.sort_by(|a, b| a.0.cmp(b.0));
    let has_deny = tied.iter().any(|(_, e)| !e.is_permit());
    let has_permit = tied.iter().any(|(_, e)| e.is_permit());
    let conflict = has_deny && has_permit;

    if has_deny {
        let (id, _) = tied.iter().find(|(_, e)| !e.is_permit()).expect("deny present");
        return DecisionOutcome {
            decision: Decision::Effect(Effect::Deny),
            triggering_policy: Some((*id).clone()),
            obligations: Vec::new(),
            conflict,
        };
    }
    // All permits: obligations from every tied permit-with-obligations are carried.
    let mut obligations: Vec<String> = Vec::new();
    for (_, e) in &tied {
        for o in e.obligations() {
            if !obligations.contains(o) {
                obligations.push(o.clone());
            }
        }
    }
    let (id, effect) = tied
        .iter()
        .find(|(_, e)| matches!(e, Effect::PermitWithObligations(_)))
        .unwrap_or(&tied[0]);
    let decision = match effect {
        Effect::PermitWithObligations(_) => {
            Decision::Effect(Effect::PermitWithObligations(obligations.clone()))
        }
        _ => Decision::Effect(Effect::Permit),
    };
    DecisionOutcome {
        decision,
        triggering_policy: Some((*id).clone()),
        obligations,
        conflict,
    }
}

/// Runs geo inference, realization, precedence and explanation for one request.
pub fn evaluate(request: &SpectrumRequest, snapshot: &Snapshot) -> Result<EvaluationResult, EvalError> {
    let within = infer_within(request.location, snapshot.regions());
    let ctx = EvalContext {
        taxonomy: snapshot.taxonomy(),
        pending_terms: snapshot.pending_terms(),
        regions: snapshot.regions(),
        within_regions: &within,
    };
    ctx.resolve_class(&request.requester_class)?;

    let applicable = realize(request, snapshot, &within)?;
    let outcome = decide(&applicable, snapshot);
    let reasons = match &outcome.triggering_policy {
        Some(trigger) => explain_explicit(request, trigger, snapshot, &within)?,
        None => explain_default_deny(
            request,
            &applicable,
            snapshot.classification(),
            snapshot,
            &within,
        )?,
    };
    Ok(EvaluationResult {
        request_id: request.id.clone(),
        decision: outcome.decision,
        triggering_policy: outcome.triggering_policy,
        applicable_policies: applicable.into_iter().collect(),
        obligations: outcome.obligations,
        reasons,
        conflict: outcome.conflict,
    })
}

/// Sequential batch evaluation; output order matches input and errors stay per item.
pub fn evaluate_batch(
    requests: &[SpectrumRequest],
    snapshot: &Snapshot,
) -> Vec<Result<EvaluationResult, EvalError>> {
    requests.iter().map(|r| evaluate(r, snapshot)).collect()
}
