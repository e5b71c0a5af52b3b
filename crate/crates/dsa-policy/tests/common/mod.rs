#![allow(dead_code)]

use std::collections::BTreeSet;

use dsa_policy::persist::Mutation;
use dsa_policy::shared::SharedStore;
use dsa_policy_core::dsl::PolicyDocument;
use dsa_policy_core::model::{Affiliation, Effect, FrequencyRange, Hz, Policy, PolicyId, Restriction, TimeWindow};
use rand::seq::SliceRandom;
use rand::Rng;

const CLASSES: [&str; 5] = ["Radio", "MilitaryRadio", "JointTacticalRadioSystem", "CommercialRadio", "AWS"];
const REGIONS: [&str; 6] = [
    "White_Sands_Missile_Range",
    "Ft_Irwin",
    "Yuma_Proving_Ground",
    "Ft_Polk",
    "Ft_Bragg",
    "Ft_Hood",
];

pub fn random_policy(rng: &mut impl Rng, id: &str, parent: Option<&PolicyId>) -> Policy {
    let mut p = Policy::new(id);
    p.parent = parent.cloned();
    if rng.gen_bool(0.6) {
        let lo = rng.gen_range(1_700_000u64..1_800_000) * 1_000;
        let hi = lo + rng.gen_range(1u64..50_000) * 1_000;
        p.restrictions.push(Restriction::FrequencyWithin(FrequencyRange::new(Hz(lo), Hz(hi)).unwrap()));
    }
    if rng.gen_bool(0.4) {
        p.restrictions.push(Restriction::RequesterIsA((*CLASSES.choose(rng).unwrap()).into()));
    }
    if rng.gen_bool(0.2) {
        let a = if rng.gen() { Affiliation::Federal } else { Affiliation::NonFederal };
        p.restrictions.push(Restriction::AffiliationIs(a));
    }
    if rng.gen_bool(0.4) {
        let n = rng.gen_range(1..=3);
        let picked: Vec<&str> = REGIONS.choose_multiple(rng, n).copied().collect();
        p.restrictions.push(Restriction::location_within_any(picked).unwrap());
    }
    if rng.gen_bool(0.2) {
        let h = rng.gen_range(0..20);
        let start = format!("2019-10-01T{h:02}:00:00Z");
        let end = format!("2019-10-01T{:02}:30:00Z", h + rng.gen_range(0..4));
        p.restrictions.push(Restriction::ActiveDuring(TimeWindow::parse(&start, &end).unwrap()));
    }
    p.effect = match rng.gen_range(0..6) {
        0 => Some(Effect::Permit),
        1 => Some(Effect::Deny),
        2 => Some(Effect::PermitWithObligations(vec!["notify range control".into()])),
        _ => None,
    };
    if rng.gen_bool(0.2) {
        p.precedence = rng.gen_range(0..3);
    }
    p
}

/// Outcome of one randomized mutation sequence.
pub struct OpsOutcome {
    /// Versions returned by successful mutations, in order.
    pub versions: Vec<u64>,
    pub failures: usize,
}

/// Runs `count` random add/revise/delete calls; some are expected to fail (e.g. deleting a parent without cascade).
pub fn random_ops(store: &SharedStore, rng: &mut impl Rng, count: usize) -> OpsOutcome {
    let mut versions = Vec::new();
    let mut failures = 0;
    let mut next_id = 0usize;
    for _ in 0..count {
        let snap = store.snapshot();
        let ids: Vec<PolicyId> = snap.policies().keys().cloned().collect();
        let m = match rng.gen_range(0..10) {
            0..=4 => {
                let n = rng.gen_range(1..=3);
                let mut batch = Vec::new();
                let mut known = ids.clone();
                for _ in 0..n {
                    next_id += 1;
                    let id = format!("P{next_id}");
                    let parent = if !known.is_empty() && rng.gen_bool(0.7) { known.choose(rng).cloned() } else { None };
                    batch.push(random_policy(rng, &id, parent.as_ref()));
                    known.push(id.as_str().into());
                }
                Mutation::Add(PolicyDocument::from_policies(batch))
            }
            5..=7 if !ids.is_empty() => {
                let id = ids.choose(rng).unwrap();
                let old = snap.policy(id).unwrap();
                let below: BTreeSet<PolicyId> = snap.subtree(id).into_iter().collect();
                let parent = if rng.gen_bool(0.8) {
                    old.parent.clone()
                } else {
                    ids.iter().filter(|c| !below.contains(*c)).collect::<Vec<_>>().choose(rng).map(|c| (*c).clone())
                };
                Mutation::Revise(random_policy(rng, id.as_str(), parent.as_ref()))
            }
            _ if !ids.is_empty() => Mutation::Delete {
                id: ids.choose(rng).unwrap().clone(),
                cascade: rng.gen(),
            },
            _ => continue,
        };
        match store.apply(m, &format!("actor{}", rng.gen_range(0..3))) {
            Ok(a) => versions.push(a.version),
            Err(_) => failures += 1,
        }
    }
    OpsOutcome { versions, failures }
}

/// Every parent exists and every parent chain terminates at a root.
pub fn referentially_sound(store: &SharedStore) -> bool {
    let snap = store.snapshot();
    snap.policies().values().all(|p| {
        p.parent.as_ref().is_none_or(|parent| snap.policy(parent).is_some()) && snap.chain(&p.id).is_some()
    })
}
