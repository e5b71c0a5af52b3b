//! Versioned policy repository with copy-on-write snapshots and a per-policy audit log.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use chrono::{DateTime, Utc};

use crate::dsl::{serialize_policy_doc, PolicyDocument};
use crate::geo::RegionStore;
use crate::model::{
    effective_restrictions, ChainError, ChainLink, ClassId, Effect, FrequencyRange, ModelError,
    Policy, PolicyId, RegionId, Restriction,
};
use crate::reasoner::{classify, ClassificationResult};
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("duplicate policy id '{0}'")]
    DuplicateId(PolicyId),
    #[error("unknown policy '{0}'")]
    UnknownPolicy(PolicyId),
    #[error("policy '{policy}' references unknown parent '{parent}'")]
    UnknownParent { policy: PolicyId, parent: PolicyId },
    #[error("cycle in policy hierarchy at '{0}'")]
    Cycle(PolicyId),
    #[error("policy '{policy}' references unknown region '{region}'")]
    UnknownRegion { policy: PolicyId, region: RegionId },
    #[error("policy '{policy}' has children {children:?}; delete them first or cascade")]
    HasChildren {
        policy: PolicyId,
        children: Vec<PolicyId>,
    },
    #[error("revision body id '{body}' does not match '{target}'")]
    IdMismatch { target: PolicyId, body: PolicyId },
    #[error("policy '{policy}': {source}")]
    Invalid { policy: PolicyId, source: ModelError },
    #[error("unknown class '{0}' in filter")]
    UnknownFilterClass(ClassId),
    #[error("unknown region '{0}' in filter")]
    UnknownFilterRegion(RegionId),
}

impl From<ChainError> for StoreError {
    fn from(e: ChainError) -> Self {
        match e {
            ChainError::UnknownPolicy(p) => StoreError::UnknownPolicy(p),
            ChainError::UnknownParent { policy, parent } => StoreError::UnknownParent { policy, parent },
            ChainError::Cycle(p) => StoreError::Cycle(p),
        }
    }
}

/// An immutable, referentially consistent view of the repository.
#[derive(Debug, Clone)]
pub struct Snapshot {
    version: u64,
    policies: BTreeMap<PolicyId, Policy>,
    taxonomy: Arc<Taxonomy>,
    regions: Arc<RegionStore>,
    pending_terms: BTreeSet<ClassId>,
    chains: BTreeMap<PolicyId, Vec<ChainLink>>,
    depth: BTreeMap<PolicyId, usize>,
    children: BTreeMap<PolicyId, Vec<PolicyId>>,
    classification: ClassificationResult,
}

impl Snapshot {
    /// Validates `policies` against the taxonomy and regions and precomputes chains and classification.
    pub fn build(
        version: u64,
        policies: BTreeMap<PolicyId, Policy>,
        taxonomy: Arc<Taxonomy>,
        regions: Arc<RegionStore>,
    ) -> Result<Self, StoreError> {
        let mut pending_terms = BTreeSet::new();
        let mut children: BTreeMap<PolicyId, Vec<PolicyId>> = BTreeMap::new();
        for p in policies.values() {
            p.validate().map_err(|source| StoreError::Invalid {
                policy: p.id.clone(),
                source,
            })?;
            if let Some(parent) = &p.parent {
                if !policies.contains_key(parent) {
                    return Err(StoreError::UnknownParent {
                        policy: p.id.clone(),
                        parent: parent.clone(),
                    });
                }
                children.entry(parent.clone()).or_default().push(p.id.clone());
            }
            if let Some(region) = p.referenced_regions().find(|r| !regions.contains(r)) {
                return Err(StoreError::UnknownRegion {
                    policy: p.id.clone(),
                    region: region.clone(),
                });
            }
            pending_terms.extend(p.referenced_classes().filter(|c| !taxonomy.contains(c)).cloned());
        }
        let mut chains = BTreeMap::new();
        let mut depth = BTreeMap::new();
        for id in policies.keys() {
            let chain = effective_restrictions(&policies, id)?;
            let d = crate::model::lineage(&policies, id)?.len() - 1;
            chains.insert(id.clone(), chain);
            depth.insert(id.clone(), d);
        }
        let mut snap = Self {
            version,
            policies,
            taxonomy,
            regions,
            pending_terms,
            chains,
            depth,
            children,
            classification: ClassificationResult::default(),
        };
        snap.classification = classify(&snap);
        Ok(snap)
    }

    pub fn empty(taxonomy: Arc<Taxonomy>, regions: Arc<RegionStore>) -> Self {
        Self::build(0, BTreeMap::new(), taxonomy, regions).expect("empty snapshot is valid")
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn policies(&self) -> &BTreeMap<PolicyId, Policy> {
        &self.policies
    }

    pub fn policy(&self, id: &PolicyId) -> Option<&Policy> {
        self.policies.get(id)
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn taxonomy_arc(&self) -> Arc<Taxonomy> {
        Arc::clone(&self.taxonomy)
    }

    pub fn regions(&self) -> &RegionStore {
        &self.regions
    }

    pub fn regions_arc(&self) -> Arc<RegionStore> {
        Arc::clone(&self.regions)
    }

    /// Class ids used by policies but absent from the taxonomy.
    pub fn pending_terms(&self) -> &BTreeSet<ClassId> {
        &self.pending_terms
    }

    pub fn chain(&self, id: &PolicyId) -> Option<&[ChainLink]> {
        self.chains.get(id).map(Vec::as_slice)
    }

    /// Number of declared ancestors.
    pub fn depth(&self, id: &PolicyId) -> usize {
        self.depth.get(id).copied().unwrap_or(0)
    }

    pub fn children(&self, id: &PolicyId) -> &[PolicyId] {
        self.children.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// `id` and all declared descendants, parents before children.
    pub fn subtree(&self, id: &PolicyId) -> Vec<PolicyId> {
        let mut out = Vec::new();
        let mut stack = alloc::vec![id.clone()];
        while let Some(cur) = stack.pop() {
            let kids = self.children(&cur);
            stack.extend(kids.iter().rev().cloned());
            out.push(cur);
        }
        out
    }

    pub fn classification(&self) -> &ClassificationResult {
        &self.classification
    }

    /// Deterministic text form used to compare snapshots byte-for-byte.
    pub fn canonical_text(&self) -> String {
        let mut out = format!("version {}\n", self.version);
        out.push_str(&serialize_policy_doc(self.policies.values()));
        out
    }

    pub fn facet_query(&self, filter: &FacetFilter) -> Result<Vec<FacetMatch>, StoreError> {
        if let Some(regions) = &filter.regions {
            if let Some(missing) = regions.iter().find(|r| !self.regions.contains(r)) {
                return Err(StoreError::UnknownFilterRegion(missing.clone()));
            }
        }
        if let Some(class) = &filter.requester_class {
            if !self.taxonomy.contains(class) && !self.pending_terms.contains(class) {
                return Err(StoreError::UnknownFilterClass(class.clone()));
            }
        }
        let mut out = Vec::new();
        for (id, policy) in &self.policies {
            let chain = &self.chains[id];
            let mut matched = Vec::new();
            if let Some(regions) = &filter.regions {
                let hit = chain.iter().any(|l| match &l.restriction {
                    Restriction::LocationWithinAny(set) => !set.is_disjoint(regions),
                    _ => false,
                });
                if !hit {
                    continue;
                }
                matched.push(Facet::Region);
            }
            if let Some(class) = &filter.requester_class {
                let hit = chain.iter().any(|l| match &l.restriction {
                    Restriction::RequesterIsA(c) => self.taxonomy.related(c, class),
                    _ => false,
                });
                if !hit {
                    continue;
                }
                matched.push(Facet::RequesterClass);
            }
            if let Some(freq) = &filter.frequency {
                let hit = chain.iter().any(|l| match &l.restriction {
                    Restriction::FrequencyWithin(r) => r.intersects(freq),
                    _ => false,
                });
                if !hit {
                    continue;
                }
                matched.push(Facet::Frequency);
            }
            if let Some(effect) = filter.effect {
                if EffectFacet::of(policy.effect.as_ref()) != effect {
                    continue;
                }
                matched.push(Facet::Effect);
            }
            out.push(FacetMatch {
                policy_id: id.clone(),
                matched,
            });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EffectFacet {
    Permit,
    Deny,
    PermitWithObligations,
    /// Pure constraint nodes without an effect.
    NoEffect,
}

impl EffectFacet {
    pub fn of(effect: Option<&Effect>) -> Self {
        match effect {
            None => EffectFacet::NoEffect,
            Some(Effect::Permit) => EffectFacet::Permit,
            Some(Effect::Deny) => EffectFacet::Deny,
            Some(Effect::PermitWithObligations(_)) => EffectFacet::PermitWithObligations,
        }
    }
}

/// Conjunctive facet filter; `None` fields do not constrain.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FacetFilter {
    pub regions: Option<BTreeSet<RegionId>>,
    pub requester_class: Option<ClassId>,
    pub frequency: Option<FrequencyRange>,
    pub effect: Option<EffectFacet>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Facet {
    Region,
    RequesterClass,
    Frequency,
    Effect,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FacetMatch {
    pub policy_id: PolicyId,
    pub matched: Vec<Facet>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProvenanceAction {
    Created,
    Revised,
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProvenanceRecord {
    pub assertion_id: u64,
    pub policy_id: PolicyId,
    pub action: ProvenanceAction,
    pub actor: String,
    pub timestamp: DateTime<Utc>,
    /// Store version the assertion produced.
    pub version: u64,
    pub source_note: String,
}

/// Single-writer repository state. Readers take [`PolicyStore::snapshot`] and keep it.
#[derive(Debug, Clone)]
pub struct PolicyStore {
    current: Arc<Snapshot>,
    provenance: Vec<ProvenanceRecord>,
    last_stamp: BTreeMap<PolicyId, DateTime<Utc>>,
}

impl PolicyStore {
    pub fn new(taxonomy: Arc<Taxonomy>, regions: Arc<RegionStore>) -> Self {
        Self {
            current: Arc::new(Snapshot::empty(taxonomy, regions)),
            provenance: Vec::new(),
            last_stamp: BTreeMap::new(),
        }
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        Arc::clone(&self.current)
    }

    pub fn version(&self) -> u64 {
        self.current.version
    }

    pub fn provenance(&self) -> &[ProvenanceRecord] {
        &self.provenance
    }

    pub fn provenance_of(&self, id: &PolicyId) -> impl Iterator<Item = &ProvenanceRecord> + '_ {
        let id = id.clone();
        self.provenance.iter().filter(move |r| r.policy_id == id)
    }

    fn publish(&mut self, policies: BTreeMap<PolicyId, Policy>) -> Result<u64, StoreError> {
        let version = self.current.version + 1;
        let snap = Snapshot::build(
            version,
            policies,
            self.current.taxonomy_arc(),
            self.current.regions_arc(),
        )?;
        self.current = Arc::new(snap);
        Ok(version)
    }

    fn record(
        &mut self,
        policy: &PolicyId,
        action: ProvenanceAction,
        actor: &str,
        at: DateTime<Utc>,
        note: String,
    ) {
        let stamp = match self.last_stamp.get(policy) {
            Some(prev) if *prev > at => *prev,
            _ => at,
        };
        self.last_stamp.insert(policy.clone(), stamp);
        self.provenance.push(ProvenanceRecord {
            assertion_id: self.provenance.len() as u64 + 1,
            policy_id: policy.clone(),
            action,
            actor: actor.into(),
            timestamp: stamp,
            version: self.current.version,
            source_note: note,
        });
    }

    /// Adds every policy in `doc` atomically. An empty document leaves the version unchanged.
    pub fn add_policies(
        &mut self,
        doc: &PolicyDocument,
        actor: &str,
        at: DateTime<Utc>,
    ) -> Result<u64, StoreError> {
        if doc.policies.is_empty() {
            return Ok(self.version());
        }
        let mut next = self.current.policies.clone();
        for p in &doc.policies {
            if next.insert(p.id.clone(), p.clone()).is_some() {
                return Err(StoreError::DuplicateId(p.id.clone()));
            }
        }
        let version = self.publish(next)?;
        for p in &doc.policies {
            let note = p.meta.source_document.clone().unwrap_or_default();
            self.record(&p.id, ProvenanceAction::Created, actor, at, note);
        }
        Ok(version)
    }

    pub fn revise_policy(
        &mut self,
        id: &PolicyId,
        new_body: Policy,
        actor: &str,
        at: DateTime<Utc>,
    ) -> Result<u64, StoreError> {
        if new_body.id != *id {
            return Err(StoreError::IdMismatch {
                target: id.clone(),
                body: new_body.id,
            });
        }
        if !self.current.policies.contains_key(id) {
            return Err(StoreError::UnknownPolicy(id.clone()));
        }
        let note = new_body.meta.source_document.clone().unwrap_or_default();
        let mut next = self.current.policies.clone();
        next.insert(id.clone(), new_body);
        let version = self.publish(next)?;
        self.record(id, ProvenanceAction::Revised, actor, at, note);
        Ok(version)
    }

    /// Deletes `id`; with `cascade` its declared descendants go too. Returns the removed ids.
    pub fn delete_policy(
        &mut self,
        id: &PolicyId,
        cascade: bool,
        actor: &str,
        at: DateTime<Utc>,
    ) -> Result<(u64, Vec<PolicyId>), StoreError> {
        if !self.current.policies.contains_key(id) {
            return Err(StoreError::UnknownPolicy(id.clone()));
        }
        let kids = self.current.children(id);
        if !kids.is_empty() && !cascade {
            return Err(StoreError::HasChildren {
                policy: id.clone(),
                children: kids.to_vec(),
            });
        }
        let doomed = self.current.subtree(id);
        let mut next = self.current.policies.clone();
        for d in &doomed {
            next.remove(d);
        }
        let version = self.publish(next)?;
        for d in doomed.iter().rev() {
            self.record(d, ProvenanceAction::Deleted, actor, at, String::new());
        }
        Ok((version, doomed))
    }
}
