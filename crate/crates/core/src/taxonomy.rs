//! Device/requester class hierarchy with cached reflexive-transitive closure.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::model::{Affiliation, ClassId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaxonomyError {
    #[error("duplicate class '{0}'")]
    DuplicateClass(ClassId),
    #[error("class '{child}' names unknown parent '{parent}'")]
    UnknownParent { child: ClassId, parent: ClassId },
    #[error("subclass cycle through '{0}'")]
    Cycle(ClassId),
}

/// One entry of a taxonomy file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassEntry {
    pub class_id: ClassId,
    pub parent_ids: Vec<ClassId>,
    pub affiliation: Option<Affiliation>,
}

impl ClassEntry {
    pub fn new(class_id: &str, parents: &[&str]) -> Self {
        Self {
            class_id: class_id.into(),
            parent_ids: parents.iter().map(|p| ClassId::from(*p)).collect(),
            affiliation: None,
        }
    }

    pub fn affiliated(mut self, a: Affiliation) -> Self {
        self.affiliation = Some(a);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Taxonomy {
    parents: BTreeMap<ClassId, BTreeSet<ClassId>>,
    affiliation_of: BTreeMap<ClassId, Affiliation>,
    /// Reflexive-transitive ancestor sets.
    ancestors: BTreeMap<ClassId, BTreeSet<ClassId>>,
}

impl Taxonomy {
    pub fn new(entries: impl IntoIterator<Item = ClassEntry>) -> Result<Self, TaxonomyError> {
        let mut parents: BTreeMap<ClassId, BTreeSet<ClassId>> = BTreeMap::new();
        let mut affiliation_of = BTreeMap::new();
        for e in entries {
            if parents.contains_key(&e.class_id) {
                return Err(TaxonomyError::DuplicateClass(e.class_id));
            }
            if let Some(a) = e.affiliation {
                affiliation_of.insert(e.class_id.clone(), a);
            }
            parents.insert(e.class_id, e.parent_ids.into_iter().collect());
        }
        for (child, ps) in &parents {
            if let Some(p) = ps.iter().find(|p| !parents.contains_key(*p)) {
                return Err(TaxonomyError::UnknownParent {
                    child: child.clone(),
                    parent: p.clone(),
                });
            }
        }

        // Kahn's algorithm: parents before children, so closures compose.
        let mut pending: BTreeMap<&ClassId, usize> =
            parents.iter().map(|(c, ps)| (c, ps.len())).collect();
        let mut children: BTreeMap<&ClassId, Vec<&ClassId>> = BTreeMap::new();
        for (c, ps) in &parents {
            for p in ps {
                children.entry(p).or_default().push(c);
            }
        }
        let mut ready: Vec<&ClassId> = pending
            .iter()
            .filter(|(_, n)| **n == 0)
            .map(|(c, _)| *c)
            .collect();
        let mut ancestors: BTreeMap<ClassId, BTreeSet<ClassId>> = BTreeMap::new();
        while let Some(c) = ready.pop() {
            let mut set = BTreeSet::new();
            set.insert(c.clone());
            for p in &parents[c] {
                set.extend(ancestors[p].iter().cloned());
            }
            ancestors.insert(c.clone(), set);
            for ch in children.get(c).into_iter().flatten() {
                let n = pending.get_mut(ch).expect("child registered");
                *n -= 1;
                if *n == 0 {
                    ready.push(ch);
                }
            }
        }
        if ancestors.len() != parents.len() {
            let stuck = parents
                .keys()
                .find(|c| !ancestors.contains_key(*c))
                .expect("some class unresolved");
            return Err(TaxonomyError::Cycle(stuck.clone()));
        }
        Ok(Self {
            parents,
            affiliation_of,
            ancestors,
        })
    }

    pub fn contains(&self, class: &ClassId) -> bool {
        self.parents.contains_key(class)
    }

    pub fn classes(&self) -> impl Iterator<Item = &ClassId> {
        self.parents.keys()
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn parents_of(&self, class: &ClassId) -> impl Iterator<Item = &ClassId> {
        self.parents.get(class).into_iter().flatten()
    }

    pub fn affiliation_of(&self, class: &ClassId) -> Option<Affiliation> {
        self.affiliation_of.get(class).copied()
    }

    /// Reflexive-transitive ancestors; empty for unknown classes.
    pub fn ancestors(&self, class: &ClassId) -> impl Iterator<Item = &ClassId> {
        self.ancestors.get(class).into_iter().flatten()
    }

    /// `child ⊑* ancestor`: equal, or reachable through subclass edges.
    pub fn is_subclass_of(&self, child: &ClassId, ancestor: &ClassId) -> bool {
        child == ancestor
            || self
                .ancestors
                .get(child)
                .is_some_and(|set| set.contains(ancestor))
    }

    pub fn related(&self, a: &ClassId, b: &ClassId) -> bool {
        self.is_subclass_of(a, b) || self.is_subclass_of(b, a)
    }

    pub fn entries(&self) -> impl Iterator<Item = ClassEntry> + '_ {
        self.parents.iter().map(|(c, ps)| ClassEntry {
            class_id: c.clone(),
            parent_ids: ps.iter().cloned().collect(),
            affiliation: self.affiliation_of(c),
        })
    }
}
